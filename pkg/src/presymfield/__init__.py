"""Linear presymplectic constraint analysis for discretized field theories."""

from .grid import (Absolute, BoundaryCondition, Dirichlet, DiscreteOperator, EntitySpace, GridSpec,
                   Neumann, Relative, Robin, build_curl, build_curl_curl, build_grad,
                   build_scalar_laplacian, build_trace, build_vector_laplacian, build_weak_div)
from .hodge import (HarmonicBasis, HodgeDecomposition, HodgeProjector, harmonic_basis,
                    hodge_decompose, project_physical)
from .models import (MaxwellModel, PhaseSpaceState, ReducedState, ScalarModel,
                     analyze, assemble_maxwell_system, assemble_scalar_system, check_constraints,
                     evolve_maxwell, evolve_scalar, gauge_transform, reduce, unreduce)
from .presym import (AffineSubspace, Classification, ConstraintChainResult,
                     HamiltonianVectorFieldSolution, PresymplecticForm, PresymplecticSystem,
                     QuadraticHamiltonian, SubmanifoldClass, classify_submanifold,
                     constraint_chain, flat_map, gnh_step, solve_vector_field,
                     symplectic_orthogonal)
from .spectral import (NotNonnegativeError, SpectralDecomposition, SpectralError, WaveState,
                       apply_function, eigendecompose, kernel_range_split, leapfrog,
                       propagate)

__version__ = "0.1.0"
