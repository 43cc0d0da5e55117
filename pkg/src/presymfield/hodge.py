"""Discrete Hodge decomposition of edge fields.

``u = harmonic + transverse + longitudinal``, mutually orthogonal in the edge
mass inner product.  The longitudinal part is a gradient obtained from a
Poisson solve, the harmonic part is the projection onto the kernel of the
vector Laplacian, and the transverse part is what is left.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (BoundaryCondition, Dirichlet, EntitySpace, GridSpec, Neumann, build_curl,
                   build_curl_curl, build_grad, build_scalar_laplacian, build_vector_laplacian)
from .spectral import DENSE_CUTOFF, eigendecompose


class PoissonError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class HarmonicBasis:
    vectors: np.ndarray     # (n_edges, dim), mass-orthonormal

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True, eq=False)
class HodgeDecomposition:
    harmonic: np.ndarray
    transverse: np.ndarray
    longitudinal: np.ndarray
    bc: BoundaryCondition
    potential: np.ndarray | None = None

    @property
    def physical(self) -> np.ndarray:
        return self.harmonic + self.transverse

    def parts(self):
        return self.harmonic, self.transverse, self.longitudinal


def _check_vector_bc(bc: BoundaryCondition):
    if not bc.is_vector:
        raise ValueError(f"Hodge decomposition needs a vector bc, got {bc.kind}")


def _scalar_bc(bc: BoundaryCondition) -> BoundaryCondition:
    return Dirichlet() if bc.kind == "relative" else Neumann()


class HodgeProjector:
    """Factorized projectors for one (grid, bc) pair."""

    def __init__(self, grid: GridSpec, bc: BoundaryCondition, ktol: float | None = None,
                 gauge: str | None = "zero-mean"):
        _check_vector_bc(bc)
        self.grid, self.bc, self.ktol, self.gauge = grid, bc, ktol, gauge
        self.grad = build_grad(grid, bc)
        self.edges: EntitySpace = self.grad.rows
        self.nodes: EntitySpace = self.grad.cols
        self.me = self.edges.mass
        self.mn = self.nodes.mass

    @functools.cached_property
    def _poisson(self):
        G = self.grad.matrix
        K = (G.T @ sp.diags(self.me) @ G).tocsc()
        if self.bc.kind == "absolute":
            if self.gauge != "zero-mean":
                raise PoissonError("Neumann Poisson problem is singular: the zero-mean gauge on the "
                                   "potential is missing")
            c = self.mn[:, None]
            K = sp.bmat([[K, sp.csc_matrix(c)], [sp.csc_matrix(c.T), None]], format="csc")
        try:
            return spla.splu(K)
        except RuntimeError as exc:
            raise PoissonError(f"Poisson factorization failed: {exc}") from exc

    def potential(self, u) -> np.ndarray:
        """phi with grad phi the mass-orthogonal projection of u onto gradients."""
        u = self._as_field(u)
        rhs = self.grad.matrix.T @ (self.me * u)
        if self.bc.kind == "absolute":
            rhs = np.append(rhs, 0.0)
        phi = self._poisson.solve(rhs)
        return phi[: self.nodes.size]

    def longitudinal(self, u) -> np.ndarray:
        return self.grad.matrix @ self.potential(u)

    @functools.cached_property
    def harmonic(self) -> HarmonicBasis:
        L = build_vector_laplacian(self.grid, self.bc)
        n = L.shape[0]
        if n <= DENSE_CUTOFF:
            dec = eigendecompose(L, self.me, ktol=self.ktol)
            return HarmonicBasis(dec.kernel_vectors.copy())
        # large grids: a handful of the lowest modes is enough to expose the kernel
        dec = eigendecompose(L, self.me, ktol=self.ktol, n_modes=min(12, n - 2))
        return HarmonicBasis(dec.kernel_vectors.copy())

    def harmonic_part(self, u) -> np.ndarray:
        H = self.harmonic.vectors
        return H @ (H.T @ (self.me * self._as_field(u)))

    def decompose(self, u) -> HodgeDecomposition:
        u = self._as_field(u)
        phi = self.potential(u)
        lon = self.grad.matrix @ phi
        har = self.harmonic_part(u - lon)
        tra = u - lon - har
        return HodgeDecomposition(har, tra, lon, self.bc, phi)

    def project_physical(self, u) -> np.ndarray:
        u = self._as_field(u)
        return u - self.longitudinal(u)

    def _as_field(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.edges.size,):
            raise ValueError(f"edge field has {u.shape[0] if u.ndim else 0} entries, "
                             f"expected {self.edges.size} for {self.bc.kind} bc")
        return u


@functools.lru_cache(maxsize=32)
def projector(grid: GridSpec, bc: BoundaryCondition) -> HodgeProjector:
    return HodgeProjector(grid, bc)


def harmonic_basis(grid: GridSpec, bc: BoundaryCondition) -> HarmonicBasis:
    return projector(grid, bc).harmonic


def hodge_decompose(grid: GridSpec, bc: BoundaryCondition, u) -> HodgeDecomposition:
    return projector(grid, bc).decompose(u)


def project_physical(grid: GridSpec, bc: BoundaryCondition, P) -> np.ndarray:
    return projector(grid, bc).project_physical(P)


def eigen_hodge_decompose(grid: GridSpec, bc: BoundaryCondition, u) -> HodgeDecomposition:
    """Reference decomposition built from eigenvectors alone.

    Longitudinal modes are normalized gradients of the scalar Laplacian
    eigenvectors (Dirichlet for relative, Neumann for absolute); transverse
    modes are curl-curl eigenvectors with nonzero eigenvalue.
    """
    _check_vector_bc(bc)
    u = np.asarray(u, dtype=float)
    g = build_grad(grid, bc)
    me = g.rows.mass
    lap = build_scalar_laplacian(grid, _scalar_bc(bc))
    sdec = eigendecompose(-lap)
    phis = sdec.range_vectors
    modes_l = (g.matrix @ phis) / np.sqrt(sdec.range_eigenvalues)
    lon = modes_l @ (modes_l.T @ (me * u))
    if grid.dim > 1:
        cdec = eigendecompose(build_curl_curl(grid, bc))
        modes_t = cdec.range_vectors
        tra = modes_t @ (modes_t.T @ (me * u))
    else:
        tra = np.zeros_like(u)
    return HodgeDecomposition(u - lon - tra, tra, lon, bc)


def curl_of(grid: GridSpec, bc: BoundaryCondition, u) -> np.ndarray:
    return build_curl(grid, bc) @ u


def orthogonality_defect(dec: HodgeDecomposition, mass) -> float:
    """Largest |<a, b>_M| over the three pairs, relative to ||a + b + c||_M^2."""
    parts = dec.parts()
    total = sum(parts)
    scale = max(float(np.dot(mass * total, total)), 1e-300)
    worst = 0.0
    for i in range(3):
        for j in range(i + 1, 3):
            worst = max(worst, abs(float(np.dot(mass * parts[i], parts[j]))))
    return worst / scale


__all__ = ["HarmonicBasis", "HodgeDecomposition", "HodgeProjector", "PoissonError",
           "curl_of", "eigen_hodge_decompose", "harmonic_basis", "hodge_decompose",
           "orthogonality_defect",
           "project_physical", "projector"]
