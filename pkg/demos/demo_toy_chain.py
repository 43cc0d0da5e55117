"""
Constraint chain of a four-dimensional toy system
=================================================

A degenerate form on R^4 paired with a Hamiltonian that couples a
kinematic coordinate to a gauge-like one.  The chain removes one dimension
per step until it stabilizes on a line.
"""

# %%
# Build the system.  Coordinates are ordered (q1, q2, p1, p2) and the form
# only pairs q1 with p1, so q2 and p2 lie in its kernel.
import numpy as np

from presymfield import PresymplecticSystem, classify_submanifold, constraint_chain

Omega = np.zeros((4, 4))
Omega[0, 2], Omega[2, 0] = 1.0, -1.0
A = np.zeros((4, 4))
A[2, 2] = 1.0                    # p1^2 / 2
A[0, 1] = A[1, 0] = 1.0          # q1 q2
system = PresymplecticSystem.from_arrays(Omega, A)

# %%
# Run the chain.  Each entry of ``dims`` is the dimension of one constraint
# set; the last set is where Hamilton's equation has solutions.
result = constraint_chain(system)
print("chain dimensions:", result.dims)
print("final set basis:\n", np.round(result.final.basis, 12))

# %%
# The solution is not unique: the gauge basis spans the directions left
# free on the final set.
print("gauge directions:", result.vf.gauge_dim)
print(np.round(result.vf.gauge_basis.ravel(), 12))

# %%
# The final line is isotropic: the form vanishes on it.
print(classify_submanifold(system.form, result.final).summary())

# %%
# Capping the number of steps reports the partial chain instead.
partial = constraint_chain(system, max_steps=2)
print("terminated:", partial.terminated, "dims so far:", partial.dims)
