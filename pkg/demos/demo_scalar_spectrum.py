"""
Scalar wave: spectra and the exact propagator
=============================================

Dirichlet and Robin spectra on the unit interval, compared with their
continuum values, then a leapfrog run measured against the closed-form
solution.
"""

# %%
import numpy as np
from scipy.optimize import brentq

from presymfield import Dirichlet, GridSpec, Robin, ScalarModel, WaveState, eigendecompose, leapfrog, propagate

# %%
# Dirichlet eigenvalues approach (k pi)^2 at second order.
for n in (16, 32, 64):
    lam = ScalarModel(GridSpec.box(1, n), Dirichlet()).decomposition.eigenvalues[:2]
    print(n, [f"{abs(x - (k * np.pi) ** 2):.3e}" for k, x in enumerate(lam, 1)])

# %%
# With the Robin condition dQ/dn = B Q, B = -1, the lowest mode is cos(k(x - 1/2))
# where k tan(k/2) = 1.
k = brentq(lambda k: k * np.tan(k / 2) - 1.0, 0.1, 3.0)
for n in (25, 50, 100):
    lam = ScalarModel(GridSpec.box(1, n), Robin(-1.0)).decomposition.eigenvalues[0]
    print(n, f"{lam:.10f}", f"error {abs(lam - k * k):.2e}")

# %%
# Leapfrog against the exact propagator at t = 1.  Halving dt cuts the gap
# by about four.
model = ScalarModel(GridSpec.box(1, 32), Dirichlet())
op = -model.laplacian
dec = eigendecompose(op)
x = model.grid.coordinates("node")[model.space.index, 0]
s = WaveState(np.sin(np.pi * x) + 0.3 * np.sin(3 * np.pi * x), np.zeros_like(x))
exact = propagate(dec, s, 1.0)
prev = None
for dt in (0.02, 0.01, 0.005):
    err = np.abs(leapfrog(op, s, 1.0, dt).Q - exact.Q).max()
    print(f"dt={dt:<6} error={err:.3e}" + (f" ratio={prev / err:.2f}" if prev else ""))
    prev = err
