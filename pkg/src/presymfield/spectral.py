"""Mass-weighted eigendecompositions and the closed-form wave propagator.

The operators handled here act as ``Op = M^-1 K`` with ``M`` a positive
diagonal mass and ``K`` symmetric.  Eigenvectors are orthonormal in the
``M`` inner product.  For ``Q'' = -Op Q`` the zero modes drift linearly
and the others rotate with angular frequency ``sqrt(lambda)``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import DiscreteOperator

log = logging.getLogger(__name__)

DENSE_CUTOFF = 4000
CACHE_MAGIC = b"GNHS"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sIQQQd")   # magic, version, n, m, kernel_count, ktol


class SpectralError(RuntimeError):
    """Raised when an operator violates the spectral preconditions."""


class NotNonnegativeError(SpectralError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray      # (n, m), M-orthonormal columns
    mass: np.ndarray
    kernel_count: int
    ktol: float
    op_norm: float
    complete: bool = True

    @property
    def n(self) -> int:
        return self.eigenvectors.shape[0]

    @property
    def m(self) -> int:
        return self.eigenvectors.shape[1]

    @property
    def kernel_vectors(self) -> np.ndarray:
        return self.eigenvectors[:, : self.kernel_count]

    @property
    def range_vectors(self) -> np.ndarray:
        return self.eigenvectors[:, self.kernel_count:]

    @property
    def range_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[self.kernel_count:]

    @property
    def frequencies(self) -> np.ndarray:
        return np.sqrt(np.clip(self.range_eigenvalues, 0.0, None))

    def coefficients(self, x) -> np.ndarray:
        return self.eigenvectors.T @ (self.mass * np.asarray(x, dtype=float))

    def synthesize(self, c) -> np.ndarray:
        return self.eigenvectors @ c

    def inner(self, x, y) -> float:
        return float(np.dot(self.mass * x, y))

    def norm(self, x) -> float:
        return float(np.sqrt(max(self.inner(x, x), 0.0)))

    def complement_norm(self, x) -> float:
        """Mass norm of the part of x outside the decomposed span."""
        x = np.asarray(x, dtype=float)
        return self.norm(x - self.synthesize(self.coefficients(x)))


@dataclass(frozen=True, eq=False)
class WaveState:
    Q: np.ndarray
    V: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        V = np.asarray(self.V, dtype=float)
        if Q.shape != V.shape:
            raise ValueError(f"Q and V shapes differ: {Q.shape} vs {V.shape}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "V", V)


def _split_operator(op, mass):
    """Return (K as sparse symmetric, mass array) for Op = M^-1 K."""
    if isinstance(op, DiscreteOperator):
        if mass is None:
            mass = op.rows.mass
        mat = op.matrix
    else:
        mat = op
    mat = sp.csr_matrix(mat) if sp.issparse(mat) else sp.csr_matrix(np.atleast_2d(np.asarray(mat, dtype=float)))
    n = mat.shape[0]
    if mat.shape != (n, n):
        raise ValueError(f"operator must be square, got {mat.shape}")
    mass = np.ones(n) if mass is None else np.asarray(mass, dtype=float)
    if mass.shape != (n,) or np.any(mass <= 0):
        raise ValueError("mass must be a positive vector matching the operator")
    K = sp.diags(mass) @ mat
    asym = spla.norm(K - K.T, np.inf) if K.nnz else 0.0
    scale = spla.norm(K, np.inf) if K.nnz else 0.0
    if asym > 1e-10 * max(scale, 1e-300):
        raise SpectralError(f"operator is not symmetric in the mass inner product (asymmetry {asym:.3e})")
    return sp.csr_matrix(0.5 * (K + K.T)), mass


def eigendecompose(op, mass=None, ktol: float | None = None, rtol: float = 1e-9,
                   dense_cutoff: int = DENSE_CUTOFF, n_modes: int | None = None) -> SpectralDecomposition:
    """Eigendecomposition of a mass-symmetric nonnegative operator.

    Systems with n <= dense_cutoff are decomposed fully.  Larger systems need
    ``n_modes``; the smallest ``n_modes`` pairs are computed by shift-invert
    Lanczos and the result is flagged incomplete.
    """
    K, mass = _split_operator(op, mass)
    n = K.shape[0]
    dinv = 1.0 / np.sqrt(mass)
    S = sp.diags(dinv) @ K @ sp.diags(dinv)
    if n <= dense_cutoff:
        Sd = S.toarray()
        Sd = 0.5 * (Sd + Sd.T)
        lam, U = scipy.linalg.eigh(Sd) if n else (np.zeros(0), np.zeros((0, 0)))
        op_norm = float(np.max(np.abs(lam))) if n else 0.0
        complete = True
    else:
        if not n_modes:
            raise SpectralError(f"n={n} exceeds the dense cutoff {dense_cutoff}; a mode budget is required")
        k = min(int(n_modes), n - 2)
        op_norm = float(spla.eigsh(S, k=1, which="LM", return_eigenvectors=False, tol=1e-6)[0])
        sigma = -1e-6 * op_norm
        try:
            lam, U = spla.eigsh(S, k=k, sigma=sigma, which="LM", tol=rtol * 1e-3)
        except spla.ArpackNoConvergence as exc:
            lam, U = exc.eigenvalues, exc.eigenvectors
            log.warning("only %d of %d requested pairs converged", len(lam), k)
        order = np.argsort(lam)
        lam, U = lam[order], U[:, order]
        complete = False
    if ktol is None:
        ktol = 1e-9 * op_norm
    ktol = float(ktol)
    if lam.size and lam[0] < -ktol:
        raise NotNonnegativeError(f"operator not nonnegative: eigenvalue {lam[0]:.6g} < -ktol={-ktol:.3g}")
    V = dinv[:, None] * U
    kernel_count = int(np.count_nonzero(np.abs(lam) <= ktol))
    # eigh sorts ascending, so kernel modes come first once negatives are excluded
    return SpectralDecomposition(lam, V, mass, kernel_count, ktol, op_norm, complete)


def check_decomposition(dec: SpectralDecomposition, op, rtol: float = 1e-9) -> tuple[float, float]:
    """Return (max residual / ||Op||, orthonormality defect)."""
    mat = op.matrix if isinstance(op, DiscreteOperator) else op
    R = mat @ dec.eigenvectors - dec.eigenvectors * dec.eigenvalues
    res = np.sqrt(np.sum(dec.mass[:, None] * R**2, axis=0)).max() if dec.m else 0.0
    G = dec.eigenvectors.T @ (dec.mass[:, None] * dec.eigenvectors)
    orth = np.abs(G - np.eye(dec.m)).max() if dec.m else 0.0
    return float(res / max(dec.op_norm, 1e-300)), float(orth)


def _guard_complement(dec, x, complement, what="field"):
    if dec.complete or complement == "truncate":
        return
    if complement != "error":
        raise ValueError(f"unknown complement policy {complement!r}")
    nx = dec.norm(x)
    if dec.complement_norm(x) > 1e-9 * max(nx, 1e-300):
        raise SpectralError(f"{what} has a component outside the partial decomposition; "
                            "pass complement='truncate' to drop it")


def apply_function(dec: SpectralDecomposition, f, x, complement: str = "error") -> np.ndarray:
    """sum_k f(lambda_k) <v_k, x>_M v_k."""
    x = np.asarray(x, dtype=float)
    _guard_complement(dec, x, complement)
    lam = np.where(np.arange(dec.m) < dec.kernel_count, 0.0, dec.eigenvalues)
    with np.errstate(all="ignore"):
        try:
            fv = np.asarray(f(lam), dtype=float) * np.ones(dec.m)
        except Exception:
            fv = np.array([float(f(v)) for v in lam])
    bad = ~np.isfinite(fv)
    if bad.any():
        raise SpectralError(f"function undefined at eigenvalue {lam[np.argmax(bad)]:.17g}")
    return dec.synthesize(fv * dec.coefficients(x))


def kernel_range_split(dec: SpectralDecomposition, x) -> tuple[np.ndarray, np.ndarray]:
    if not dec.complete and dec.m <= dec.kernel_count:
        raise SpectralError("kernel not fully resolved by the partial decomposition")
    x = np.asarray(x, dtype=float)
    Vk = dec.kernel_vectors
    ker = Vk @ (Vk.T @ (dec.mass * x))
    return ker, x - ker


def propagate(dec: SpectralDecomposition, s0: WaveState, t: float, complement: str = "error") -> WaveState:
    """Exact solution of Q'' = -Op Q at time s0.t + t."""
    if t == 0:
        return WaveState(s0.Q.copy(), s0.V.copy(), s0.t)
    _guard_complement(dec, s0.Q, complement, "Q")
    _guard_complement(dec, s0.V, complement, "V")
    k = dec.kernel_count
    q = dec.coefficients(s0.Q)
    v = dec.coefficients(s0.V)
    qk, vk = q[:k], v[:k]
    qr, vr = q[k:], v[k:]
    w = dec.frequencies
    c, s = np.cos(w * t), np.sin(w * t)
    q_new = np.concatenate([qk + t * vk, c * qr + s / w * vr])
    v_new = np.concatenate([vk, -w * s * qr + c * vr])
    Q = dec.synthesize(q_new)
    V = dec.synthesize(v_new)
    return WaveState(Q, V, s0.t + t)


def energy(dec: SpectralDecomposition, s: WaveState) -> float:
    """1/2 (||V||^2 + <Q, Op Q>) evaluated in the eigenbasis."""
    q = dec.coefficients(s.Q)
    v = dec.coefficients(s.V)
    lam = np.where(np.arange(dec.m) < dec.kernel_count, 0.0, dec.eigenvalues)
    return 0.5 * float(np.sum(v**2) + np.sum(lam * q**2))


def symplectic_pairing(mass, s1: WaveState, s2: WaveState) -> float:
    """<q1, v2>_M - <q2, v1>_M."""
    return float(np.dot(mass * s1.Q, s2.V) - np.dot(mass * s2.Q, s1.V))


def leapfrog(op, s0: WaveState, t: float, dt: float) -> WaveState:
    """Velocity Verlet for Q'' = -Op Q; t must be a multiple of dt."""
    mat = op.matrix if isinstance(op, DiscreteOperator) else op
    steps = int(round(t / dt))
    if steps < 0 or abs(steps * dt - t) > 1e-9 * max(abs(t), 1.0):
        raise ValueError("t must be a nonnegative multiple of dt")
    Q, V = s0.Q.copy(), s0.V.copy()
    a = -(mat @ Q)
    for _ in range(steps):
        V += 0.5 * dt * a
        Q += dt * V
        a = -(mat @ Q)
        V += 0.5 * dt * a
    return WaveState(Q, V, s0.t + t)


# -- cache ---------------------------------------------------------------------

def fingerprint_hash(fingerprint: dict) -> str:
    text = json.dumps(fingerprint, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _atomic_write(path: str, data: bytes):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def save_cache(dec: SpectralDecomposition, path: str, fingerprint: dict):
    """Write the binary cache and its JSON sidecar (path + '.json')."""
    head = _HEADER.pack(CACHE_MAGIC, CACHE_VERSION, dec.n, dec.m, dec.kernel_count, dec.ktol)
    body = (np.asarray(dec.eigenvalues, dtype="<f8").tobytes()
            + np.asfortranarray(dec.eigenvectors, dtype="<f8").tobytes(order="F"))
    _atomic_write(path, head + body)
    side = {"fingerprint": fingerprint_hash(fingerprint), "op_norm": dec.op_norm,
            "complete": dec.complete, "version": CACHE_VERSION}
    _atomic_write(path + ".json", json.dumps(side, sort_keys=True, indent=1).encode())


def load_cache(path: str, fingerprint: dict, mass) -> SpectralDecomposition | None:
    """Read a cache; None if it is missing, corrupt or stale (with a warning)."""
    side_path = path + ".json"
    if not (os.path.exists(path) and os.path.exists(side_path)):
        return None
    try:
        with open(side_path) as fh:
            side = json.load(fh)
        with open(path, "rb") as fh:
            raw = fh.read()
        magic, version, n, m, kc, ktol = _HEADER.unpack_from(raw)
    except (OSError, ValueError, struct.error) as exc:
        warnings.warn(f"unreadable eigen cache {path}: {exc}")
        return None
    if side.get("fingerprint") != fingerprint_hash(fingerprint):
        warnings.warn(f"stale eigen cache {path}: fingerprint mismatch, rebuilding")
        return None
    mass = np.asarray(mass, dtype=float)
    expected = _HEADER.size + 8 * (m + n * m)
    if magic != CACHE_MAGIC or version != CACHE_VERSION or len(raw) != expected or mass.shape != (n,):
        warnings.warn(f"corrupt eigen cache {path}, rebuilding")
        return None
    off = _HEADER.size
    lam = np.frombuffer(raw, dtype="<f8", count=m, offset=off).astype(float)
    vec = np.frombuffer(raw, dtype="<f8", count=n * m, offset=off + 8 * m).reshape((n, m), order="F").astype(float)
    return SpectralDecomposition(lam, vec, mass, int(kc), float(ktol), float(side["op_norm"]),
                                 bool(side["complete"]))


def cached_eigendecompose(op, fingerprint: dict, cache_dir: str | None, mass=None, **kw) -> SpectralDecomposition:
    """eigendecompose with an on-disk cache keyed by the fingerprint hash."""
    if isinstance(op, DiscreteOperator) and mass is None:
        mass = op.rows.mass
    fp = dict(fingerprint, ktol=kw.get("ktol"), n_modes=kw.get("n_modes"))
    if cache_dir is None:
        return eigendecompose(op, mass, **kw)
    os.makedirs(cache_dir, exist_ok=True)
    path = os.path.join(cache_dir, f"eig-{fingerprint_hash(fp)[:16]}.gnhs")
    dec = load_cache(path, fp, mass)
    if dec is None:
        dec = eigendecompose(op, mass, **kw)
        save_cache(dec, path, fp)
    return dec
