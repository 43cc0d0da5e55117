"""Rank-revealing helpers shared by the constraint and spectral code.

All rank decisions go through :func:`numerical_rank` so that a single
threshold convention is used everywhere: a singular value counts as zero
when it is below ``tol * scale``, where ``scale`` defaults to the largest
singular value of the matrix itself.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


def default_tol(n: int) -> float:
    return 1e-10 * max(int(n), 1)


def numerical_rank(s: np.ndarray, tol: float, scale: float | None = None) -> int:
    if s.size == 0:
        return 0
    ref = float(s[0]) if scale is None else float(scale)
    if ref <= 0.0:
        return 0
    return int(np.count_nonzero(s > tol * ref))


def _svd(a: np.ndarray, full: bool):
    # gesdd is several times faster; gesvd is the robust fallback
    try:
        return scipy.linalg.svd(a, full_matrices=full, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(a, full_matrices=full, lapack_driver="gesvd")


def null_space(a: np.ndarray, tol: float, scale: float | None = None) -> np.ndarray:
    """Orthonormal basis (columns) of the null space of ``a``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    m, n = a.shape
    if n == 0:
        return np.zeros((0, 0))
    if m == 0:
        return np.eye(n)
    _, s, vh = _svd(a, True)
    r = numerical_rank(s, tol, scale)
    return vh[r:].T.copy()


def orth(a: np.ndarray, tol: float, scale: float | None = None) -> np.ndarray:
    """Orthonormal basis (columns) of the column span of ``a``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    m, n = a.shape
    if n == 0 or m == 0:
        return np.zeros((m, 0))
    u, s, _ = _svd(a, False)
    r = numerical_rank(s, tol, scale)
    return u[:, :r].copy()


def pinv(a: np.ndarray, tol: float, scale: float | None = None) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    m, n = a.shape
    if m == 0 or n == 0:
        return np.zeros((n, m))
    u, s, vh = _svd(a, False)
    r = numerical_rank(s, tol, scale)
    return (vh[:r].T / s[:r]) @ u[:, :r].T


def spectral_norm(a: np.ndarray) -> float:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return 0.0
    return float(scipy.linalg.svdvals(a)[0])


def principal_angles(b1: np.ndarray, b2: np.ndarray) -> np.ndarray:
    """Principal angles between two column spans (radians, descending)."""
    if b1.shape[1] == 0 or b2.shape[1] == 0:
        return np.zeros(0)
    return scipy.linalg.subspace_angles(b1, b2)


def span_contains(outer: np.ndarray, inner: np.ndarray, tol: float) -> bool:
    """True if every column of ``inner`` lies in span(``outer``).

    ``outer`` must have orthonormal columns.
    """
    if inner.shape[1] == 0:
        return True
    if outer.shape[1] == 0:
        return bool(np.linalg.norm(inner) <= tol)
    resid = inner - outer @ (outer.T @ inner)
    ref = max(np.linalg.norm(inner, axis=0).max(), 1.0)
    return bool(np.linalg.norm(resid, 2) <= tol * ref)


def intersect_spans(b1: np.ndarray, b2: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal basis of span(b1) ∩ span(b2); both inputs orthonormal."""
    n = b1.shape[0]
    if b1.shape[1] == 0 or b2.shape[1] == 0:
        return np.zeros((n, 0))
    # x = b1 u = b2 v  <=>  [b1, -b2] (u, v) = 0
    ker = null_space(np.hstack([b1, -b2]), tol, scale=1.0)
    return orth(b1 @ ker[: b1.shape[1]], tol, scale=1.0)
