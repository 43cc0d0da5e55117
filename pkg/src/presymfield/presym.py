"""Constraint algorithm for finite-dimensional linear presymplectic systems.

Conventions
-----------
The form is stored as an antisymmetric matrix ``Omega`` with
``omega(x, y) = x @ Omega @ y``.  The flat map sends a vector to the covector
``omega(x, .)``, i.e. ``x @ Omega``.  Hamilton's equation ``i_X omega = dH``
therefore reads ``Omega.T @ X = A @ m + b``.

Constraint sets are affine subspaces: the Hamiltonian is quadratic, so every
set produced by the iteration is the solution set of linear equations with a
possibly nonzero right-hand side.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .linalg import default_tol


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class QuadraticHamiltonian:
    """H(x) = 1/2 x.A.x + b.x + c with A symmetrised on construction."""

    A: np.ndarray
    b: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if b.size != A.shape[0]:
            raise DimensionError(f"b has length {b.size}, expected {A.shape[0]}")
        object.__setattr__(self, "A", 0.5 * (A + A.T))
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * x @ self.A @ x + self.b @ x + self.c

    def gradient(self, x):
        return self.A @ np.asarray(x, dtype=float) + self.b

    @functools.cached_property
    def norm(self) -> float:
        return linalg.spectral_norm(self.A)


@dataclass(frozen=True)
class PresymplecticForm:
    Omega: np.ndarray

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.Omega, dtype=float))
        if W.shape[0] != W.shape[1]:
            raise DimensionError(f"Omega must be square, got {W.shape}")
        object.__setattr__(self, "Omega", 0.5 * (W - W.T))

    @property
    def dim(self) -> int:
        return self.Omega.shape[0]

    def rank(self, tol: float | None = None) -> int:
        tol = default_tol(self.dim) if tol is None else tol
        s = np.linalg.svd(self.Omega, compute_uv=False)
        return linalg.numerical_rank(s, tol)

    def pair(self, x, y) -> float:
        return float(np.asarray(x) @ self.Omega @ np.asarray(y))

    @functools.cached_property
    def norm(self) -> float:
        return linalg.spectral_norm(self.Omega)


@dataclass(frozen=True)
class PresymplecticSystem:
    form: PresymplecticForm
    ham: QuadraticHamiltonian

    def __post_init__(self):
        if self.form.dim != self.ham.dim:
            raise DimensionError(
                f"form has dimension {self.form.dim}, Hamiltonian {self.ham.dim}")

    @classmethod
    def from_arrays(cls, Omega, A, b=None, c=0.0):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.zeros(A.shape[0]) if b is None else b
        return cls(PresymplecticForm(Omega), QuadraticHamiltonian(A, b, c))

    @property
    def dim(self) -> int:
        return self.form.dim

    @property
    def Omega(self):
        return self.form.Omega

    @property
    def A(self):
        return self.ham.A

    @property
    def b(self):
        return self.ham.b


@dataclass(frozen=True)
class AffineSubspace:
    """offset + span(basis); ``empty`` marks the empty set."""

    basis: np.ndarray
    offset: np.ndarray
    tol: float
    empty: bool = False

    @classmethod
    def whole(cls, n: int, tol: float | None = None) -> "AffineSubspace":
        return cls(np.eye(n), np.zeros(n), default_tol(n) if tol is None else tol)

    @classmethod
    def empty_set(cls, n: int, tol: float) -> "AffineSubspace":
        return cls(np.zeros((n, 0)), np.full(n, np.nan), tol, empty=True)

    @classmethod
    def from_constraints(cls, C, d, tol: float | None = None) -> "AffineSubspace":
        """Solution set of C x = d."""
        C = np.atleast_2d(np.asarray(C, dtype=float))
        n = C.shape[1]
        d = np.asarray(d, dtype=float).reshape(-1)
        tol = default_tol(n) if tol is None else tol
        if C.shape[0] == 0:
            return cls.whole(n, tol)
        x0 = linalg.pinv(C, tol) @ d
        scale = linalg.spectral_norm(C) * np.linalg.norm(x0) + np.linalg.norm(d)
        if np.linalg.norm(C @ x0 - d) > 10 * tol * max(scale, 1e-300):
            return cls.empty_set(n, tol)
        return cls(linalg.null_space(C, tol), x0, tol)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        """Dimension of the direction space; -1 for the empty set."""
        return -1 if self.empty else self.basis.shape[1]

    def contains(self, x, rtol: float | None = None) -> bool:
        if self.empty:
            return False
        rtol = self.tol if rtol is None else rtol
        r = np.asarray(x, dtype=float) - self.offset
        resid = r - self.basis @ (self.basis.T @ r)
        ref = max(np.linalg.norm(x), np.linalg.norm(self.offset), 1.0)
        return bool(np.linalg.norm(resid) <= 10 * rtol * ref)

    def project(self, x):
        """Orthogonal projection of a point onto the subspace."""
        r = np.asarray(x, dtype=float) - self.offset
        return self.offset + self.basis @ (self.basis.T @ r)

    def sample(self, rng, count: int = 1):
        """Random points, shape (count, n)."""
        coeffs = rng.standard_normal((count, self.basis.shape[1]))
        return self.offset + coeffs @ self.basis.T

    def direction_contains(self, other: "AffineSubspace") -> bool:
        tol = max(self.tol, other.tol)
        return linalg.span_contains(self.basis, other.basis, 10 * tol)

    def equals(self, other: "AffineSubspace") -> bool:
        if self.empty or other.empty:
            return self.empty and other.empty
        if self.dim != other.dim:
            return False
        return (self.direction_contains(other) and other.direction_contains(self)
                and self.contains(other.offset))

    def canonical_offset(self):
        """Point of the subspace closest to the origin."""
        return self.offset - self.basis @ (self.basis.T @ self.offset)


@dataclass(frozen=True)
class HamiltonianVectorFieldSolution:
    """X(m) = Xmat @ m + xoff (+ any combination of gauge_basis columns)."""

    Xmat: np.ndarray
    xoff: np.ndarray
    gauge_basis: np.ndarray

    @property
    def gauge_dim(self) -> int:
        return self.gauge_basis.shape[1]

    def __call__(self, m):
        return self.Xmat @ np.asarray(m, dtype=float) + self.xoff


@dataclass(frozen=True)
class ConstraintChainResult:
    chain: list
    final: AffineSubspace
    terminated: bool
    steps: int
    vf: HamiltonianVectorFieldSolution | None = None

    @property
    def dims(self) -> list[int]:
        return [M.dim for M in self.chain]

    @property
    def gauge_dim(self) -> int:
        return 0 if self.vf is None else self.vf.gauge_dim


class SubmanifoldClass(enum.Enum):
    LAGRANGIAN = "Lagrangian"
    ISOTROPIC = "Isotropic"
    SECOND_CLASS = "SecondClass"
    FIRST_CLASS = "FirstClass"
    MIXED = "Mixed"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Classification:
    label: SubmanifoldClass
    first_class: bool        # TN^perp ⊆ TN
    second_class: bool       # TN^perp ∩ TN = {0}
    isotropic: bool          # TN ⊆ TN^perp
    lagrangian: bool         # TN = TN^perp
    dim_tangent: int
    dim_orthogonal: int
    dim_intersection: int
    relations: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "class": self.label.value,
            "orthogonal_in_tangent": self.first_class,
            "tangent_in_orthogonal": self.isotropic,
            "relations": {
                "FirstClass": self.first_class,
                "SecondClass": self.second_class,
                "Isotropic": self.isotropic,
                "Lagrangian": self.lagrangian,
            },
            "dim_tangent": self.dim_tangent,
            "dim_symplectic_orthogonal": self.dim_orthogonal,
            "dim_intersection": self.dim_intersection,
        }


def _check_dim(n, *arrays):
    for a in arrays:
        if np.shape(a)[0] != n:
            raise DimensionError(f"dimension mismatch: expected {n}, got {np.shape(a)[0]}")


def flat_map(form: PresymplecticForm, x) -> np.ndarray:
    """The covector omega(x, .)."""
    x = np.asarray(x, dtype=float)
    _check_dim(form.dim, x)
    return x @ form.Omega


def symplectic_orthogonal(form: PresymplecticForm, V: AffineSubspace) -> np.ndarray:
    """Orthonormal basis of {z : omega(v, z) = 0 for all v in span(V.basis)}."""
    _check_dim(form.dim, V.basis)
    if V.empty:
        return np.eye(form.dim)
    scale = form.norm
    return linalg.null_space(V.basis.T @ form.Omega, V.tol, scale=scale)


def solvability_subspace(sys: PresymplecticSystem, M: AffineSubspace) -> AffineSubspace:
    """Points m of M where dH(m) lies in the image of M's directions under flat.

    Uses the identity flat(W) = annihilator(W^perp): dH(m) must vanish on the
    symplectic orthogonal of the direction space.
    """
    n = sys.dim
    _check_dim(n, M.basis, M.offset)
    if M.empty:
        return M
    tol = M.tol
    B, x0 = M.basis, M.offset
    Z = symplectic_orthogonal(sys.form, M)
    if Z.shape[1] == 0:
        return M
    normA = sys.ham.norm
    C = Z.T @ sys.A @ B
    d = -Z.T @ (sys.A @ x0 + sys.b)
    if B.shape[1] == 0:
        u = np.zeros(0)
        kernel = np.zeros((0, 0))
    else:
        u = linalg.pinv(C, tol, scale=normA) @ d
        kernel = linalg.null_space(C, tol, scale=normA)
    scale = normA * (np.linalg.norm(x0) + np.linalg.norm(u)) + np.linalg.norm(sys.b)
    resid = np.linalg.norm(C @ u - d) if C.size else np.linalg.norm(d)
    if resid > 10 * tol * scale or (scale == 0.0 and resid > 0.0):
        return AffineSubspace.empty_set(n, tol)
    new_basis = B @ kernel if kernel.size else np.zeros((n, 0))
    return AffineSubspace(new_basis, x0 + B @ u if u.size else x0.copy(), tol)


def solve_vector_field(sys: PresymplecticSystem, N: AffineSubspace) -> HamiltonianVectorFieldSolution:
    """General solution X: N -> TN of Hamilton's equation on N.

    The particular part is the minimum-norm tangent solution of the full
    equation Omega.T X = A m + b.  The gauge part spans TN ∩ TN^perp, the
    directions left free by the equation restricted to TN.
    """
    n = sys.dim
    B = N.basis
    scaleW = sys.form.norm
    if B.shape[1] == 0:
        return HamiltonianVectorFieldSolution(np.zeros((n, n)), np.zeros(n), np.zeros((n, 0)))
    K = linalg.pinv(sys.Omega.T @ B, N.tol, scale=scaleW)
    Xmat = B @ K @ sys.A
    xoff = B @ K @ sys.b
    restricted = B.T @ sys.Omega @ B
    gauge = B @ linalg.null_space(restricted, N.tol, scale=scaleW)
    return HamiltonianVectorFieldSolution(Xmat, xoff, gauge)


def gnh_step(sys: PresymplecticSystem, M: AffineSubspace) -> AffineSubspace:
    return solvability_subspace(sys, M)


def constraint_chain(sys: PresymplecticSystem, max_steps: int = 50,
                     tol: float | None = None,
                     start: AffineSubspace | None = None) -> ConstraintChainResult:
    """Iterate M_{k+1} = {m in M_k : dH(m) in flat(T M_k)} to a fixed point."""
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    n = sys.dim
    tol = default_tol(n) if tol is None else tol
    M = AffineSubspace.whole(n, tol) if start is None else start
    chain = [M]
    for _ in range(max_steps):
        nxt = gnh_step(sys, M)
        if nxt.empty:
            return ConstraintChainResult(chain, nxt, True, len(chain), None)
        if nxt.dim == M.dim:  # nested, so equal dimension means equal sets
            return ConstraintChainResult(chain, M, True, len(chain), solve_vector_field(sys, M))
        chain.append(nxt)
        M = nxt
    return ConstraintChainResult(chain, M, False, len(chain), None)


def classify_submanifold(form: PresymplecticForm, N: AffineSubspace) -> Classification:
    """Relation of TN to its symplectic orthogonal.

    Label precedence: Lagrangian > Isotropic > SecondClass > FirstClass > Mixed.
    The first-class and second-class relations both hold exactly when
    TN^perp = {0}; that case is reported as SecondClass.
    """
    n = form.dim
    TN = N.basis if not N.empty else np.zeros((n, 0))
    perp = symplectic_orthogonal(form, N)
    tol = 10 * N.tol
    inter = linalg.intersect_spans(TN, perp, N.tol)
    first = linalg.span_contains(TN, perp, tol)
    iso = linalg.span_contains(perp, TN, tol)
    second = inter.shape[1] == 0
    lag = first and iso
    if lag:
        label = SubmanifoldClass.LAGRANGIAN
    elif iso:
        label = SubmanifoldClass.ISOTROPIC
    elif second:
        label = SubmanifoldClass.SECOND_CLASS
    elif first:
        label = SubmanifoldClass.FIRST_CLASS
    else:
        label = SubmanifoldClass.MIXED
    return Classification(label, first, second, iso, lag,
                          TN.shape[1], perp.shape[1], inter.shape[1])


def vector_field_residual(sys: PresymplecticSystem, N: AffineSubspace,
                          vf: HamiltonianVectorFieldSolution, m) -> float:
    """Norm of (i_X omega - dH) restricted to TN at the point m."""
    r = sys.Omega.T @ vf(m) - sys.ham.gradient(m)
    return float(np.linalg.norm(N.basis.T @ r))
