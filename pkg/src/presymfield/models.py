"""Scalar and Maxwell field models as linear presymplectic systems.

States are stored on the full retained layout (all nodes / all edges of the
domain); the unknowns of each model live on the boundary-condition subspace
and the remaining entries must vanish.

Scalar model, coordinates x = (Q, P) on the bc node space::

    Omega = [[0, M], [-M, 0]]      H = 1/2 P.M.P + 1/2 Q.K.Q

Maxwell model, coordinates x = (Qperp, Q, P) with Qperp on the bc node space
and Q, P on the bc edge space::

    Omega pairs Q with P through the edge mass
    H = 1/2 P.Me.P - P.Me.grad(Qperp) + 1/2 Q.C^T Mf C.Q

The momentum conjugate to Qperp is identically zero and is left out, so the
form is degenerate along Qperp.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import grid as g
from .hodge import HodgeProjector
from .presym import (AffineSubspace, PresymplecticSystem, classify_submanifold,
                     constraint_chain)
from .spectral import WaveState, eigendecompose, propagate

CTOL = 1e-8


class ConstraintViolation(ValueError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True, eq=False)
class PhaseSpaceState:
    """Q, P on nodes (scalar) or edges (Maxwell); Qperp on nodes for Maxwell."""

    Q: np.ndarray
    P: np.ndarray
    Qperp: np.ndarray | None = None
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "Q", np.asarray(self.Q, dtype=float))
        object.__setattr__(self, "P", np.asarray(self.P, dtype=float))
        if self.Qperp is not None:
            object.__setattr__(self, "Qperp", np.asarray(self.Qperp, dtype=float))
        if self.Q.shape != self.P.shape:
            raise ValueError("Q and P must have the same layout")


@dataclass(frozen=True, eq=False)
class ReducedState:
    qT: np.ndarray
    pT: np.ndarray
    qh: np.ndarray
    ph: np.ndarray
    t: float = 0.0


def _check_len(name, arr, n):
    if arr.shape != (n,):
        raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")


def _max_abs(x) -> float:
    return float(np.max(np.abs(x))) if np.size(x) else 0.0


def _outward_derivative(grid: g.GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """One-sided outward normal derivative operator at boundary nodes.

    Returns (D, boundary_positions).  At corners the available axes are
    averaged; reentrant corners (no one-sided axis) get a zero row.
    """
    G = g.build_grad(grid).matrix.tocsc()
    Gr = G.tocsr()
    dirs = grid.edge_directions()
    bpos = np.flatnonzero(grid.boundary_mask("node"))
    rows, cols, vals = [], [], []
    for r, b in enumerate(bpos):
        col = G[:, b]
        edges, signs = col.indices, col.data
        per_axis = {}
        for e, s in zip(edges, signs):
            per_axis.setdefault(dirs[e], []).append((e, s))
        usable = [v[0] for v in per_axis.values() if len(v) == 1]
        for e, s in usable:
            # head node (s > 0): outward is +axis; tail node: derivative flips sign
            row = Gr[e]
            w = np.sign(s) / len(usable)
            rows.extend([r] * row.nnz)
            cols.extend(row.indices)
            vals.extend(w * row.data)
    D = sp.csr_matrix((vals, (rows, cols)), shape=(bpos.size, grid.count("node")))
    return D, bpos


# -- scalar ---------------------------------------------------------------------

class ScalarModel:
    """Scalar wave field with Dirichlet, Neumann or Robin bc."""

    kind = "scalar"

    def __init__(self, grid: g.GridSpec, bc: g.BoundaryCondition, ktol: float | None = None):
        if not bc.is_scalar:
            raise ValueError(f"scalar model needs a scalar bc, got {bc.kind}")
        self.grid, self.bc, self.ktol = grid, bc, ktol
        self.laplacian = g.build_scalar_laplacian(grid, bc)
        self.space = self.laplacian.rows
        self.mass = self.space.mass

    @functools.cached_property
    def stiffness(self) -> sp.csr_matrix:
        return sp.csr_matrix(-self.laplacian.stiffness())

    @functools.cached_property
    def decomposition(self):
        return eigendecompose(-self.laplacian, ktol=self.ktol)

    def fingerprint(self) -> dict:
        return {"model": "scalar", "grid": self.grid.fingerprint(), "bc": self.bc.fingerprint()}

    @property
    def dim(self) -> int:
        return 2 * self.space.size

    def system(self) -> PresymplecticSystem:
        n = self.space.size
        M = np.diag(self.mass)
        Omega = np.block([[np.zeros((n, n)), M], [-M, np.zeros((n, n))]])
        A = np.block([[self.stiffness.toarray(), np.zeros((n, n))], [np.zeros((n, n)), M]])
        return PresymplecticSystem.from_arrays(Omega, A)

    def pack(self, s: PhaseSpaceState) -> np.ndarray:
        return np.concatenate([self.space.restrict(s.Q), self.space.restrict(s.P)])

    def unpack(self, x, t: float = 0.0) -> PhaseSpaceState:
        n = self.space.size
        return PhaseSpaceState(self.space.embed(x[:n]), self.space.embed(x[n:]), None, t)

    def vector_field(self, s: PhaseSpaceState) -> PhaseSpaceState:
        """(dQ/dt, dP/dt) = (P, Laplacian Q)."""
        Q = self.space.restrict(s.Q)
        P = self.space.restrict(s.P)
        return PhaseSpaceState(self.space.embed(P), self.space.embed(self.laplacian @ Q), None, s.t)

    def state(self, Q, P, t: float = 0.0) -> PhaseSpaceState:
        """Build a full-layout state from values on the model's node space."""
        return PhaseSpaceState(self.space.embed(Q), self.space.embed(P), None, t)

    def random_state(self, rng) -> PhaseSpaceState:
        n = self.space.size
        return self.state(rng.standard_normal(n), rng.standard_normal(n))

    def energy(self, s: PhaseSpaceState) -> float:
        Q = self.space.restrict(s.Q)
        P = self.space.restrict(s.P)
        return 0.5 * float(P @ (self.mass * P) + Q @ (self.stiffness @ Q))

    def check_constraints(self, s: PhaseSpaceState) -> dict:
        nn = self.grid.count("node")
        _check_len("Q", s.Q, nn)
        _check_len("P", s.P, nn)
        bmask = self.grid.boundary_mask("node")
        rep = {}
        if self.bc.kind == "dirichlet":
            rep["nodal_Q"] = _max_abs(s.Q[bmask])
            rep["nodal_P"] = _max_abs(s.P[bmask])
        else:
            D, bpos = _outward_derivative(self.grid)
            B = self.bc.robin_values(bpos.size) if self.bc.kind == "robin" else np.zeros(bpos.size)
            rep["robin_boundary"] = _max_abs(B * s.Q[bpos] - D @ s.Q)
        return rep

    def evolve(self, s: PhaseSpaceState, t: float) -> PhaseSpaceState:
        self._require_layout(s)
        w = WaveState(self.space.restrict(s.Q), self.space.restrict(s.P))
        out = propagate(self.decomposition, w, t)
        return self.state(out.Q, out.V, s.t + t)

    def _require_layout(self, s):
        rep = self.check_constraints(s)
        bad = {k: v for k, v in rep.items() if k.startswith("nodal")}
        scale = max(_max_abs(s.Q), _max_abs(s.P), 1e-300)
        worst = max(bad.values(), default=0.0)
        if worst > CTOL * scale:
            raise ConstraintViolation(f"state violates the Dirichlet condition (residual {worst:.3e})", worst)


def assemble_scalar_system(model: ScalarModel) -> PresymplecticSystem:
    return model.system()


def evolve_scalar(model: ScalarModel, s: PhaseSpaceState, t: float) -> PhaseSpaceState:
    return model.evolve(s, t)


# -- maxwell --------------------------------------------------------------------

class MaxwellModel:
    """Free electromagnetic field in the (Qperp, Q, P) description."""

    kind = "maxwell"

    def __init__(self, grid: g.GridSpec, bc: g.BoundaryCondition, ktol: float | None = None,
                 ctol: float = CTOL):
        if not bc.is_vector:
            raise ValueError(f"Maxwell model needs a vector bc, got {bc.kind}")
        if grid.dim < 2:
            raise g.UnsupportedError("Maxwell model needs a 2-D or 3-D grid")
        self.grid, self.bc, self.ktol, self.ctol = grid, bc, ktol, ctol
        self.grad = g.build_grad(grid, bc)
        self.curl = g.build_curl(grid, bc)
        self.curlcurl = g.build_curl_curl(grid, bc)
        self.weak_div = g.build_weak_div(grid, bc)
        self.nodes = self.grad.cols
        self.edges = self.grad.rows
        self.me = self.edges.mass
        self.mn = self.nodes.mass
        self.traces = {w: g.build_trace(grid, w) for w in ("nodal", "tangential", "normal")}

    def fingerprint(self) -> dict:
        return {"model": "maxwell", "grid": self.grid.fingerprint(), "bc": self.bc.fingerprint()}

    @functools.cached_property
    def hodge(self) -> HodgeProjector:
        return HodgeProjector(self.grid, self.bc, self.ktol)

    @functools.cached_property
    def decomposition(self):
        return eigendecompose(self.curlcurl, ktol=self.ktol)

    @functools.cached_property
    def transverse_basis(self) -> np.ndarray:
        return self.decomposition.range_vectors

    @functools.cached_property
    def harmonic_basis(self) -> np.ndarray:
        return self.hodge.harmonic.vectors

    @functools.cached_property
    def _div_norm(self) -> float:
        return float(spla.norm(self.weak_div.matrix, np.inf))

    @property
    def sizes(self) -> tuple[int, int]:
        return self.nodes.size, self.edges.size

    @property
    def dim(self) -> int:
        nn, ne = self.sizes
        return nn + 2 * ne

    # -- presymplectic system ---------------------------------------------------

    def system(self) -> PresymplecticSystem:
        nn, ne = self.sizes
        Me = np.diag(self.me)
        G = self.grad.dense()
        Kc = self.curlcurl.stiffness().toarray()
        Z = np.zeros
        Omega = np.block([[Z((nn, nn)), Z((nn, ne)), Z((nn, ne))],
                          [Z((ne, nn)), Z((ne, ne)), Me],
                          [Z((ne, nn)), -Me, Z((ne, ne))]])
        MG = Me @ G
        A = np.block([[Z((nn, nn)), Z((nn, ne)), -MG.T],
                      [Z((ne, nn)), Kc, Z((ne, ne))],
                      [-MG, Z((ne, ne)), Me]])
        return PresymplecticSystem.from_arrays(Omega, A)

    def lagrangian_system(self) -> PresymplecticSystem:
        """System on (Qperp, Q, Vperp, V) with the pulled-back form and the energy.

        The Legendre map sends V to P = V + grad Qperp and Vperp to a zero
        momentum, so the pulled-back form couples Q with V and with grad Qperp.
        """
        nn, ne = self.sizes
        Me = np.diag(self.me)
        G = self.grad.dense()
        MG = Me @ G
        Kc = self.curlcurl.stiffness().toarray()
        Z = np.zeros
        Omega = np.block([[Z((nn, nn)), -MG.T, Z((nn, nn)), Z((nn, ne))],
                          [MG, Z((ne, ne)), Z((ne, nn)), Me],
                          [Z((nn, nn)), Z((nn, ne)), Z((nn, nn)), Z((nn, ne))],
                          [Z((ne, nn)), -Me, Z((ne, nn)), Z((ne, ne))]])
        A = np.block([[-G.T @ MG, Z((nn, ne)), Z((nn, nn)), Z((nn, ne))],
                      [Z((ne, nn)), Kc, Z((ne, nn)), Z((ne, ne))],
                      [Z((nn, nn)), Z((nn, ne)), Z((nn, nn)), Z((nn, ne))],
                      [Z((ne, nn)), Z((ne, ne)), Z((ne, nn)), Me]])
        return PresymplecticSystem.from_arrays(Omega, A)

    def legendre_isomorphism(self) -> np.ndarray:
        """(Qperp, Q, Vperp, V) -> (Qperp, Q, P, Pperp-slot) with P = V + grad Qperp.

        The Hamiltonian side is padded with the omitted Qperp momentum as a
        free last block so both sides have the same dimension.
        """
        nn, ne = self.sizes
        G = self.grad.dense()
        F = np.zeros((nn + 2 * ne + nn, nn + ne + nn + ne))
        F[:nn, :nn] = np.eye(nn)
        F[nn:nn + ne, nn:nn + ne] = np.eye(ne)
        F[nn + ne:nn + 2 * ne, :nn] = G
        F[nn + ne:nn + 2 * ne, nn + ne + nn:] = np.eye(ne)
        F[nn + 2 * ne:, nn + ne:nn + ne + nn] = np.eye(nn)
        return F

    def analytic_constraints(self) -> np.ndarray:
        """Rows of the discrete Gauss law sum_e (+-) |e|-mass / h_e * P_e = 0.

        Assembled node by node from the grid incidence, independently of the
        operator classes; one row per bc node, acting on (Qperp, Q, P).
        """
        grid = self.grid
        nn, ne = self.sizes
        coords_n = grid.coordinates("node")
        coords_e = grid.coordinates("edge")
        dirs = grid.edge_directions()
        h = np.array(grid.spacing)
        me_all = grid.mass("edge")
        edge_pos = {tuple(np.round(c / (h / 2)).astype(int)): i for i, c in enumerate(coords_e)}
        edge_slot = -np.ones(grid.count("edge"), dtype=int)
        edge_slot[self.edges.index] = np.arange(ne)
        rows = np.zeros((nn, nn + 2 * ne))
        for r, ni in enumerate(self.nodes.index):
            key = np.round(coords_n[ni] / (h / 2)).astype(int)
            for a in range(grid.dim):
                for side in (-1, 1):
                    k = key.copy()
                    k[a] += side
                    e = edge_pos.get(tuple(k))
                    if e is None or dirs[e] != a or edge_slot[e] < 0:
                        continue
                    # outgoing edge (side=+1) enters grad with -1/h at its tail
                    rows[r, nn + ne + edge_slot[e]] += -side * me_all[e] / h[a]
        return rows

    def analytic_final_set(self) -> AffineSubspace:
        C = self.analytic_constraints()
        return AffineSubspace.from_constraints(C, np.zeros(C.shape[0]))

    def predicted_gauge_count(self) -> int:
        nn = self.nodes.size
        return nn + (nn if self.bc.kind == "relative" else nn - 1)

    # -- states -----------------------------------------------------------------

    def pack(self, s: PhaseSpaceState) -> np.ndarray:
        return np.concatenate([self.nodes.restrict(s.Qperp), self.edges.restrict(s.Q),
                               self.edges.restrict(s.P)])

    def unpack(self, x, t: float = 0.0) -> PhaseSpaceState:
        nn, ne = self.sizes
        return PhaseSpaceState(self.edges.embed(x[nn:nn + ne]), self.edges.embed(x[nn + ne:]),
                               self.nodes.embed(x[:nn]), t)

    def state(self, Qperp, Q, P, t: float = 0.0) -> PhaseSpaceState:
        """Full-layout state from values on the bc node/edge spaces."""
        return PhaseSpaceState(self.edges.embed(Q), self.edges.embed(P), self.nodes.embed(Qperp), t)

    def random_state(self, rng, constrained: bool = True) -> PhaseSpaceState:
        nn, ne = self.sizes
        P = rng.standard_normal(ne)
        if constrained:
            P = self.hodge.project_physical(P)
        return self.state(rng.standard_normal(nn), rng.standard_normal(ne), P)

    def _parts(self, s: PhaseSpaceState):
        nn_all, ne_all = self.grid.count("node"), self.grid.count("edge")
        _check_len("Q", s.Q, ne_all)
        _check_len("P", s.P, ne_all)
        Qp = np.zeros(nn_all) if s.Qperp is None else s.Qperp
        _check_len("Qperp", Qp, nn_all)
        return self.nodes.restrict(Qp), self.edges.restrict(s.Q), self.edges.restrict(s.P)

    def energy(self, s: PhaseSpaceState) -> float:
        Qp, Q, P = self._parts(s)
        GQp = self.grad @ Qp
        CQ = self.curl @ Q
        return float(0.5 * P @ (self.me * P) - P @ (self.me * GQp)
                     + 0.5 * CQ @ (self.curl.rows.mass * CQ))

    def vector_field(self, s: PhaseSpaceState, gauge_rate=None) -> PhaseSpaceState:
        Qp, Q, P = self._parts(s)
        chi = np.zeros(self.nodes.size) if gauge_rate is None else self._rate(gauge_rate)
        return self.state(chi, P - self.grad @ Qp, -(self.curlcurl @ Q), s.t)

    def check_constraints(self, s: PhaseSpaceState) -> dict:
        """Residual norms (max-abs) of the Gauss law and the bc traces."""
        nn_all = self.grid.count("node")
        Qp = np.zeros(nn_all) if s.Qperp is None else s.Qperp
        _, _, P = self._parts(s)
        rep = {"gauss": _max_abs(self.weak_div @ P)}
        scale = max(self._div_norm * _max_abs(s.P), 1e-300)
        rep["gauss_relative"] = rep["gauss"] / scale
        tang = self.traces["tangential"]
        if self.bc.kind == "relative":
            rep["tangential_P"] = _max_abs(tang @ s.P)
            rep["tangential_Q"] = _max_abs(tang @ s.Q)
            rep["nodal_Qperp"] = _max_abs(self.traces["nodal"] @ Qp)
        else:
            rep["normal_P"] = _max_abs(self.traces["normal"] @ s.P)
            # curl Q on cells/faces touching the boundary; the condition is natural, so informational
            full_curl = g.build_curl(self.grid)
            touching = np.flatnonzero(np.abs(full_curl.matrix[:, tang.rows.index]).sum(axis=1).A1 > 0)
            rep["tangential_curl_Q"] = _max_abs((full_curl @ s.Q)[touching])
        return rep

    def require_constrained(self, s: PhaseSpaceState):
        rep = self.check_constraints(s)
        scale = max(_max_abs(s.P), _max_abs(s.Q), 1e-300)
        if rep["gauss_relative"] > self.ctol:
            raise ConstraintViolation(f"Gauss constraint violated: residual {rep['gauss']:.3e}", rep["gauss"])
        for key in ("tangential_P", "tangential_Q", "nodal_Qperp"):
            if rep.get(key, 0.0) > self.ctol * scale:
                raise ConstraintViolation(f"boundary condition violated: {key} = {rep[key]:.3e}", rep[key])

    def _rate(self, chi) -> np.ndarray:
        chi = np.asarray(chi, dtype=float)
        if chi.shape == (self.grid.count("node"),):
            chi = self.nodes.restrict(chi)
        _check_len("gauge rate", chi, self.nodes.size)
        return chi

    def evolve(self, s: PhaseSpaceState, t: float, gauge_rate=None) -> PhaseSpaceState:
        """Exact flow; Qperp(t) = Qperp + t*gauge_rate (default rate zero)."""
        self.require_constrained(s)
        Qp, Q, P = self._parts(s)
        chi = np.zeros_like(Qp) if gauge_rate is None else self._rate(gauge_rate)
        # Qt = Q + grad(int Qperp) obeys Qt'' = -curlcurl Qt since curl grad = 0
        out = propagate(self.decomposition, WaveState(Q, P), t)
        drift = self.grad @ (t * Qp + 0.5 * t * t * chi)
        return self.state(Qp + t * chi, out.Q - drift, out.V, s.t + t)

    def gauge_transform(self, s: PhaseSpaceState, phi, chi) -> PhaseSpaceState:
        phi = np.asarray(phi, dtype=float)
        if phi.shape == (self.grid.count("node"),):
            outside = np.delete(phi, self.nodes.index)
            if _max_abs(outside) > 0:
                raise ValueError("gauge potential is nonzero on nodes outside the bc node space")
            phi = self.nodes.restrict(phi)
        _check_len("phi", phi, self.nodes.size)
        chi = self._rate(chi)
        Qp, Q, P = self._parts(s)
        return self.state(Qp + chi, Q + self.grad @ phi, P, s.t)

    def field_strength(self, s: PhaseSpaceState) -> np.ndarray:
        return self.curl @ self._parts(s)[1]

    # -- reduced phase space ------------------------------------------------------

    def reduce(self, s: PhaseSpaceState) -> ReducedState:
        self.require_constrained(s)
        _, Q, P = self._parts(s)
        T, H = self.transverse_basis, self.harmonic_basis
        MQ, MP = self.me * Q, self.me * P
        return ReducedState(T.T @ MQ, T.T @ MP, H.T @ MQ, H.T @ MP, s.t)

    def unreduce(self, r: ReducedState) -> PhaseSpaceState:
        T, H = self.transverse_basis, self.harmonic_basis
        Q = T @ r.qT + H @ r.qh
        P = T @ r.pT + H @ r.ph
        return self.state(np.zeros(self.nodes.size), Q, P, r.t)

    def evolve_reduced(self, r: ReducedState, t: float) -> ReducedState:
        w = np.sqrt(self.decomposition.range_eigenvalues)
        c, sn = np.cos(w * t), np.sin(w * t)
        return ReducedState(c * r.qT + sn / w * r.pT, -w * sn * r.qT + c * r.pT,
                            r.qh + t * r.ph, r.ph.copy(), r.t + t)


def assemble_maxwell_system(model: MaxwellModel) -> PresymplecticSystem:
    return model.system()


def evolve_maxwell(model: MaxwellModel, s: PhaseSpaceState, t: float, gauge_choice=None) -> PhaseSpaceState:
    return model.evolve(s, t, gauge_choice)


def check_constraints(model, s: PhaseSpaceState) -> dict:
    return model.check_constraints(s)


def gauge_transform(model: MaxwellModel, s: PhaseSpaceState, phi, chi) -> PhaseSpaceState:
    return model.gauge_transform(s, phi, chi)


def reduce(model: MaxwellModel, s: PhaseSpaceState) -> ReducedState:
    return model.reduce(s)


def unreduce(model: MaxwellModel, r: ReducedState) -> PhaseSpaceState:
    return model.unreduce(r)


def analyze(model, max_steps: int = 50, tol: float | None = None):
    """Run the constraint chain and classify its final set."""
    sysm = model.system()
    res = constraint_chain(sysm, max_steps=max_steps, tol=tol)
    cls = classify_submanifold(sysm.form, res.final) if res.terminated and not res.final.empty else None
    return sysm, res, cls


def build_model(kind: str, grid: g.GridSpec, bc: g.BoundaryCondition, **kw):
    if kind == "scalar":
        return ScalarModel(grid, bc, ktol=kw.get("ktol"))
    if kind == "maxwell":
        return MaxwellModel(grid, bc, ktol=kw.get("ktol"), ctol=kw.get("ctol", CTOL))
    raise ValueError(f"unknown model {kind!r}")


__all__ = ["CTOL", "ConstraintViolation", "MaxwellModel", "PhaseSpaceState", "ReducedState",
           "ScalarModel", "analyze", "assemble_maxwell_system", "assemble_scalar_system",
           "build_model", "check_constraints", "evolve_maxwell", "evolve_scalar",
           "gauge_transform", "reduce", "unreduce"]
