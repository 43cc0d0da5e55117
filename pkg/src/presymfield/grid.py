"""Staggered rectangular grids and mimetic operators.

Entity layout
-------------
Nodes, edges, faces and cells of the full box are numbered lexicographically
with the x index running fastest.  Edges are grouped by direction (all
x-edges, then y-edges, then z-edges); 3-D faces are grouped by normal
direction in the same way.  In 2-D the "faces" are the cells.

An entity belongs to the domain when it touches at least one retained cell
(cells inside the optional hole are removed).  Field arrays are indexed by
the position of the entity in the list of retained entities, in the order
above.  An entity is on the boundary when at least one of the cells around
it is missing.

Masses are diagonal: each entity receives ``prod(h) * (retained adjacent
cells) / (total adjacent cells)``.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

SCALAR_BCS = ("dirichlet", "neumann", "robin")
VECTOR_BCS = ("relative", "absolute")


class UnsupportedError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    cells: tuple
    spacing: tuple
    hole: tuple | None = None   # ((lo, hi), (lo, hi)) cell index ranges, hi exclusive

    def __post_init__(self):
        cells = tuple(int(c) for c in np.atleast_1d(self.cells))
        spacing = tuple(float(h) for h in np.atleast_1d(self.spacing))
        if len(spacing) == 1 and len(cells) > 1:
            spacing = spacing * len(cells)
        if len(cells) not in (1, 2, 3) or len(spacing) != len(cells):
            raise ValueError(f"bad grid shape cells={cells} spacing={spacing}")
        if min(cells) < 2:
            raise ValueError("need at least 2 cells per axis")
        if min(spacing) <= 0:
            raise ValueError("spacing must be positive")
        hole = self.hole
        if hole is not None:
            if len(cells) != 2:
                raise UnsupportedError("holes are supported on 2-D grids only")
            hole = tuple((int(lo), int(hi)) for lo, hi in hole)
            for (lo, hi), n in zip(hole, cells):
                if not (1 <= lo < hi <= n - 1):
                    raise ValueError(f"hole {hole} is not strictly interior")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "hole", hole)

    @classmethod
    def box(cls, dim: int, n: int, length: float = 1.0, hole=None) -> "GridSpec":
        return cls((n,) * dim, (length / n,) * dim, hole)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def fingerprint(self) -> dict:
        return {"cells": list(self.cells), "spacing": list(self.spacing),
                "hole": None if self.hole is None else [list(h) for h in self.hole]}

    # -- entity bookkeeping -------------------------------------------------

    def _extents(self, kind: str) -> list[tuple]:
        """Per group, a tuple of 0/1 flags: 1 where the entity spans that axis."""
        d = self.dim
        if kind == "node":
            return [(0,) * d]
        if kind == "cell":
            return [(1,) * d]
        if kind == "edge":
            return [tuple(int(b == a) for b in range(d)) for a in range(d)]
        if kind == "face":
            if d == 2:
                return [(1, 1)]
            if d == 3:
                return [tuple(int(b != a) for b in range(d)) for a in range(d)]
        raise UnsupportedError(f"entity kind {kind!r} not available in {d}-D")

    def _group_shape(self, ext) -> tuple:
        return tuple(n if e else n + 1 for n, e in zip(self.cells, ext))

    @functools.cached_property
    def _cell_mask(self) -> np.ndarray:
        mask = np.ones(self.cells, dtype=bool)
        if self.hole is not None:
            mask[tuple(slice(lo, hi) for lo, hi in self.hole)] = False
        return mask

    @functools.lru_cache(maxsize=None)
    def _adjacency(self, kind: str):
        """(count of retained adjacent cells, total adjacent cells) per full-box entity."""
        padded = np.pad(self._cell_mask, 1, constant_values=False)
        counts, totals = [], []
        for ext in self._extents(kind):
            shape = self._group_shape(ext)
            cnt = np.zeros(shape, dtype=int)
            offsets = [(0,) if e else (-1, 0) for e in ext]
            for off in itertools.product(*offsets):
                sl = tuple(slice(1 + o, 1 + o + s) for o, s in zip(off, shape))
                cnt += padded[sl]
            counts.append(cnt.ravel(order="F"))
            totals.append(np.full(cnt.size, 2 ** (len(ext) - sum(ext))))
        return np.concatenate(counts), np.concatenate(totals)

    def count_full(self, kind: str) -> int:
        return sum(int(np.prod(self._group_shape(e))) for e in self._extents(kind))

    @functools.lru_cache(maxsize=None)
    def retained(self, kind: str) -> np.ndarray:
        """Full-box indices of the entities inside the domain."""
        cnt, _ = self._adjacency(kind)
        return np.flatnonzero(cnt > 0)

    @functools.lru_cache(maxsize=None)
    def boundary_mask(self, kind: str) -> np.ndarray:
        """Boolean mask over retained entities: True on the boundary."""
        cnt, tot = self._adjacency(kind)
        keep = cnt > 0
        return (cnt[keep] < tot[keep])

    def count(self, kind: str) -> int:
        return int(self.retained(kind).size)

    @functools.lru_cache(maxsize=None)
    def mass(self, kind: str) -> np.ndarray:
        cnt, tot = self._adjacency(kind)
        keep = cnt > 0
        return self.cell_volume * cnt[keep] / tot[keep]

    def coordinates(self, kind: str) -> np.ndarray:
        """Centre coordinates of retained entities, shape (count, dim)."""
        pts = []
        for ext in self._extents(kind):
            shape = self._group_shape(ext)
            axes = [(np.arange(s) + 0.5 * e) * h for s, e, h in zip(shape, ext, self.spacing)]
            grids = np.meshgrid(*axes, indexing="ij")
            pts.append(np.stack([g.ravel(order="F") for g in grids], axis=1))
        return np.concatenate(pts)[self.retained(kind)]

    def edge_directions(self) -> np.ndarray:
        """Axis index of each retained edge."""
        dirs = [np.full(int(np.prod(self._group_shape(e))), a)
                for a, e in enumerate(self._extents("edge"))]
        return np.concatenate(dirs)[self.retained("edge")]

    @functools.lru_cache(maxsize=None)
    def boundary_measure(self) -> np.ndarray:
        """Boundary area carried by each retained node (zero for interior nodes)."""
        d = self.dim
        h = self.spacing
        padded = np.pad(self._cell_mask, 1, constant_values=False)
        shape = tuple(n + 1 for n in self.cells)
        meas = np.zeros(shape)
        for off in itertools.product((-1, 0), repeat=d):
            sl = tuple(slice(1 + o, 1 + o + s) for o, s in zip(off, shape))
            here = padded[sl]
            for a in range(d):
                flipped = list(off)
                flipped[a] = -1 - off[a]
                sl2 = tuple(slice(1 + o, 1 + o + s) for o, s in zip(flipped, shape))
                area = float(np.prod([h[b] / 2 for b in range(d) if b != a]))
                meas += area * (here & ~padded[sl2])
        return meas.ravel(order="F")[self.retained("node")]


@dataclass(frozen=True)
class EntitySpace:
    """A subset of the retained entities of one kind, with its masses."""

    grid: GridSpec
    kind: str
    subset: str             # "all" or "interior"
    index: np.ndarray       # positions within the retained list

    @classmethod
    def of(cls, grid: GridSpec, kind: str, subset: str = "all") -> "EntitySpace":
        n = grid.count(kind)
        if subset == "all":
            idx = np.arange(n)
        elif subset == "interior":
            idx = np.flatnonzero(~grid.boundary_mask(kind))
        elif subset == "boundary":
            idx = np.flatnonzero(grid.boundary_mask(kind))
        else:
            raise ValueError(f"unknown subset {subset!r}")
        return cls(grid, kind, subset, idx)

    @property
    def size(self) -> int:
        return int(self.index.size)

    @property
    def mass(self) -> np.ndarray:
        return self.grid.mass(self.kind)[self.index]

    def embed(self, values) -> np.ndarray:
        """Extend a field on this space by zero to all retained entities."""
        out = np.zeros(self.grid.count(self.kind))
        out[self.index] = values
        return out

    def restrict(self, values) -> np.ndarray:
        return np.asarray(values)[self.index]

    def selector(self) -> sp.csr_matrix:
        """Sparse (size x retained-count) selection matrix."""
        n = self.grid.count(self.kind)
        return sp.csr_matrix((np.ones(self.size), (np.arange(self.size), self.index)),
                             shape=(self.size, n))

    def __eq__(self, other):
        return (isinstance(other, EntitySpace) and self.grid == other.grid
                and self.kind == other.kind and np.array_equal(self.index, other.index))

    def __hash__(self):
        return hash((self.grid, self.kind, self.subset, self.size))


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Sparse linear map between two entity spaces."""

    matrix: sp.csr_matrix
    rows: EntitySpace
    cols: EntitySpace
    name: str = ""

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, x):
        return self.matrix @ x

    def __neg__(self):
        return DiscreteOperator(-self.matrix, self.rows, self.cols, f"-{self.name}")

    def apply(self, x):
        return self.matrix @ np.asarray(x, dtype=float)

    def stiffness(self) -> sp.csr_matrix:
        """M_rows @ matrix; symmetric for the Laplacian-type operators."""
        return sp.diags(self.rows.mass) @ self.matrix

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def triplets(self):
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]


@dataclass(frozen=True)
class BoundaryCondition:
    """kind in {dirichlet, neumann, robin, relative, absolute}.

    ``robin`` holds B on the boundary nodes (scalar or per-node array); B <= 0.
    Only homogeneous data is supported.
    """

    kind: str
    robin: object = None

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in SCALAR_BCS + VECTOR_BCS:
            raise ValueError(f"unknown boundary condition {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "robin":
            B = np.atleast_1d(np.asarray(0.0 if self.robin is None else self.robin, dtype=float))
            if np.any(B > 0):
                raise ValueError("Robin coefficient must satisfy B <= 0")
            object.__setattr__(self, "robin", B)

    @property
    def is_scalar(self) -> bool:
        return self.kind in SCALAR_BCS

    @property
    def is_vector(self) -> bool:
        return self.kind in VECTOR_BCS

    @property
    def essential(self) -> bool:
        """True when boundary values are eliminated from the unknowns."""
        return self.kind in ("dirichlet", "relative")

    def robin_values(self, n_boundary: int) -> np.ndarray:
        B = self.robin if self.kind == "robin" else np.zeros(1)
        if B.size == 1:
            return np.full(n_boundary, float(B[0]))
        if B.size != n_boundary:
            raise ValueError(f"Robin array has {B.size} entries, grid has {n_boundary} boundary nodes")
        return B

    def fingerprint(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "robin":
            out["robin"] = [float(x) for x in self.robin]
        return out


def Dirichlet():
    return BoundaryCondition("dirichlet")


def Neumann():
    return BoundaryCondition("neumann")


def Robin(B):
    return BoundaryCondition("robin", B)


def Relative():
    return BoundaryCondition("relative")


def Absolute():
    return BoundaryCondition("absolute")


# -- full-box assembly ---------------------------------------------------------

def _diff1d(n: int, h: float) -> sp.csr_matrix:
    """(n x n+1) forward difference divided by h."""
    return sp.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1), format="csr") / h


def _axis_op(factors) -> sp.csr_matrix:
    """Kronecker product for F-ordered arrays; factors[a] acts on axis a."""
    out = factors[-1]
    for f in reversed(factors[:-1]):
        out = sp.kron(out, f, format="csr")
    return sp.csr_matrix(out)


def _partial(grid: GridSpec, src_ext, axis: int) -> sp.csr_matrix:
    """Difference along ``axis`` from entities with extent src_ext to extent+axis."""
    factors = []
    for b, (n, h, e) in enumerate(zip(grid.cells, grid.spacing, src_ext)):
        if b == axis:
            assert e == 0
            factors.append(_diff1d(n, h))
        else:
            factors.append(sp.identity(n if e else n + 1, format="csr"))
    return _axis_op(factors)


@functools.lru_cache(maxsize=None)
def _grad_full(grid: GridSpec) -> sp.csr_matrix:
    node_ext = (0,) * grid.dim
    return sp.vstack([_partial(grid, node_ext, a) for a in range(grid.dim)], format="csr")


@functools.lru_cache(maxsize=None)
def _curl_full(grid: GridSpec) -> sp.csr_matrix:
    d = grid.dim
    edge_ext = grid._extents("edge")
    sizes = [int(np.prod(grid._group_shape(e))) for e in edge_ext]
    if d == 1:
        raise UnsupportedError("curl is not defined on 1-D grids")
    if d == 2:
        # scalar curl on cells: d/dx u_y - d/dy u_x
        blocks = [[-_partial(grid, edge_ext[0], 1), _partial(grid, edge_ext[1], 0)]]
        return sp.bmat(blocks, format="csr")
    rows = []
    for c in range(3):
        a, b = (c + 1) % 3, (c + 2) % 3
        blk = [None, None, None]
        blk[b] = _partial(grid, edge_ext[b], a)
        blk[a] = -_partial(grid, edge_ext[a], b)
        for k in range(3):
            if blk[k] is None:
                face_size = int(np.prod(grid._group_shape(grid._extents("face")[c])))
                blk[k] = sp.csr_matrix((face_size, sizes[k]))
        rows.append(blk)
    return sp.bmat(rows, format="csr")


def _restrict(full: sp.csr_matrix, grid: GridSpec, row_kind, col_kind) -> sp.csr_matrix:
    return full[grid.retained(row_kind)][:, grid.retained(col_kind)].tocsr()


def _sub(mat: sp.csr_matrix, rows: EntitySpace, cols: EntitySpace) -> sp.csr_matrix:
    m = mat[rows.index][:, cols.index]
    m = sp.csr_matrix(m)
    m.eliminate_zeros()
    m.sort_indices()
    return m


def node_space(grid: GridSpec, bc: BoundaryCondition | None = None) -> EntitySpace:
    subset = "interior" if bc is not None and bc.essential else "all"
    return EntitySpace.of(grid, "node", subset)


def edge_space(grid: GridSpec, bc: BoundaryCondition | None = None) -> EntitySpace:
    subset = "interior" if bc is not None and bc.essential else "all"
    return EntitySpace.of(grid, "edge", subset)


def face_space(grid: GridSpec) -> EntitySpace:
    return EntitySpace.of(grid, "face", "all")


# -- public operators --------------------------------------------------------

def build_grad(grid: GridSpec, bc: BoundaryCondition | None = None) -> DiscreteOperator:
    """Nodes -> edges; difference along each edge divided by its length.

    With an essential condition (dirichlet/relative) the node space is the
    interior nodes and the edge space the interior edges.
    """
    full = _restrict(_grad_full(grid), grid, "edge", "node")
    rows, cols = edge_space(grid, bc), node_space(grid, bc)
    return DiscreteOperator(_sub(full, rows, cols), rows, cols, "grad")


def build_curl(grid: GridSpec, bc: BoundaryCondition | None = None) -> DiscreteOperator:
    """Edges -> faces (3-D) or cells (2-D): circulation divided by area."""
    if grid.dim == 1:
        raise UnsupportedError("curl is not defined on 1-D grids")
    full = _restrict(_curl_full(grid), grid, "face", "edge")
    rows, cols = face_space(grid), edge_space(grid, bc)
    return DiscreteOperator(_sub(full, rows, cols), rows, cols, "curl")


def build_weak_div(grid: GridSpec, bc: BoundaryCondition | None = None) -> DiscreteOperator:
    """Edges -> nodes, the negative mass-adjoint of grad: D = -M_n^-1 G^T M_e."""
    g = build_grad(grid, bc)
    D = -sp.diags(1.0 / g.cols.mass) @ g.matrix.T @ sp.diags(g.rows.mass)
    return DiscreteOperator(sp.csr_matrix(D), g.cols, g.rows, "weak_div")


def build_curl_adjoint(grid: GridSpec, bc: BoundaryCondition | None = None) -> DiscreteOperator:
    """Faces -> edges, M_e^-1 C^T M_f."""
    c = build_curl(grid, bc)
    Ct = sp.diags(1.0 / c.cols.mass) @ c.matrix.T @ sp.diags(c.rows.mass)
    return DiscreteOperator(sp.csr_matrix(Ct), c.cols, c.rows, "curl_adjoint")


def robin_boundary_term(grid: GridSpec, bc: BoundaryCondition) -> np.ndarray:
    """Diagonal contribution b^2 * |boundary patch| per retained node (b^2 = -B)."""
    meas = grid.boundary_measure()
    bmask = grid.boundary_mask("node")
    out = np.zeros(grid.count("node"))
    if bc.kind == "robin":
        B = bc.robin_values(int(bmask.sum()))
        out[bmask] = -B * meas[bmask]
    return out


def build_scalar_laplacian(grid: GridSpec, bc: BoundaryCondition) -> DiscreteOperator:
    """Scalar Laplacian (nonpositive, symmetric in the nodal mass inner product).

    The stiffness is G^T M_e G, plus the lumped Robin boundary term; the
    returned action is -M_n^-1 K.
    """
    if not bc.is_scalar:
        raise ValueError(f"{bc.kind} is not a scalar boundary condition")
    g = build_grad(grid, bc)
    K = g.matrix.T @ sp.diags(g.rows.mass) @ g.matrix
    if bc.kind == "robin":
        K = K + sp.diags(robin_boundary_term(grid, bc)[g.cols.index])
    L = -sp.diags(1.0 / g.cols.mass) @ K
    return DiscreteOperator(sp.csr_matrix(L), g.cols, g.cols, f"laplacian[{bc.kind}]")


def build_curl_curl(grid: GridSpec, bc: BoundaryCondition) -> DiscreteOperator:
    """M_e^-1 C^T M_f C on the bc edge space; stiffness() gives C^T M_f C."""
    if grid.dim == 1:
        raise UnsupportedError("curl-curl is not defined on 1-D grids")
    if not bc.is_vector:
        raise ValueError(f"{bc.kind} is not a vector boundary condition")
    c = build_curl(grid, bc)
    K = c.matrix.T @ sp.diags(c.rows.mass) @ c.matrix
    L = sp.diags(1.0 / c.cols.mass) @ K
    return DiscreteOperator(sp.csr_matrix(L), c.cols, c.cols, f"curl_curl[{bc.kind}]")


def build_vector_laplacian(grid: GridSpec, bc: BoundaryCondition) -> DiscreteOperator:
    """Nonnegative Hodge Laplacian on edges: curl-curl - grad weak_div."""
    cc = build_curl_curl(grid, bc).matrix if grid.dim > 1 else 0
    g = build_grad(grid, bc)
    dv = build_weak_div(grid, bc)
    L = cc - g.matrix @ dv.matrix
    return DiscreteOperator(sp.csr_matrix(L), g.rows, g.rows, f"vector_laplacian[{bc.kind}]")


def build_trace(grid: GridSpec, which: str) -> DiscreteOperator:
    """Boundary trace operators on fields over all retained entities.

    nodal:      node values at boundary nodes.
    tangential: edge values on boundary edges (every boundary edge of an
                axis-aligned domain is tangent to it).
    normal:     outward flux per unit boundary area at boundary nodes,
                (G^T M_e u)_b / |boundary patch of b|.  It vanishes exactly
                when the discrete Gauss law holds at the boundary node.
    """
    if which == "nodal":
        rows = EntitySpace.of(grid, "node", "boundary")
        cols = EntitySpace.of(grid, "node", "all")
        return DiscreteOperator(rows.selector(), rows, cols, "trace[nodal]")
    if which == "tangential":
        rows = EntitySpace.of(grid, "edge", "boundary")
        cols = EntitySpace.of(grid, "edge", "all")
        return DiscreteOperator(rows.selector(), rows, cols, "trace[tangential]")
    if which == "normal":
        rows = EntitySpace.of(grid, "node", "boundary")
        g = build_grad(grid)
        flux = g.matrix.T @ sp.diags(g.rows.mass)
        meas = grid.boundary_measure()[rows.index]
        T = sp.diags(1.0 / meas) @ flux[rows.index]
        return DiscreteOperator(sp.csr_matrix(T), rows, g.rows, "trace[normal]")
    raise ValueError(f"unknown trace {which!r}")


def sample_edge_field(grid: GridSpec, func) -> np.ndarray:
    """Component of a vector function along each edge, sampled at edge midpoints."""
    pts = grid.coordinates("edge")
    dirs = grid.edge_directions()
    vals = np.asarray(func(*pts.T), dtype=float)
    return vals[dirs, np.arange(len(dirs))]


def sample_node_field(grid: GridSpec, func) -> np.ndarray:
    pts = grid.coordinates("node")
    return np.asarray(func(*pts.T), dtype=float) * np.ones(len(pts))


def mass_inner(mass, x, y) -> float:
    return float(np.sum(mass * np.asarray(x) * np.asarray(y)))


def mass_norm(mass, x) -> float:
    return float(np.sqrt(max(mass_inner(mass, x, x), 0.0)))
