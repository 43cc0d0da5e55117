import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from presymfield.grid import (Absolute, Dirichlet, GridSpec, Neumann, Relative, Robin, UnsupportedError,
                              build_weak_div)
from presymfield.linalg import principal_angles, span_contains
from presymfield.models import (ConstraintViolation, MaxwellModel, PhaseSpaceState, ReducedState,
                                ScalarModel, analyze, build_model)
from presymfield.presym import SubmanifoldClass, constraint_chain, vector_field_residual

HOLED = GridSpec((8, 8), (1 / 8, 1 / 8), ((3, 5), (3, 5)))
SMALL = [GridSpec.box(2, 3), GridSpec((4, 3), (0.25, 1 / 3)), GridSpec.box(3, 2)]
VBCS = [Relative(), Absolute()]


def maxabs(x):
    return float(np.abs(x).max()) if np.size(x) else 0.0


# -- scalar ------------------------------------------------------------------------------

@pytest.mark.parametrize("bc", [Dirichlet(), Neumann(), Robin(-1.0), Robin([-0.5, -2.0] * 10)])
@pytest.mark.parametrize("grid", [GridSpec.box(1, 11), GridSpec.box(2, 5)])
def test_scalar_chain_verdict(grid, bc):
    if bc.robin is not None and np.ndim(bc.robin) and grid.dim == 1:
        bc = Robin([-0.5, -2.0])
    model = ScalarModel(grid, bc)
    sysm, res, cls = analyze(model)
    n = model.space.size
    assert res.terminated and res.dims == [2 * n] and res.steps == 1
    assert res.gauge_dim == 0
    assert cls.label is SubmanifoldClass.SECOND_CLASS
    rng = np.random.default_rng(0)
    s = model.random_state(rng)
    x = model.pack(s)
    ref = model.pack(model.vector_field(s))
    assert maxabs(res.vf(x) - ref) <= 1e-12 * max(1.0, maxabs(ref))


def test_scalar_vector_field_is_P_and_laplacian():
    model = ScalarModel(GridSpec.box(1, 6), Dirichlet())
    s = model.random_state(np.random.default_rng(1))
    X = model.vector_field(s)
    assert np.array_equal(X.Q, s.P)
    assert np.allclose(model.space.restrict(X.P), model.laplacian @ model.space.restrict(s.Q))


def test_robin_zero_is_neumann_bit_for_bit():
    grid = GridSpec.box(2, 4)
    a = ScalarModel(grid, Robin(0.0)).system()
    b = ScalarModel(grid, Neumann()).system()
    assert np.array_equal(a.Omega, b.Omega) and np.array_equal(a.A, b.A) and np.array_equal(a.b, b.b)


def test_scalar_rejects_vector_bc():
    with pytest.raises(ValueError):
        ScalarModel(GridSpec.box(1, 4), Relative())
    with pytest.raises(ValueError):
        build_model("plasma", GridSpec.box(1, 4), Dirichlet())


def test_scalar_evolution_examples():
    grid = GridSpec.box(1, 20)
    m = ScalarModel(grid, Dirichlet())
    s = m.random_state(np.random.default_rng(2))
    same = m.evolve(s, 0.0)
    assert np.array_equal(same.Q, s.Q) and np.array_equal(same.P, s.P)
    dec = m.decomposition
    v = dec.eigenvectors[:, 0]
    w = np.sqrt(dec.eigenvalues[0])
    s0 = m.state(v, np.zeros_like(v))
    e0 = m.energy(s0)
    for t in (0.5, 10.0, 100.0):
        out = m.evolve(s0, t)
        assert maxabs(m.space.restrict(out.Q) - np.cos(w * t) * v) <= 1e-10 * maxabs(v)
        assert abs(m.energy(out) - e0) <= 1e-12 * e0
    mn = ScalarModel(grid, Neumann())
    out = mn.evolve(mn.state(np.full(21, 1.5), np.full(21, -0.5)), 4.0)
    assert maxabs(out.Q - (1.5 - 2.0)) <= 1e-12 and maxabs(out.P + 0.5) <= 1e-12


def test_scalar_constraint_report():
    grid = GridSpec.box(2, 4)
    m = ScalarModel(grid, Dirichlet())
    s = m.random_state(np.random.default_rng(3))
    assert m.check_constraints(s) == {"nodal_Q": 0.0, "nodal_P": 0.0}
    bad = PhaseSpaceState(s.Q + 1.0, s.P)
    assert m.check_constraints(bad)["nodal_Q"] > 0.5
    with pytest.raises(ConstraintViolation):
        m.evolve(bad, 1.0)
    r = ScalarModel(grid, Robin(-1.0))
    rep = r.check_constraints(r.random_state(np.random.default_rng(4)))
    assert set(rep) == {"robin_boundary"} and np.isfinite(rep["robin_boundary"])


def test_robin_residual_small_for_smooth_mode():
    # the lowest Robin mode satisfies B Q = dQ/dn up to the first-order one-sided difference
    errs = []
    for n in (40, 80):
        m = ScalarModel(GridSpec.box(1, n), Robin(-1.0))
        v = m.decomposition.eigenvectors[:, 0]
        errs.append(m.check_constraints(m.state(v, 0 * v))["robin_boundary"] / maxabs(v))
    assert errs[0] < 0.05
    assert 1.8 <= errs[0] / errs[1] <= 2.2


# -- maxwell: constraint analysis ------------------------------------------------------------

def hamiltonian_angles(model):
    sysm, res, cls = analyze(model)
    ref = model.analytic_final_set()
    return res, cls, principal_angles(res.final.basis, ref.basis), ref


@pytest.mark.parametrize("bc", VBCS)
@pytest.mark.parametrize("grid", SMALL + [HOLED])
def test_maxwell_chain_matches_analytic(grid, bc):
    model = MaxwellModel(grid, bc)
    res, cls, ang, ref = hamiltonian_angles(model)
    nn, ne = model.sizes
    assert res.terminated and res.steps == 2
    assert res.final.dim == ref.dim
    assert ang.size and ang.max() <= 1e-8
    assert res.gauge_dim == model.predicted_gauge_count()
    assert cls.label is SubmanifoldClass.FIRST_CLASS
    # gauge directions: every Qperp direction and every gradient direction in Q
    G = res.vf.gauge_basis
    Qperp_dirs = np.eye(model.dim)[:, :nn]
    grad_dirs = np.zeros((model.dim, nn))
    grad_dirs[nn:nn + ne] = model.grad.dense()
    assert span_contains(np.linalg.qr(G)[0], Qperp_dirs, 1e-8)
    assert span_contains(np.linalg.qr(G)[0], grad_dirs, 1e-8)


def test_maxwell_vector_field_solves_hamilton_equation():
    model = MaxwellModel(HOLED, Absolute())
    sysm, res, _ = analyze(model)
    s = model.random_state(np.random.default_rng(5))
    x = model.pack(s)
    assert res.final.contains(x)
    X = model.pack(model.vector_field(s))
    r = sysm.Omega.T @ X - sysm.ham.gradient(x)
    assert np.linalg.norm(res.final.basis.T @ r) <= 1e-10 * np.linalg.norm(sysm.ham.gradient(x))
    assert vector_field_residual(sysm, res.final, res.vf, x) <= 1e-10 * np.linalg.norm(sysm.ham.gradient(x))


@pytest.mark.parametrize("bc", VBCS)
def test_lagrangian_equivalence(bc):
    model = MaxwellModel(GridSpec.box(2, 3), bc)
    nn, ne = model.sizes
    ham = constraint_chain(model.system())
    lag = constraint_chain(model.lagrangian_system())
    assert lag.terminated
    F = model.legendre_isomorphism()
    mapped = F @ lag.final.basis
    # Hamiltonian final set times the free slot for the omitted Qperp momentum
    Hb = ham.final.basis
    ref = np.zeros((F.shape[0], Hb.shape[1] + nn))
    ref[:Hb.shape[0], :Hb.shape[1]] = Hb
    ref[Hb.shape[0]:, Hb.shape[1]:] = np.eye(nn)
    assert mapped.shape[1] == ref.shape[1]
    assert principal_angles(mapped, ref).max() <= 1e-8


def test_maxwell_needs_vector_bc_and_2d():
    with pytest.raises(ValueError):
        MaxwellModel(GridSpec.box(2, 3), Dirichlet())
    with pytest.raises(UnsupportedError):
        MaxwellModel(GridSpec.box(1, 3), Relative())


# -- maxwell: constraints and evolution -----------------------------------------------------

@pytest.fixture(scope="module", params=["relative", "absolute"])
def holed(request):
    return MaxwellModel(HOLED, Relative() if request.param == "relative" else Absolute())


def test_projected_state_satisfies_constraints(holed):
    s = holed.random_state(np.random.default_rng(6))
    rep = holed.check_constraints(s)
    scale = maxabs(s.P) + maxabs(s.Q)
    for key in ("gauss", "tangential_P", "tangential_Q", "nodal_Qperp", "normal_P"):
        if key in rep:
            assert rep[key] <= 1e-10 * scale, key


def test_unprojected_gauss_residual_is_weak_div(holed):
    s = holed.random_state(np.random.default_rng(7), constrained=False)
    D = build_weak_div(HOLED, holed.bc)
    ref = maxabs(D.matrix @ holed.edges.restrict(s.P))
    assert ref > 1.0
    assert holed.check_constraints(s)["gauss"] == ref
    with pytest.raises(ConstraintViolation) as info:
        holed.evolve(s, 1.0)
    assert info.value.residual == ref


def test_harmonic_momentum_drives_linear_growth(holed):
    h = holed.harmonic_basis[:, 0]
    s = holed.state(np.zeros(holed.nodes.size), np.zeros_like(h), h)
    for t in (1.0, 7.5):
        out = holed.evolve(s, t)
        assert maxabs(holed.edges.restrict(out.Q) - t * h) <= 1e-10 * t * maxabs(h)
        assert maxabs(holed.edges.restrict(out.P) - h) <= 1e-10 * maxabs(h)


def test_transverse_mode_oscillates(holed):
    dec = holed.decomposition
    k = dec.kernel_count + 3
    v, w = dec.eigenvectors[:, k], np.sqrt(dec.eigenvalues[k])
    s = holed.state(np.zeros(holed.nodes.size), v, np.zeros_like(v))
    e0 = holed.energy(s)
    for t in (0.2, 3.0, 100.0):
        out = holed.evolve(s, t)
        assert maxabs(holed.edges.restrict(out.Q) - np.cos(w * t) * v) <= 1e-9 * maxabs(v)
        assert maxabs(holed.edges.restrict(out.P) + w * np.sin(w * t) * v) <= 1e-9 * w * maxabs(v)
        assert abs(holed.energy(out) - e0) <= 1e-12 * e0


def test_gauss_preserved_and_energy_conserved(holed):
    s = holed.random_state(np.random.default_rng(8))
    e0 = holed.energy(s)
    for t in np.linspace(0, 100, 11):
        out = holed.evolve(s, t)
        assert holed.check_constraints(out)["gauss"] <= 1e-9
        assert abs(holed.energy(out) - e0) <= 1e-12 * abs(e0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), t1=st.floats(0, 40), t2=st.floats(0, 40))
def test_maxwell_flow_property(seed, t1, t2):
    model = _absolute_holed()
    s = model.random_state(np.random.default_rng(seed))
    chi = np.random.default_rng(seed + 1).standard_normal(model.nodes.size)
    a = model.evolve(s, t1 + t2, chi)
    b = model.evolve(model.evolve(s, t1, chi), t2, chi)
    for x, y in ((a.Q, b.Q), (a.P, b.P), (a.Qperp, b.Qperp)):
        assert np.linalg.norm(x - y) <= 1e-10 * max(np.linalg.norm(x), 1.0)


_CACHE = {}


def _absolute_holed():
    if "m" not in _CACHE:
        _CACHE["m"] = MaxwellModel(HOLED, Absolute())
    return _CACHE["m"]


def test_gauge_choices_agree_on_observables(holed):
    rng = np.random.default_rng(9)
    s = holed.random_state(rng)
    chi = rng.standard_normal(holed.nodes.size)
    phi = rng.standard_normal(holed.nodes.size)
    shifted = holed.gauge_transform(s, phi, rng.standard_normal(holed.nodes.size))
    for t in (0.7, 30.0):
        a = holed.evolve(s, t)
        b = holed.evolve(s, t, chi)
        c = holed.evolve(shifted, t)
        fa = holed.field_strength(a)
        sc = max(maxabs(fa), maxabs(a.P))
        for other in (b, c):
            assert maxabs(holed.field_strength(other) - fa) <= 1e-10 * sc
            assert maxabs(other.P - a.P) <= 1e-10 * sc
        assert maxabs(b.Qperp - (s.Qperp + t * holed.nodes.embed(chi))) <= 1e-12 * t * maxabs(chi)


def test_gauge_transform_examples(holed):
    rng = np.random.default_rng(10)
    s = holed.random_state(rng)
    nn = holed.nodes.size
    same = holed.gauge_transform(s, np.zeros(nn), np.zeros(nn))
    assert np.array_equal(same.Q, s.Q) and np.array_equal(same.P, s.P) and np.array_equal(same.Qperp, s.Qperp)
    phi = rng.standard_normal(nn)
    out = holed.gauge_transform(s, phi, np.zeros(nn))
    assert maxabs(holed.field_strength(out) - holed.field_strength(s)) <= 1e-12 * maxabs(holed.grad @ phi)
    # Qperp shift changes H by <weak_div P, chi>, which vanishes on the Gauss-constrained set
    chi = rng.standard_normal(nn)
    moved = holed.gauge_transform(s, np.zeros(nn), chi)
    assert abs(holed.energy(moved) - holed.energy(s)) <= 1e-10 * max(abs(holed.energy(s)), 1.0)


def test_gauge_transform_rejects_bc_violation():
    m = MaxwellModel(HOLED, Relative())
    s = m.random_state(np.random.default_rng(11))
    phi = np.zeros(HOLED.count("node"))
    phi[0] = 1.0                      # corner node is outside the relative node space
    with pytest.raises(ValueError):
        m.gauge_transform(s, phi, np.zeros(m.nodes.size))
    with pytest.raises(ValueError):
        m.gauge_transform(s, np.zeros(3), np.zeros(m.nodes.size))


def test_reduce_unreduce(holed):
    nT = holed.transverse_basis.shape[1]
    nh = holed.harmonic_basis.shape[1]
    zero = holed.unreduce(ReducedState(np.zeros(nT), np.zeros(nT), np.zeros(nh), np.zeros(nh)))
    assert maxabs(zero.Q) == 0 and maxabs(zero.P) == 0 and maxabs(zero.Qperp) == 0
    rng = np.random.default_rng(12)
    r = ReducedState(*(rng.standard_normal(k) for k in (nT, nT, nh, nh)))
    back = holed.reduce(holed.unreduce(r))
    for a, b in zip((r.qT, r.pT, r.qh, r.ph), (back.qT, back.pT, back.qh, back.ph)):
        assert maxabs(a - b) <= 1e-10 * max(maxabs(a), 1.0)
    s = holed.random_state(rng)
    for t in (0.4, 25.0):
        lhs = holed.reduce(holed.evolve(s, t))
        rhs = holed.evolve_reduced(holed.reduce(s), t)
        for a, b in zip((lhs.qT, lhs.pT, lhs.qh, lhs.ph), (rhs.qT, rhs.pT, rhs.qh, rhs.ph)):
            assert maxabs(a - b) <= 1e-9 * max(maxabs(b), 1.0)


def test_reduce_rejects_unconstrained(holed):
    with pytest.raises(ConstraintViolation):
        holed.reduce(holed.random_state(np.random.default_rng(13), constrained=False))


def test_symplectic_form_preserved(holed):
    rng = np.random.default_rng(14)
    a, b = holed.random_state(rng), holed.random_state(rng)

    def pair(x, y):
        return float(np.dot(holed.me, holed.edges.restrict(x.Q) * holed.edges.restrict(y.P))
                     - np.dot(holed.me, holed.edges.restrict(y.Q) * holed.edges.restrict(x.P)))

    w0 = pair(a, b)
    ref = np.sqrt(holed.energy(a) * holed.energy(b)) + abs(w0)
    for t in (1.0, 50.0, 100.0):
        assert abs(pair(holed.evolve(a, t), holed.evolve(b, t)) - w0) <= 1e-10 * ref
