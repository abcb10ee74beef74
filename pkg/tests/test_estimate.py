import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psolv import corpus
from psolv.estimate import (GateError, Trial, apply_slices, assemble_P0, bisect_T,
                            build_multiplier, build_pipeline, derivative_term_check,
                            estimate_symbol, inner, norm2, reduce_lower_order, run_estimate,
                            time_derivative, time_window, trial_corpus, verify_propest,
                            verify_propest_conjugated, verify_west3)
from psolv.grid import PhaseGrid, TimeGrid, sample_scalar
from psolv.psi import sign_partition, signed_distance
from psolv.pseudo_sign import build_rho
from psolv.quantization import CoherentFrame
from psolv.weights import build_weights

G32 = PhaseGrid.compatible(32)


def product(phi, psi):
    return phi[:, None] * psi[None, :]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=5, max_size=5), st.integers(5, 40))
def test_time_derivative_exact_on_quartics(c, n):
    t = np.linspace(-1, 1, n)
    p = np.polynomial.Polynomial(c)
    d = time_derivative(p(t), t[1] - t[0])
    np.testing.assert_allclose(d, p.deriv()(t), atol=1e-8 * (1 + np.abs(c).sum()) * n**2)


def test_inner_hermitian():
    rng = np.random.default_rng(0)
    tm = TimeGrid.symmetric(1.0, 9)
    u, v = (rng.standard_normal((9, 5)) + 1j * rng.standard_normal((9, 5)) for _ in range(2))
    assert inner(u, v, tm, 0.3) == pytest.approx(np.conj(inner(v, u, tm, 0.3)))
    assert norm2(u, tm, 0.3) > 0


def test_P0_zero_symbol_is_time_derivative():
    tm = TimeGrid.symmetric(1.0, 129)
    phi = np.exp(-tm.t**2 / (2 * 0.2**2))
    psi = np.exp(-G32.x**2 / 2)
    P0 = assemble_P0(lambda t, x, xi: 0 * x, G32, tm)
    out = P0.apply(product(phi, psi))
    dphi = -tm.t / 0.2**2 * phi
    np.testing.assert_allclose(out, product(-1j * dphi, psi), atol=1e-4)


def test_P0_constant_symbol():
    tm = TimeGrid.symmetric(1.0, 17)
    u = product(time_window(tm.t, -1, 1), np.exp(-G32.x**2 / 2))
    P0 = assemble_P0(lambda t, x, xi: 0.7 + 0 * x, G32, tm)
    ref = assemble_P0(lambda t, x, xi: 0 * x, G32, tm).apply(u) + 0.7j * u
    np.testing.assert_allclose(P0.apply(u), ref, atol=1e-8)


def test_P0_pauli_block():
    tm = TimeGrid.symmetric(1.0, 9)
    s1 = np.array([[0, 1], [1, 0]], complex)
    P0 = assemble_P0(lambda t, x, xi: 0 * x, G32, tm, F0=lambda t, x, xi: s1)
    assert P0.N == 2
    psi = np.exp(-G32.x**2 / 2)
    phi = np.ones(9)  # D_t of a constant vanishes
    z = np.zeros((9, 32))
    for comp in range(2):
        u = np.concatenate([product(phi, psi) if c == comp else z for c in range(2)], axis=1)
        out = P0.apply(u)
        other = out[:, (1 - comp) * 32:(2 - comp) * 32]
        np.testing.assert_allclose(other, product(phi, psi), atol=1e-8)
        np.testing.assert_allclose(out[:, comp * 32:(comp + 1) * 32], 0, atol=1e-8)
    with pytest.raises(ValueError):
        assemble_P0(lambda t, x, xi: 0 * x, G32, tm, F0=lambda t, x, xi: s1, N=3)


def test_multiplier_trivial():
    z = build_multiplier(np.zeros((3,) + G32.shape), G32)
    assert all(np.abs(op.entries).max() == 0 for op in z)
    one = build_multiplier(np.ones((3,) + G32.shape), G32)
    assert all(np.abs(op.entries - np.eye(32)).max() <= 1e-6 for op in one)


def test_multiplier_of_signed_distance_of_x():
    h = 0.1
    g = PhaseGrid.compatible(32, h=h)
    tm = TimeGrid.symmetric(1.0, 5)
    f = sample_scalar(lambda t, x, xi: x + 0 * xi, tm, g)
    d = signed_distance(sign_partition(f), g).delta0
    X, _ = g.mesh()
    target = np.sign(X) * np.minimum(np.abs(X), h**-0.5)
    np.testing.assert_allclose(d[2], target, atol=1e-12)
    op = build_multiplier(d, g)[2]
    frame = CoherentFrame(g).operator(target).entries
    assert np.abs(op.entries - frame).max() <= 1e-6
    # smoothed sign(x) multiplication: decays off the diagonal
    far = np.abs(g.x[:, None] - g.x[None, :]) > 4
    far &= np.abs(g.x[:, None] + g.x[None, :]) < 6  # away from the periodic seam
    assert np.abs(op.entries[far]).max() <= 1e-2 * np.abs(op.entries).max()


def small_pipeline(name, h=0.1, T=1.0, **kw):
    return build_pipeline(estimate_symbol(name), h, T, n_x=32, n_t=33, **kw)


def test_propest_zero_symbol_matches_time_derivative_of_multiplier():
    p = small_pipeline("zero")
    trials = trial_corpus(p.grid, p.time, 1.0, n_random=4)
    rep = verify_propest(p.P0, p.multiplier, trials, 1.0, 0.1, "zero")
    assert rep.verdict and np.isfinite(rep.fitted_C0)
    # f = 0: Im <D_t u, b u> = (1/2) int <(d_t b) u, u> dt up to time discretization
    db = time_derivative(np.array([op.entries for op in p.multiplier]), p.time.dt)
    for tr, r in zip(trials, rep.rhs_values):
        half = 0.5 * inner(apply_slices(db, tr.values), tr.values, p.time, p.grid.dx).real
        assert r == pytest.approx(half, rel=2.5e-2)


def test_propest_t_tanh():
    p = small_pipeline("t_tanh")
    rep = verify_propest(p.P0, p.multiplier, trial_corpus(p.grid, p.time, 1.0), 1.0, 0.1,
                         "t_tanh")
    assert rep.verdict and len(rep.trials) == 30 and min(rep.rhs_values) > 0
    assert rep.extra["cauchy_schwarz_ok"]


def test_gate_refuses_violating_symbol():
    with pytest.raises(GateError):
        small_pipeline("minus_t_tanh")


def test_skip_gate_negative_control():
    rep = run_estimate(estimate_symbol("minus_t_times_g"), 0.1, 1.0, "minus_t_times_g",
                       skip_gate=True)
    assert not rep.verdict and rep.extra["n_nonpositive"] >= 1
    assert rep.extra["psibar_holds"] is False


def test_trial_errors():
    p = small_pipeline("zero")
    bad = Trial("flat", np.ones((33, 32), complex))
    wide = TimeGrid(-2.0, 2.0, 33, 1.0)
    P0 = assemble_P0(lambda t, x, xi: 0 * x, p.grid, wide)
    with pytest.raises(ValueError, match="not supported"):
        verify_propest(P0, p.multiplier, [bad], 1.0, 0.1)
    with pytest.raises(ValueError, match="degenerate"):
        verify_propest(p.P0, p.multiplier, [Trial("z", np.zeros((33, 32)))], 1.0, 0.1)


def test_trial_corpus_reproducible():
    tm = TimeGrid.symmetric(0.5, 17)
    a = trial_corpus(G32, tm, 0.5, seed=4, N=2)
    b = trial_corpus(G32, tm, 0.5, seed=4, N=2)
    assert len(a) == 30 and a[0].values.shape == (17, 64)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
    assert [t.seed for t in a] == [t.seed for t in b]


@pytest.mark.parametrize("name", ["zero", "t_tanh", "x"])
def test_derivative_term(name):
    p = small_pipeline(name)
    rng = np.random.default_rng(2)
    vecs = [np.exp(-(p.grid.x - y) ** 2 / 2 + 1j * e * p.grid.x)
            for y, e in rng.uniform(-2, 2, (5, 2))]
    assert derivative_term_check(p.pseudo_sign, p.m, p.grid, vecs)["ok"]


def west3_inputs(name, h, scale=1.0):
    g = PhaseGrid.compatible(32, 10.0, h=h)
    tm = TimeGrid.symmetric(1.0, 9)
    f = sample_scalar(corpus.get(name).f, tm, g)
    d = signed_distance(sign_partition(f), g)
    w = build_weights(f, d)
    ps = build_rho(d.delta0, w.m, tm, 1.0)
    return scale * w.m, ps, g


def test_west3_zero_symbol():
    # m = 1/2 and |B| <= 1/2, so c_1 = 1 / (2 h^(1/2) (1 + 1/4))
    for h in (1.0, 0.1):
        r = verify_west3(*west3_inputs("zero", h), h)
        assert r["c1"] == pytest.approx(1 / (2.5 * h**0.5), rel=1e-6)
    assert 0.3 <= verify_west3(*west3_inputs("zero", 1.0), 1.0)["c1"] <= 0.7


def test_west3_homogeneous():
    a = verify_west3(*west3_inputs("t_tanh", 0.1), 0.1)["c1"]
    b = verify_west3(*west3_inputs("t_tanh", 0.1, 10.0), 0.1)["c1"]
    assert b == pytest.approx(10 * a, rel=1e-8)


@pytest.mark.parametrize("name", [s.name for s in corpus.distance_corpus()])
def test_west3_corpus_positive(name):
    r = verify_west3(*west3_inputs(name, 0.1), 0.1)
    assert r["ok"] and r["c1"] > 0


def test_west3_rejects_nonpositive_weight():
    m, ps, g = west3_inputs("zero", 0.1)
    with pytest.raises(ValueError):
        verify_west3(-m, ps, g, 0.1)


def test_reduction_oracles():
    tm = TimeGrid.symmetric(1.0, 17)
    r = reduce_lower_order(lambda t, x, xi: np.zeros((2, 2)), tm)
    assert np.abs(r.E - np.eye(2)).max() == 0
    c = 0.8
    r = reduce_lower_order(lambda t, x, xi: c * np.eye(3), tm)
    exact = np.exp(-1j * c * tm.t)[:, None, None] * np.eye(3)
    assert np.abs(r.E[:, 0, 0] - exact).max() <= 1e-10 and r.residual <= 1e-8
    nil = np.array([[0, 1], [0, 0]])
    r = reduce_lower_order(lambda t, x, xi: np.cos(t) * nil, tm)
    exact = np.eye(2) - 1j * np.sin(tm.t)[:, None, None] * nil
    assert np.abs(r.E[:, 0, 0] - exact).max() <= 1e-10 and r.residual <= 1e-8


def test_reduction_asymmetric_grid_and_fields():
    tm = TimeGrid(-1.0, 1.3, 24, 1.0)
    c = np.array([[0.3, 0.5j], [-0.5j, -0.2]])
    r = reduce_lower_order(lambda t, x, xi: c, tm)
    from scipy.linalg import expm
    exact = np.array([expm(-1j * c * t) for t in tm.t])
    assert np.abs(r.E[:, 0, 0] - exact).max() <= 1e-10
    # array input is spline-interpolated in t
    vals = np.broadcast_to(c, (24, 4, 4, 2, 2))
    ra = reduce_lower_order(vals, tm, PhaseGrid.compatible(4))
    assert np.abs(ra.E[:, 1, 2] - exact).max() <= 1e-10


def test_reduction_det_warning():
    tm = TimeGrid(-1.0, 3.0, 17, 1.0)
    r = reduce_lower_order(lambda t, x, xi: -5j * np.eye(2), tm)
    assert r.min_abs_det < 1e-8 and r.warnings


def F0_example(t, x, xi):
    g = np.exp(-(x**2 + xi**2) / 8)[..., None, None]
    A = np.array([[0.5, 1 + 1j], [1 - 1j, -0.5]])
    return 0.3 * g * A + 0.2 * np.cos(2 * t) * np.array([[0, 1], [0, 0]])


def test_conjugated_estimate():
    rep = verify_propest_conjugated(estimate_symbol("t_tanh"), F0_example, 0.1, 1.0, n_x=32,
                                    n_random=4, symbol="t_tanh")
    assert rep.verdict and rep.extra["reduction_residual"] <= 1e-8
    assert len(rep.extra["direct_rhs"]) == 14


def test_bisect_T():
    kw = dict(n_x=32, n_random=2)
    ok = bisect_T(estimate_symbol("t_tanh"), 0.1, "t_tanh", **kw)
    assert ok["status"] == "ok" and ok["T"] == 1.0
    bad = bisect_T(estimate_symbol("minus_t_times_g"), 0.1, "minus_t_times_g", n_iter=3,
                   skip_gate=True, **kw)
    assert bad["status"] in ("fails at larger T", "fails at all tested T")
    if bad["T"] is not None:
        assert bad["report"].verdict and bad["T"] < 1.0


def test_report_serialization(tmp_path):
    p = small_pipeline("zero")
    trials = trial_corpus(p.grid, p.time, 1.0, n_random=1)
    rep = verify_propest(p.P0, p.multiplier, trials, 1.0, 0.1, "zero")
    d = json.loads(rep.to_json())
    assert d["verdict"] is True and d["symbol"] == "zero" and len(d["lhs"]) == 11
    assert rep.to_json() == rep.to_json()
    rep.to_csv(tmp_path / "r.csv")
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0] == "trial,lhs,rhs,ratio" and len(rows) == 12
    rep.fitted_C0 = float("inf")
    assert json.loads(rep.to_json())["fitted_C0"] == "inf"
