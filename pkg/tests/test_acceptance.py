"""Acceptance criteria 1-9, each printing one PASS/FAIL line."""
import json
import time

import numpy as np
import pytest
from scipy.linalg import expm

from psolv import corpus
from psolv.cli import main
from psolv.estimate import (F0_CORPUS, bisect_T, estimate_symbol, lower_order_example,
                            reduce_lower_order, verify_propest_conjugated, verify_west3)
from psolv.grid import PhaseGrid, TimeGrid, sample_scalar
from psolv.psi import delta0_checks, sign_partition, signed_distance
from psolv.pseudo_sign import brute_force_rho, build_rho, certify_pseudo_sign
from psolv.quantization import (CoherentFrame, interior_subspace, restricted_norm,
                                wick_quantize)
from psolv.systems import block_reduce, gallery, gallery_item, principal_type_test
from psolv.weights import build_weights, certify_inequalities


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail
    return emit


def corpus_fields(n=64, n_t=33, h=0.1):
    g = PhaseGrid.compatible(n, h=h)
    tm = TimeGrid.symmetric(1.0, n_t)
    return [(s.name, sample_scalar(s.f, tm, g)) for s in corpus.distance_corpus()]


def test_criterion_1_signed_distance(verdict):
    t0 = time.perf_counter()
    fields = corpus_fields()
    bad = []
    for name, f in fields:
        c = delta0_checks(f, signed_distance(sign_partition(f), f.grid))
        if not (c["bound_ok"] and c["monotone_ok"] and c["sign_ok"] and c["lipschitz_ok"]):
            bad.append(name)
    dt = time.perf_counter() - t0
    verdict(1, len(fields) >= 10 and not bad and dt < 60,
            f"{len(fields)} symbols at 33x64x64, failures={bad}, {dt:.1f}s")


def test_criterion_2_weights(verdict):
    worst, bad = 0.0, []
    for name, f in corpus_fields():
        c = certify_inequalities(build_weights(f, signed_distance(sign_partition(f), f.grid)))
        worst = max(worst, c["mest0_C0"])
        if not (c["hhhest_ok"] and c["chain_ok"] and c["qmax_ok"] and c["mest0_ok"]):
            bad.append(name)
    verdict(2, not bad and np.isfinite(worst) and worst <= 64,
            f"failures={bad}, corpus max M H^(3/2) <d0>^2 / m = {worst:.3g} (budget 64)")


def test_criterion_3_pseudo_sign(verdict):
    worst_rel, bad = 0.0, []
    for name, f in corpus_fields(n=32, n_t=17):
        d = signed_distance(sign_partition(f), f.grid)
        w = build_weights(f, d)
        ps = build_rho(d.delta0, w.m, f.time, 1.0)
        ref = brute_force_rho(d.delta0, w.m, f.time, 1.0)
        rel = np.abs(ps.rho - ref).max() / max(np.abs(ref).max(), 1e-300)
        worst_rel = max(worst_rel, rel)
        c = certify_pseudo_sign(ps, d.delta0, w.m, f.grid)
        if not (rel <= 1e-12 and c["rho_bound_ok"] and c["derivative_ok"]):
            bad.append(name)
    verdict(3, not bad, f"failures={bad}, max relative sweep/brute-force gap {worst_rel:.2e}")


def _nonneg_bump(seed, g):
    rng = np.random.default_rng(seed)
    X, XI = g.mesh()
    a = np.zeros(g.shape)
    for _ in range(3):
        c = rng.uniform(-3, 3, 2)
        a += rng.uniform(0.2, 1.0) * np.exp(-((X - c[0]) ** 2 + (XI - c[1]) ** 2)
                                            / (2 * rng.uniform(0.8, 2.0) ** 2))
    return a


def test_criterion_4_wick(verdict):
    t0 = time.perf_counter()
    details, ok = [], True
    for h in (0.1, 0.05):
        g = PhaseGrid.compatible(32, h=h)
        Q = interior_subspace(g, margin=4)
        one = wick_quantize(np.ones(g.shape), g, tail_tol=np.inf).entries
        id_err = restricted_norm(one - np.eye(32), Q)
        fr = CoherentFrame(g)
        min_ev, excess, frame_gap = np.inf, -np.inf, 0.0
        for seed in range(20):
            a = _nonneg_bump(seed, g)
            op = wick_quantize(a, g, tail_tol=np.inf)
            sup = np.abs(a).max()
            min_ev = min(min_ev, np.linalg.eigvalsh(op.hermitian_part()).min() / sup)
            excess = max(excess, op.norm() - sup)
            frame_gap = max(frame_gap, np.abs(fr.operator(a).entries - op.entries).max())
        ok &= id_err <= 1e-6 and min_ev >= -1e-6 and excess <= 1e-6 and frame_gap <= 1e-6
        details.append(f"h={h}: |1^W-I|={id_err:.1e} min_ev/sup={min_ev:.1e} "
                       f"norm excess={excess:.1e} frame gap={frame_gap:.1e}")
    dt = time.perf_counter() - t0
    verdict(4, ok and dt < 120, "; ".join(details) + f"; {dt:.1f}s")


def test_criterion_5_multiplier_estimate(verdict, tmp_path):
    t0 = time.perf_counter()
    C0, bad = {}, []
    for name in corpus.ESTIMATE_CORPUS:
        for h in (0.2, 0.1, 0.05):
            b = bisect_T(estimate_symbol(name), h, name, n_x=48, n_t=33, n_random=20)
            rep = b["report"]
            if b["T"] is None or not rep.verdict or len(rep.trials) != 30:
                bad.append((name, h))
                continue
            C0[name, h] = rep.fitted_C0
    spread = {n: max(C0[n, h] for h in (0.2, 0.1, 0.05)) / min(C0[n, h] for h in (0.2, 0.1, 0.05))
              for n in corpus.ESTIMATE_CORPUS if all((n, h) in C0 for h in (0.2, 0.1, 0.05))}
    code = main(["verify", "--symbol", "minus_t_times_g", "--skip-gate", "--out",
                 str(tmp_path)])
    neg = json.loads((tmp_path / "verify.json").read_text())["result"]["estimate"]
    dt = time.perf_counter() - t0
    ok = (len(corpus.ESTIMATE_CORPUS) >= 5 and not bad and max(spread.values()) <= 4
          and neg["n_nonpositive"] >= 1 and code == 1 and dt < 600)
    verdict(5, ok, f"failures={bad}, max C0 spread over h {max(spread.values()):.2f} "
                   f"(budget 4), negative control nonpositive trials={neg['n_nonpositive']}, "
                   f"{dt:.0f}s")


def test_criterion_6_west3(verdict):
    c1, bad = {}, []
    g = PhaseGrid.compatible(32, 10.0, h=0.1)
    tm = TimeGrid.symmetric(1.0, 9)
    for s in corpus.distance_corpus():
        f = sample_scalar(s.f, tm, g)
        d = signed_distance(sign_partition(f), g)
        w = build_weights(f, d)
        r = verify_west3(w.m, build_rho(d.delta0, w.m, tm, 1.0), g, 0.1)
        c1[s.name] = r["c1"]
        if not r["ok"]:
            bad.append(s.name)
    g1 = PhaseGrid.compatible(32, 10.0, h=1.0)
    f = sample_scalar(corpus.get("zero").f, tm, g1)
    d = signed_distance(sign_partition(f), g1)
    w = build_weights(f, d)
    zero = verify_west3(w.m, build_rho(d.delta0, w.m, tm, 1.0), g1, 1.0)["c1"]
    verdict(6, not bad and 0.3 <= zero <= 0.7,
            f"min corpus c1={min(c1.values()):.3g}, f=0 at h=1: c1={zero:.4f}")


def test_criterion_7_gallery(verdict):
    mism = [r.name for r in gallery() if not all(r.matches().values())]
    rng = np.random.default_rng(5)
    A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) + 2 * np.eye(2)
    B = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) + 2 * np.eye(2)
    inv_bad = []
    for r in gallery():
        spec = gallery_item(r.name)
        P, w0 = spec["P"], spec["w0"]
        base = principal_type_test(P, w0)["is_pt"]
        if (principal_type_test(lambda w: A @ P(w) @ B, w0)["is_pt"] != base
                or principal_type_test(lambda w: P(w).conj().T, w0)["is_pt"] != base):
            inv_bad.append(r.name)
    U, _ = np.linalg.qr(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
    P = lambda w: U @ np.diag([w[0] + 1j * w[1], 1.0, -2.0 + 1j]) @ U.conj().T
    pts = np.column_stack([np.linspace(-0.2, 0.2, 21), np.linspace(0.1, -0.1, 21)])
    br = block_reduce(P, pts)
    norm_P = max(np.linalg.norm(P(w), 2) for w in pts)
    rt = br.roundtrip.max()
    verdict(7, not mism and not inv_bad and br.ok and rt <= 1e-8 * norm_P,
            f"verdict mismatches={mism}, invariance failures={inv_bad}, "
            f"round trip {rt:.1e} (budget {1e-8 * norm_P:.1e})")


def test_criterion_8_lower_order(verdict):
    tm = TimeGrid.symmetric(1.0, 33)
    c = np.array([[0.3, 2 + 0.5j], [2 - 0.5j, -1.2]])
    red = reduce_lower_order(lambda t, x, xi: c, tm)
    oracle = np.abs(red.E[:, 0, 0] - np.array([expm(-1j * c * t) for t in tm.t])).max()
    g = PhaseGrid.compatible(48, h=0.1)
    res = max(reduce_lower_order(F, tm, g, midpoints=True).residual for F in F0_CORPUS.values())
    runner = lambda f, h, T, name, **kw: verify_propest_conjugated(f, lower_order_example, h, T,
                                                                   symbol=name, **kw)
    conj = {}
    for name in ("t_tanh", "x"):
        b = bisect_T(estimate_symbol(name), 0.1, name, runner=runner, n_iter=4)
        conj[name] = (b["T"], b["report"].verdict, b["report"].extra["n_nonpositive"])
    ok = oracle <= 1e-10 and res <= 1e-8 and all(v[0] is not None and v[1] for v in conj.values())
    verdict(8, ok, f"expm oracle gap {oracle:.1e}, corpus residual {res:.1e}, "
                   f"conjugated (T, all positive, nonpositive) {conj}")


def test_criterion_9_reproducibility(verdict, tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('symbol = "t_tanh"\nh = 0.1\nT = 1.0\nseed = 11\n')
    codes = [main(["verify", "--config", str(cfg), "--out", str(tmp_path / d)]) for d in "ab"]
    a = (tmp_path / "a" / "verify.json").read_bytes()
    b = (tmp_path / "b" / "verify.json").read_bytes()
    stamped = [k for k in _keys(json.loads(a)) if "stamp" in k or "date" in k or "clock" in k]
    verdict(9, a == b and codes == [0, 0] and not stamped,
            f"exit codes {codes}, {len(a)} bytes, identical={a == b}, timestamp keys={stamped}")


def _keys(o):
    if isinstance(o, dict):
        for k, v in o.items():
            yield k
            yield from _keys(v)
    elif isinstance(o, list):
        for v in o:
            yield from _keys(v)
