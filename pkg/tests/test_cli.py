import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psolv import cli
from psolv.cli import ConfigError, main, resolve_config
from psolv.expr import ExprError, parse_symbol
from psolv.grid import PhaseGrid, TimeGrid, read_field, sample_matrix, write_field


# -- expression language -----------------------------------------------------------

def test_expr_values():
    f = parse_symbol("t*(1+tanh(xi)) - 2^-x^2 + max(x, 0.5e1)/pi")
    x = np.array([1.0, 2.0])
    np.testing.assert_allclose(f(0.5, x, 0.0), 0.5 - 2.0 ** -(x**2) + 5 / np.pi)
    g = parse_symbol("-x**2 + abs(ξ) * exp(-t) + min(sin(x), cos(x))")
    np.testing.assert_allclose(g(1.0, 0.3, -2.0),
                               -0.09 + 2 * np.exp(-1) + min(np.sin(0.3), np.cos(0.3)))
    assert parse_symbol("2^3^2")(0, 0.0, 0.0) == 512  # right associative
    assert parse_symbol("3")(0, np.zeros((2, 3)), 0).shape == (2, 3)


@pytest.mark.parametrize("src", ["1+", "foo(x)", "sin(x,1)", "(x", "x $ 2", "y", "x 2", "",
                                 "max(x)"])
def test_expr_errors(src):
    with pytest.raises(ExprError):
        parse_symbol(src)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=4, max_size=4),
       st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_expr_matches_numpy(c, t, x, xi):
    src = f"{c[0]!r} + {c[1]!r}*x - ({c[2]!r})*t*xi + {c[3]!r}*tanh(x - xi)^2"
    ref = c[0] + c[1] * x - c[2] * t * xi + c[3] * np.tanh(x - xi) ** 2
    assert parse_symbol(src)(t, x, xi) == pytest.approx(ref, rel=1e-12, abs=1e-12)


# -- configuration -------------------------------------------------------------------

def test_config_validation(tmp_path):
    cfg = resolve_config({"symbol": "zero", "h": 0.2}, {"seed": 3})
    assert cfg["h"] == 0.2 and cfg["seed"] == 3 and cfg["n_x"] == 48
    with pytest.raises(ConfigError, match="unknown"):
        resolve_config({"bogus": 1})
    with pytest.raises(ConfigError):
        resolve_config({"n_x": 4.5})
    with pytest.raises(ConfigError):
        resolve_config({"h": 2.0})
    with pytest.raises(ConfigError):
        resolve_config({"skip_gate": "yes"})
    (tmp_path / "a.toml").write_text('symbol = "x"\nh = 0.05\npoint = [0, 1]\n')
    (tmp_path / "a.json").write_text('{"symbol": "x", "h": 0.05, "point": [0, 1]}')
    assert cli.load_config_file(tmp_path / "a.toml") == cli.load_config_file(tmp_path / "a.json")
    (tmp_path / "bad.toml").write_text("symbol = \n")
    with pytest.raises(ConfigError):
        cli.load_config_file(tmp_path / "bad.toml")


def run(tmp_path, *args):
    return main(list(args) + ["--out", str(tmp_path)])


def report(tmp_path, name):
    return json.loads((tmp_path / name).read_text())


# -- check-psi -------------------------------------------------------------------------

def test_check_psi_exit_codes(tmp_path):
    assert run(tmp_path / "a", "check-psi", "--symbol", "t_times_g") == 0
    assert run(tmp_path / "b", "check-psi", "--symbol", "minus_t_times_g") == 1
    r = report(tmp_path / "b", "check_psi.json")
    assert r["result"]["violations"] and r["result"]["trace_agrees"]
    assert r["config"]["symbol"] == "minus_t_times_g" and r["version"]
    assert run(tmp_path / "c", "check-psi", "--expr", "t*(1+") == 2
    assert run(tmp_path / "d", "check-psi", "--symbol", "nope") == 2
    assert run(tmp_path / "e", "check-psi") == 2


def test_check_psi_expression_and_field(tmp_path):
    assert run(tmp_path, "check-psi", "--expr", "t*exp(-(x^2+xi^2)/16)") == 0
    assert run(tmp_path / "s", "fields", "sample", "--expr=-t*exp(-x^2)", "--n-x", "16",
               "--n-t", "9") == 0
    fld = read_field(tmp_path / "s" / "symbol.pslf")
    assert fld.values.shape == (9, 16, 16)
    assert run(tmp_path / "f", "check-psi", "--field", str(tmp_path / "s" / "symbol.pslf")) == 1


# -- classify and gallery ---------------------------------------------------------------

def test_classify_named(tmp_path):
    assert run(tmp_path, "classify", "--matrix", "symmetric_w1_w2") == 0
    r = report(tmp_path, "classify.json")["result"]
    assert r["principal_type"] is True and r["constant_characteristics"] is False
    assert r["thresholds"]["rank_tol"] == 1e-8
    assert run(tmp_path / "i", "classify", "--matrix", "identity") == 0
    r = report(tmp_path / "i", "classify.json")["result"]
    assert "elliptic" in r["note"] and r["pt_certificate"]["verdict"] == "elliptic"
    assert run(tmp_path / "u", "classify", "--matrix", "unknown") == 2


def test_classify_matrix_field(tmp_path):
    g = PhaseGrid(-1, 1, 20, -1, 1, 20)
    tm = TimeGrid.symmetric(1.0, 3)

    def P(t, x, xi):
        out = np.empty(np.shape(x) + (2, 2))
        out[..., 0, 0], out[..., 0, 1] = x, xi
        out[..., 1, 0], out[..., 1, 1] = xi, -x
        return out
    write_field(tmp_path / "sym.pslf", sample_matrix(P, tm, g, 2))
    assert run(tmp_path, "classify", "--matrix-field", str(tmp_path / "sym.pslf"),
               "--point", "0", "0") == 0
    r = report(tmp_path, "classify.json")["result"]
    assert r["principal_type"] is True and r["constant_characteristics"] is False
    assert run(tmp_path, "classify", "--matrix-field", str(tmp_path / "sym.pslf")) == 2


def test_gallery_command(tmp_path):
    assert run(tmp_path, "gallery") == 0
    files = sorted(p.name for p in tmp_path.glob("gallery_*.json"))
    assert len(files) == 8 and "gallery_symmetric.json" in files
    r = report(tmp_path, "gallery_nonsolvex_b1.json")["result"]
    assert all(r["matches"].values())


# -- verify -------------------------------------------------------------------------------

def test_verify_zero(tmp_path):
    assert run(tmp_path, "verify", "--symbol", "zero") == 0
    r = report(tmp_path, "verify.json")["result"]
    assert r["verdict"] and r["weights_certificate"]["ok"] and r["pseudo_sign_certificate"]["ok"]
    assert len(r["estimate"]["rhs"]) == 30
    assert (tmp_path / "estimate.csv").read_text().startswith("trial,lhs,rhs,ratio")


def test_verify_gate_and_skip(tmp_path):
    assert run(tmp_path / "g", "verify", "--symbol", "minus_t_tanh") == 1
    r = report(tmp_path / "g", "verify.json")["result"]
    assert "gate" in r and "estimate" not in r and not r["psibar"]["holds"]
    assert run(tmp_path / "s", "verify", "--symbol", "minus_t_tanh", "--skip-gate") == 1
    est = report(tmp_path / "s", "verify.json")["result"]["estimate"]
    assert est["n_nonpositive"] >= 1 and min(est["rhs"]) <= 0


def test_verify_reproducible(tmp_path):
    for d in ("a", "b"):
        assert run(tmp_path / d, "verify", "--symbol", "t_tanh", "--n-x", "32",
                   "--n-random", "5", "--seed", "7") == 0
    assert (tmp_path / "a" / "verify.json").read_bytes() == \
        (tmp_path / "b" / "verify.json").read_bytes()
    assert (tmp_path / "a" / "estimate.csv").read_bytes() == \
        (tmp_path / "b" / "estimate.csv").read_bytes()


def test_verify_bisect_and_config_file(tmp_path):
    (tmp_path / "c.toml").write_text('symbol = "minus_t_times_g"\nskip_gate = true\n'
                                     'bisect = true\nn_x = 32\nn_random = 2\n')
    code = main(["verify", "--config", str(tmp_path / "c.toml"), "--out", str(tmp_path / "o")])
    r = report(tmp_path / "o", "verify.json")["result"]
    assert r["bisection"]["status"] in ("fails at larger T", "fails at all tested T")
    assert code in (0, 1)


# -- weights and fields ------------------------------------------------------------------

def test_weights_and_fields(tmp_path, capsys):
    assert run(tmp_path, "weights", "--symbol", "t_tanh", "--n-x", "16", "--n-t", "9") == 0
    assert report(tmp_path, "weights.json")["result"]["ok"]
    m = read_field(tmp_path / "m.pslf")
    assert m.values.shape == (9, 16, 16) and (m.values > 0).all()
    capsys.readouterr()
    assert main(["fields", "inspect", str(tmp_path / "m.pslf")]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["kind"] == "scalar" and info["shape"] == [9, 16, 16]
    assert main(["fields", "to-csv", str(tmp_path / "m.pslf"), str(tmp_path / "m.csv")]) == 0
    rows = (tmp_path / "m.csv").read_text().splitlines()
    assert rows[0] == "t,x,xi,value" and len(rows) == 1 + 9 * 16 * 16
    assert float(rows[1].split(",")[3]) == m.values[0, 0, 0]
    assert main(["fields", "inspect", str(tmp_path / "missing.pslf")]) == 2


# -- exit-code contract ---------------------------------------------------------------------

def test_runtime_error_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("solver failed")
    monkeypatch.setattr(cli, "check_psibar", boom)
    assert run(tmp_path, "check-psi", "--symbol", "zero") == 3


def test_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("PSOLV_THREADS", "zero")
    assert run(tmp_path, "check-psi", "--symbol", "zero") == 2
    monkeypatch.setenv("PSOLV_THREADS", "1")
    assert run(tmp_path, "check-psi", "--symbol", "zero", "--n-x", "16") == 0
