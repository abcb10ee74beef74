"""
``psolv`` command line: configuration, subcommands and report emission.

Exit codes: 0 pass, 1 assertion or verdict failure, 2 configuration error,
3 runtime error.  Reports are sorted-key JSON without timestamps, so equal
configurations give byte-identical reports.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, corpus
from .estimate import (GateError, bisect_T, build_pipeline, trial_corpus, verify_propest)
from .expr import ExprError, parse_symbol
from .grid import (FieldFormatError, MatrixField, PhaseGrid, ScalarField, TimeGrid, read_field,
                   sample_scalar, write_field)
from .psi import check_psibar, sign_partition, signed_distance, trace_bicharacteristic
from .pseudo_sign import certify_pseudo_sign
from .quantization import read_operator
from .systems import (CLUSTER_TOL, RANK_TOL, classify, gallery, gallery_item)
from .weights import build_weights, certify_inequalities

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("psolv")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class ConfigError(ValueError):
    """Invalid configuration or input file; maps to exit code 2."""


# -- configuration -------------------------------------------------------------

DEFAULTS = {
    "symbol": None, "expr": None, "field": None,
    "matrix": None, "matrix_field": None, "point": None, "time_index": None,
    "h": 0.1, "T": 1.0, "n_x": 48, "n_t": 33, "x_half": None,
    "n_random": 20, "seed": 0, "localize": True, "skip_gate": False, "bisect": False,
    "tol_zero": None, "tol_rank": RANK_TOL, "tol_cluster": CLUSTER_TOL,
    "eps_ball": 0.1, "scale": 1.0, "out": "psolv-out",
}
_TYPES = {
    "symbol": str, "expr": str, "field": str, "matrix": str, "matrix_field": str,
    "point": list, "time_index": int, "h": float, "T": float, "n_x": int, "n_t": int,
    "x_half": float, "n_random": int, "seed": int, "localize": bool, "skip_gate": bool,
    "bisect": bool, "tol_zero": float, "tol_rank": float, "tol_cluster": float,
    "eps_ball": float, "scale": float, "out": str,
}
# not part of the computation, so not echoed into reports
_NOT_ECHOED = ("out",)


def load_config_file(path) -> dict:
    """TOML or JSON key/value file (JSON if the text parses as JSON)."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"config {path} is neither JSON nor TOML: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config must be a table of key/value pairs")
    return data


def _coerce(key, value):
    kind = _TYPES[key]
    if value is None:
        return None
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if kind is list:
        if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{key} must be a list of numbers, got {value!r}")
        return [float(v) for v in value]
    if not isinstance(value, str):
        raise ConfigError(f"{key} must be a string, got {value!r}")
    return value


def resolve_config(file_values: dict | None = None, overrides: dict | None = None) -> dict:
    """Merge defaults, file values and command-line overrides; validate."""
    cfg = dict(DEFAULTS)
    for src in (file_values or {}), (overrides or {}):
        unknown = sorted(set(src) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        for k, v in src.items():
            if v is not None:
                cfg[k] = _coerce(k, v)
    if not 0 < cfg["h"] <= 1:
        raise ConfigError("h must lie in (0, 1]")
    if not cfg["T"] > 0:
        raise ConfigError("T must be positive")
    if cfg["n_x"] < 8 or cfg["n_t"] < 5:
        raise ConfigError("need n_x >= 8 and n_t >= 5")
    if cfg["n_random"] < 0 or cfg["seed"] < 0:
        raise ConfigError("n_random and seed must be nonnegative")
    for k in ("tol_zero", "tol_rank", "tol_cluster", "eps_ball", "scale", "x_half"):
        if cfg[k] is not None and not cfg[k] > 0:
            raise ConfigError(f"{k} must be positive")
    return cfg


def echoed(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if k not in _NOT_ECHOED}


# -- inputs ----------------------------------------------------------------------

def scalar_source(cfg: dict):
    """Callback f(t, x, xi) or a ScalarField read from file, plus a label."""
    chosen = [k for k in ("symbol", "expr", "field") if cfg[k] is not None]
    if len(chosen) != 1:
        raise ConfigError("give exactly one of symbol, expr, field")
    if cfg["field"] is not None:
        try:
            fld = read_field(cfg["field"])
        except (OSError, FieldFormatError) as e:
            raise ConfigError(f"cannot read field {cfg['field']}: {e}") from e
        if not isinstance(fld, ScalarField):
            raise ConfigError("field must hold a scalar symbol")
        return fld, Path(cfg["field"]).name
    if cfg["symbol"] is not None:
        try:
            f = corpus.get(cfg["symbol"]).f
        except KeyError as e:
            raise ConfigError(str(e.args[0])) from e
        label = cfg["symbol"]
    else:
        try:
            f = parse_symbol(cfg["expr"])
        except ExprError as e:
            raise ConfigError(f"expression: {e}") from e
        label = cfg["expr"]
    if cfg["localize"]:
        from .estimate import LOCALIZE
        f = corpus.localize(f, *LOCALIZE)
    return f, label


def sampled(cfg: dict, src) -> ScalarField:
    if isinstance(src, ScalarField):
        return src
    grid = PhaseGrid.compatible(cfg["n_x"], cfg["x_half"], h=cfg["h"])
    return sample_scalar(src, TimeGrid.symmetric(cfg["T"], cfg["n_t"]), grid)


def _identity(w):
    return np.eye(2, dtype=complex)


def matrix_source(cfg: dict) -> dict:
    """Keyword arguments for :func:`classify`."""
    if (cfg["matrix"] is None) == (cfg["matrix_field"] is None):
        raise ConfigError("give exactly one of matrix, matrix_field")
    if cfg["matrix"] == "identity":
        w0 = cfg["point"] or [0.0, 0.0]
        return dict(name="identity", P=_identity, w0=w0,
                    expected={"principal_type": True, "constant_characteristics": True})
    if cfg["matrix"] is not None:
        try:
            spec = gallery_item(cfg["matrix"], cfg["scale"])
        except KeyError as e:
            raise ConfigError(str(e.args[0])) from e
        if cfg["point"] is not None:
            spec = {**spec, "w0": cfg["point"], "expected": {}}
        return spec
    try:
        fld = read_field(cfg["matrix_field"])
    except (OSError, FieldFormatError) as e:
        raise ConfigError(f"cannot read matrix field {cfg['matrix_field']}: {e}") from e
    if not isinstance(fld, MatrixField):
        raise ConfigError("matrix_field must hold a matrix symbol")
    if cfg["point"] is None or len(cfg["point"]) != 2:
        raise ConfigError("matrix_field needs point = [x, xi]")
    i = fld.time.n_t // 2 if cfg["time_index"] is None else cfg["time_index"]
    if not 0 <= i < fld.time.n_t:
        raise ConfigError(f"time_index {i} out of range")
    return dict(name=Path(cfg["matrix_field"]).name, P=field_callback(fld, i), w0=cfg["point"])


def field_callback(fld: MatrixField, i: int):
    """Cubic interpolation of one time slice of a matrix field in (x, xi)."""
    from scipy.interpolate import RegularGridInterpolator
    v = fld.values[i]
    N = fld.dim
    flat = np.concatenate([v.real, v.imag], axis=-1).reshape(v.shape[:2] + (2 * N * N,))
    interp = RegularGridInterpolator((fld.grid.x, fld.grid.xi), flat, method="cubic",
                                     bounds_error=False, fill_value=None)

    def P(w):
        r = interp(np.asarray(w, float)[None])[0].reshape(N, 2 * N)
        return r[:, :N] + 1j * r[:, N:]
    return P


# -- reports ---------------------------------------------------------------------

def _clean(o):
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, np.generic):
        return _clean(o.item())
    if isinstance(o, complex):
        return [_clean(o.real), _clean(o.imag)]
    if isinstance(o, float) and not np.isfinite(o):
        return str(o)
    return o


def write_report(out: Path, name: str, command: str, cfg: dict, result: dict) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    doc = {"tool": "psolv", "version": __version__, "command": command,
           "config": echoed(cfg), "result": result}
    path = out / name
    path.write_text(json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n")
    return path


# -- subcommands -------------------------------------------------------------------

def cmd_check_psi(cfg: dict) -> int:
    src, label = scalar_source(cfg)
    fld = sampled(cfg, src)
    res = check_psibar(fld, cfg["tol_zero"])
    res["symbol"] = label
    # independent route: follow t-lines as flow lines of Re q for q = tau - i f(t, w)
    t = fld.time.t
    T = fld.time.T
    pts = [(v["x"], v["xi"]) for v in res["violations"][:5]] or [(0.0, 0.0)]
    traces = []
    for x0, xi0 in pts:
        j = int(np.argmin(np.abs(fld.grid.x - x0)))
        k = int(np.argmin(np.abs(fld.grid.xi - xi0)))
        col = fld.values[:, j, k]
        q = lambda s, tau, col=col: tau - 1j * np.interp(s, t, col)
        tr = trace_bicharacteristic(q, (t[0], 0.0), step=(t[-1] - t[0]) / 200,
                                    max_steps=400, tau_zero=res["tau_zero"],
                                    window=(t[0], t[-1], -1.0, 1.0))
        traces.append({"x": float(fld.grid.x[j]), "xi": float(fld.grid.xi[k]), **tr.to_json()})
    res["traces"] = traces
    res["trace_agrees"] = bool(all(tr["events"] for tr in traces) if not res["holds"]
                               else not any(tr["events"] for tr in traces))
    res["T"] = T
    path = write_report(Path(cfg["out"]), "check_psi.json", "check-psi", cfg, res)
    print(f"check-psi {label}: {'holds' if res['holds'] else 'violated'} "
          f"({res['n_violations']} violations) -> {path}")
    return EXIT_OK if res["holds"] else EXIT_FAIL


def cmd_classify(cfg: dict) -> int:
    spec = matrix_source(cfg)
    rep = classify(**spec, rank_tol=cfg["tol_rank"], tol=cfg["tol_cluster"],
                   eps_ball=cfg["eps_ball"])
    res = rep.to_dict()
    res["matches"] = rep.matches()
    res["thresholds"] = {"rank_tol": cfg["tol_rank"], "cluster_tol": cfg["tol_cluster"]}
    if rep.pt_certificate.get("verdict") == "elliptic":
        res["note"] = "P(w0) is invertible: elliptic at w0"
    ok = all(res["matches"].values())
    path = write_report(Path(cfg["out"]), "classify.json", "classify", cfg, res)
    print(f"classify {rep.name}: principal_type={rep.principal_type} "
          f"constant_characteristics={rep.constant_characteristics} -> {path}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(cfg: dict) -> int:
    src, label = scalar_source(cfg)
    out = Path(cfg["out"])
    T = cfg["T"] if not isinstance(src, ScalarField) else src.time.T
    res = {"symbol": label}
    if cfg["bisect"] and not isinstance(src, ScalarField):
        b = bisect_T(src, cfg["h"], label, T_max=cfg["T"], n_x=cfg["n_x"], n_t=cfg["n_t"],
                     n_random=cfg["n_random"], seed=cfg["seed"], skip_gate=cfg["skip_gate"])
        res["bisection"] = {"status": b["status"], "tested": b["tested"]}
        if b["T"] is None:
            res["verdict"] = False
            write_report(out, "verify.json", "verify", cfg, res)
            print(f"verify {label}: no tested T passes")
            return EXIT_FAIL
        T = b["T"]
    try:
        p = build_pipeline(src, cfg["h"], T, cfg["n_x"], cfg["n_t"], skip_gate=cfg["skip_gate"],
                           x_half=cfg["x_half"], tau_zero=cfg["tol_zero"])
    except GateError as e:
        fld = sampled(cfg, src)
        psi = check_psibar(fld, cfg["tol_zero"])
        res.update({"gate": str(e), "psibar": psi, "verdict": False})
        path = write_report(out, "verify.json", "verify", cfg, res)
        print(f"verify {label}: refused at the sign-condition gate -> {path}")
        return EXIT_FAIL
    wc = certify_inequalities(p.weights)
    pc = certify_pseudo_sign(p.pseudo_sign, p.delta0, p.m, p.grid)
    trials = trial_corpus(p.grid, p.time, T, cfg["n_random"], cfg["seed"])
    rep = verify_propest(p.P0, p.multiplier, trials, T, p.grid.h, label)
    rep.extra.update({"trial_seeds": [t.seed for t in trials],
                      "psibar_holds": p.psibar["holds"]})
    res.update({"T": T, "psibar": {k: p.psibar[k] for k in ("holds", "n_violations", "tau_zero")},
                "weights_certificate": wc, "pseudo_sign_certificate": pc,
                "estimate": rep.to_dict()})
    res["verdict"] = bool(wc["ok"] and pc["ok"] and rep.verdict)
    path = write_report(out, "verify.json", "verify", cfg, res)
    rep.to_csv(out / "estimate.csv")
    print(f"verify {label}: estimate {'holds' if rep.verdict else 'FAILS'} "
          f"({rep.extra['n_nonpositive']} nonpositive of {len(trials)}), "
          f"fitted C0 = {rep.fitted_C0:.4g}, weights ok = {wc['ok']}, "
          f"pseudo-sign ok = {pc['ok']} -> {path}")
    return EXIT_OK if res["verdict"] else EXIT_FAIL


def cmd_gallery(cfg: dict) -> int:
    out = Path(cfg["out"])
    bad = []
    for rep in gallery(cfg["scale"]):
        d = rep.to_dict()
        d["matches"] = rep.matches()
        write_report(out, f"gallery_{rep.name}.json", "gallery", cfg, d)
        miss = [k for k, ok in d["matches"].items() if not ok]
        print(f"gallery {rep.name}: {'ok' if not miss else 'MISMATCH ' + ','.join(miss)}")
        if miss:
            bad.append(rep.name)
    if bad:
        print(f"gallery mismatches: {', '.join(bad)}", file=sys.stderr)
    return EXIT_FAIL if bad else EXIT_OK


def cmd_weights(cfg: dict) -> int:
    src, label = scalar_source(cfg)
    fld = sampled(cfg, src)
    d = signed_distance(sign_partition(fld, cfg["tol_zero"]), fld.grid)
    w = build_weights(fld, d)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    for name, v in (("delta0", d.delta0), ("Hinv_sqrt", w.Hinv_sqrt), ("M", w.M), ("m", w.m)):
        write_field(out / f"{name}.pslf", ScalarField(fld.grid, fld.time, v))
    cert = certify_inequalities(w)
    cert["symbol"] = label
    path = write_report(out, "weights.json", "weights", cfg, cert)
    print(f"weights {label}: certificate ok = {cert['ok']} -> {path}")
    return EXIT_OK if cert["ok"] else EXIT_FAIL


def _describe(obj) -> dict:
    if isinstance(obj, tuple):  # operator file
        op, g = obj
        return {"kind": "operator", "dim": int(op.entries.shape[0]), "sys_dim": op.sys_dim,
                "label": op.label, "hermitian_defect": op.hermitian_defect(),
                "grid": [g.x_min, g.x_max, g.n_x, g.xi_min, g.xi_max, g.n_xi, g.h]}
    g, tm = obj.grid, obj.time
    v = obj.values
    d = {"kind": "scalar" if isinstance(obj, ScalarField) else "matrix",
         "shape": list(v.shape), "grid": [g.x_min, g.x_max, g.n_x, g.xi_min, g.xi_max, g.n_xi],
         "h": g.h, "time": [tm.t_min, tm.t_max, tm.n_t], "T": tm.T,
         "max_abs": float(np.abs(v).max())}
    if isinstance(obj, ScalarField):
        d.update(min=float(v.min()), max=float(v.max()))
    return d


def _read_any(path):
    try:
        return read_field(path)
    except FieldFormatError as e:
        if "read_operator" in str(e):
            return read_operator(path)
        raise


def cmd_fields(cfg: dict, action: str, path: str | None, dest: str | None) -> int:
    if action == "sample":
        src, label = scalar_source(cfg)
        fld = sampled(cfg, src)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        target = Path(dest) if dest else out / "symbol.pslf"
        write_field(target, fld)
        print(f"fields sample {label} -> {target}")
        return EXIT_OK
    if path is None:
        raise ConfigError(f"fields {action} needs a file")
    try:
        obj = _read_any(path)
    except (OSError, FieldFormatError) as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    if action == "inspect":
        print(json.dumps(_clean(_describe(obj)), sort_keys=True, indent=2))
        return EXIT_OK
    if dest is None:
        raise ConfigError("fields to-csv needs an output path")
    if isinstance(obj, tuple):
        obj[0].to_csv(dest)
        return EXIT_OK
    g, tm = obj.grid, obj.time
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh)
        if isinstance(obj, ScalarField):
            w.writerow(["t", "x", "xi", "value"])
            for (i, j, k), val in np.ndenumerate(obj.values):
                w.writerow([repr(float(tm.t[i])), repr(float(g.x[j])), repr(float(g.xi[k])),
                            repr(float(val))])
        else:
            w.writerow(["t", "x", "xi", "row", "col", "re", "im"])
            for (i, j, k, a, b), val in np.ndenumerate(obj.values):
                w.writerow([repr(float(tm.t[i])), repr(float(g.x[j])), repr(float(g.xi[k])),
                            a, b, repr(float(val.real)), repr(float(val.imag))])
    return EXIT_OK


# -- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON config file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--symbol", help="builtin symbol name")
    common.add_argument("--expr", help="symbol expression in t, x, xi")
    common.add_argument("--field", help="PSLF scalar field file")
    common.add_argument("--h", type=float)
    common.add_argument("--T", type=float)
    common.add_argument("--n-x", type=int, dest="n_x")
    common.add_argument("--n-t", type=int, dest="n_t")
    common.add_argument("--n-random", type=int, dest="n_random")
    common.add_argument("--tol-zero", type=float, dest="tol_zero")
    common.add_argument("--tol-rank", type=float, dest="tol_rank")
    common.add_argument("--tol-cluster", type=float, dest="tol_cluster")
    common.add_argument("--skip-gate", action="store_true", default=None, dest="skip_gate")
    common.add_argument("--bisect", action="store_true", default=None)
    common.add_argument("--no-localize", action="store_false", default=None, dest="localize")
    common.add_argument("--matrix", help="gallery item name or 'identity'")
    common.add_argument("--matrix-field", dest="matrix_field", help="PSLF matrix field file")
    common.add_argument("--point", type=float, nargs="+")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="psolv", description=__doc__.strip().splitlines()[0])
    p.add_argument("--version", action="version", version=f"psolv {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("check-psi", parents=[common], help="check the sign condition")
    sub.add_parser("classify", parents=[common], help="classify a matrix symbol")
    sub.add_parser("verify", parents=[common], help="run the multiplier estimate pipeline")
    sub.add_parser("gallery", parents=[common], help="classify the example gallery")
    sub.add_parser("weights", parents=[common], help="dump weights and their certificate")
    f = sub.add_parser("fields", parents=[common], help="inspect, convert or sample PSLF files")
    f.add_argument("action", choices=["inspect", "to-csv", "sample"])
    f.add_argument("path", nargs="?")
    f.add_argument("dest", nargs="?")
    return p


_CLI_KEYS = ("out", "seed", "symbol", "expr", "field", "h", "T", "n_x", "n_t", "n_random",
             "tol_zero", "tol_rank", "tol_cluster", "skip_gate", "bisect", "localize",
             "matrix", "matrix_field", "point")


def _thread_limit():
    raw = os.environ.get("PSOLV_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"PSOLV_THREADS must be a positive integer, got {raw!r}") from None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    commands = {"check-psi": cmd_check_psi, "classify": cmd_classify, "verify": cmd_verify,
                "gallery": cmd_gallery, "weights": cmd_weights}
    try:
        limiter = _thread_limit()
        file_values = load_config_file(args.config) if args.config else {}
        cfg = resolve_config(file_values, {k: getattr(args, k) for k in _CLI_KEYS})
        if args.command == "fields":
            run = lambda: cmd_fields(cfg, args.action, args.path, args.dest)
        else:
            run = lambda: commands[args.command](cfg)
        try:
            return run()
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
    except ConfigError as e:
        print(f"psolv: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - stable exit-code contract
        log.debug("runtime error", exc_info=True)
        print(f"psolv: runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
