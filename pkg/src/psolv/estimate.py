"""
Numerical verification of the multiplier estimate

    h^(1/2) (||b_T^w u||^2 + ||u||^2) <= C_0 T Im <P_0 u, b_T^w u>

for P_0 = (D_t + i f^w) Id_N + F_0^w on a (t, x) discretization, together
with its building blocks: the lower bound of m^Wick, the time-derivative
bound of the multiplier and the conjugation that removes F_0.

Conventions: D_t = -i d/dt; <u, v> = sum_t w_t sum_j u conj(v) dx with
trapezoid weights w_t.  Operators act on (n_t, N n_x) arrays, component-major
in each slice as in :mod:`psolv.quantization`.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh

from . import corpus
from .grid import MatrixField, PhaseGrid, ScalarField, TimeGrid, sample_scalar
from .psi import check_psibar, sign_partition, signed_distance
from .pseudo_sign import PseudoSign, build_rho
from .quantization import OperatorMatrix, weyl_quantize, wick_quantize
from .weights import WeightBundle, build_weights

log = logging.getLogger(__name__)


class GateError(ValueError):
    """The symbol does not satisfy the sign condition required by the estimate."""


# -- time derivative and inner products ---------------------------------------

_D_INNER = np.array([1, -8, 0, 8, -1]) / 12.0
_D_LEFT = np.array([[-25, 48, -36, 16, -3], [-3, -10, 18, -6, 1]]) / 12.0


def time_derivative(u: np.ndarray, dt: float) -> np.ndarray:
    """d/dt along axis 0, fourth order, one-sided closure at the two ends."""
    u = np.asarray(u)
    n = u.shape[0]
    if n < 5:
        raise ValueError("fourth-order time derivative needs n_t >= 5")
    out = np.empty_like(u, dtype=np.result_type(u, float))
    out[2:-2] = sum(c * u[k:n - 4 + k] for k, c in enumerate(_D_INNER))
    for i in range(2):
        out[i] = sum(c * u[k] for k, c in enumerate(_D_LEFT[i]))
        out[n - 1 - i] = -sum(c * u[n - 1 - k] for k, c in enumerate(_D_LEFT[i]))
    return out / dt


def D_t(u: np.ndarray, dt: float) -> np.ndarray:
    return -1j * time_derivative(u, dt)


def inner(u: np.ndarray, v: np.ndarray, time: TimeGrid, dx: float) -> complex:
    """Space-time inner product with trapezoid weights in t and dx in x."""
    per_slice = np.einsum("ij,ij->i", u, np.conj(v)) * dx
    return complex(np.dot(time.weights(), per_slice))


def norm2(u: np.ndarray, time: TimeGrid, dx: float) -> float:
    return inner(u, u, time, dx).real


def apply_slices(ops: Sequence, u: np.ndarray) -> np.ndarray:
    """Apply a list of per-slice matrices (or OperatorMatrix) to u(t_i)."""
    return np.stack([(op.entries if isinstance(op, OperatorMatrix) else op) @ u[i]
                     for i, op in enumerate(ops)])


# -- model operator -------------------------------------------------------------

@dataclass
class SpaceTimeOperator:
    """P_0 = (D_t + i f^w) Id_N + F_0^w sliced in time."""

    time: TimeGrid
    grid: PhaseGrid
    f_ops: list
    F0_ops: list | None
    N: int
    hermitian_defect: float

    def apply(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=complex)
        fu = np.stack([np.kron(np.eye(self.N), op.entries) @ u[i]
                       for i, op in enumerate(self.f_ops)])
        out = D_t(u, self.time.dt) + 1j * fu
        if self.F0_ops is not None:
            out = out + apply_slices(self.F0_ops, u)
        return out


def _slice_callback(f: Callable, t: float) -> Callable:
    return lambda x, xi: f(t, x, xi)


def assemble_P0(f, grid: PhaseGrid, time: TimeGrid, F0=None, N: int | None = None
                ) -> SpaceTimeOperator:
    """Per-slice Weyl matrices of f and F_0.

    ``f`` is a callback f(t, x, xi) (evaluated exactly at Weyl midpoints) or a
    :class:`ScalarField`; ``F0`` likewise a callback returning (..., N, N)
    or a :class:`MatrixField`.
    """
    f_ops, defect = [], 0.0
    for i, t in enumerate(time.t):
        a = _slice_callback(f, t) if callable(f) else np.asarray(f.values[i])
        op = weyl_quantize(a, grid, label=f"f^w(t={t:.4g})")
        defect = max(defect, op.hermitian_defect())
        f_ops.append(op)
    if defect > 1e-10:
        log.warning("f^w slices not Hermitian: defect %.3g", defect)
    F0_ops = None
    if F0 is not None:
        F0_ops = []
        for i, t in enumerate(time.t):
            a = _slice_callback(F0, t) if callable(F0) else np.asarray(F0.values[i])
            F0_ops.append(weyl_quantize(a, grid, label=f"F0^w(t={t:.4g})"))
        N_F = F0_ops[0].sys_dim
        if N is not None and N != N_F:
            raise ValueError(f"F0 has size {N_F}, expected {N}")
        N = N_F
    return SpaceTimeOperator(time, grid, f_ops, F0_ops, N or 1, defect)


def build_multiplier(B, grid: PhaseGrid, tail_tol: float = np.inf) -> list[OperatorMatrix]:
    """Per-slice Wick quantization of the real multiplier symbol B_T(t_i)."""
    values = B.B if isinstance(B, PseudoSign) else np.asarray(B)
    ops = []
    for i in range(values.shape[0]):
        op = wick_quantize(values[i], grid, tail_tol=tail_tol, label=f"b_T^w[{i}]")
        if op.hermitian_defect() > 1e-10:
            raise ValueError(f"multiplier slice {i} is not symmetric")
        ops.append(op)
    return ops


# -- trials --------------------------------------------------------------------

@dataclass(frozen=True)
class Trial:
    name: str
    values: np.ndarray
    seed: int | None = None


def time_window(t: np.ndarray, a: float, b: float) -> np.ndarray:
    """cos^4 bump on [a, b]; zero with three derivatives at the ends."""
    s = (t - 0.5 * (a + b)) / (0.5 * (b - a))
    return np.where(np.abs(s) < 1, np.cos(0.5 * np.pi * np.clip(s, -1, 1)) ** 4, 0.0)


def _hermite(k: int, x: np.ndarray) -> np.ndarray:
    return np.polynomial.hermite.hermval(x, np.eye(k + 1)[k]) * np.exp(-x**2 / 2)


def trial_corpus(grid: PhaseGrid, time: TimeGrid, T: float, n_random: int = 20,
                 seed: int = 0, N: int = 1) -> list[Trial]:
    """Ten structured trials and ``n_random`` random band-limited ones.

    Every trial is a cos^4 window in t supported in |t| <= T times functions
    of x localized well inside the window.  For N > 1 the components are
    independent random mixtures of the scalar profile and its shifts.
    """
    t, x = time.t, grid.x
    full = time_window(t, -T, T)
    wins = {"full": full, "left": time_window(t, -T, 0.0), "right": time_window(t, 0.0, T),
            "mid": time_window(t, -T / 2, T / 2)}
    g = lambda y=0.0, eta=0.0: np.exp(-(x - y) ** 2 / 2 + 1j * eta * x)
    specs = [("gauss", full[:, None] * g()[None]),
             ("gauss_shift_plus", full[:, None] * g(2.0)[None]),
             ("gauss_shift_minus", wins["left"][:, None] * g(-2.0)[None]),
             ("gauss_xi_plus", wins["right"][:, None] * g(0.0, 1.5)[None]),
             ("gauss_xi_minus", wins["mid"][:, None] * g(0.0, -1.5)[None]),
             ("hermite_1", full[:, None] * _hermite(1, x)[None]),
             ("hermite_2", wins["right"][:, None] * _hermite(2, x)[None]),
             ("hermite_3", wins["left"][:, None] * _hermite(3, x)[None]),
             ("t_modulated", (full * np.exp(1j * np.pi * t / T))[:, None] * g()[None]),
             ("moving", full[:, None] * np.exp(-(x[None] - 2 * t[:, None] / T) ** 2 / 2))]
    rng = np.random.default_rng(seed)
    trials = [Trial(n, v) for n, v in specs]
    for k in range(n_random):
        s = int(rng.integers(2**31))
        r = np.random.default_rng(s)
        a, b = sorted(r.uniform(-T, T, 2))
        if b - a < 0.3 * T:
            a, b = -T, T
        w = time_window(t, a, b)
        v = np.zeros((len(t), len(x)), complex)
        for _ in range(3):
            y, eta = r.uniform(-2.5, 2.5), r.uniform(-2.0, 2.0)
            c = r.standard_normal(3) + 1j * r.standard_normal(3)
            poly = c[0] + c[1] * t / T + c[2] * (t / T) ** 2
            v += poly[:, None] * np.exp(-(x[None] - y) ** 2 / (2 * r.uniform(0.6, 1.5) ** 2)
                                         + 1j * eta * x[None])
        trials.append(Trial(f"random_{k}", w[:, None] * v, s))
    if N > 1:
        out = []
        for k, tr in enumerate(trials):
            r = np.random.default_rng([seed, k])
            mix = r.standard_normal(N) + 1j * r.standard_normal(N)
            comps = [mix[c] * np.roll(tr.values, c, axis=1) for c in range(N)]
            out.append(Trial(tr.name, np.concatenate(comps, axis=1), tr.seed))
        trials = out
    return trials


# -- estimate report ---------------------------------------------------------------

@dataclass
class EstimateReport:
    symbol: str
    h: float
    T: float
    trials: list
    lhs_values: list
    rhs_values: list
    fitted_C0: float
    fitted_budget: float
    verdict: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"symbol": self.symbol, "h": self.h, "T": self.T, "trials": self.trials,
                "lhs": self.lhs_values, "rhs": self.rhs_values, "fitted_C0": self.fitted_C0,
                "fitted_budget": self.fitted_budget, "verdict": self.verdict, **self.extra}

    def to_json(self) -> str:
        return json.dumps(_finite(self.to_dict()), sort_keys=True, indent=2)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "lhs", "rhs", "ratio"])
            for name, l, r in zip(self.trials, self.lhs_values, self.rhs_values):
                w.writerow([name, repr(l), repr(r), repr(l / (self.T * r)) if r > 0 else "inf"])


def _finite(o):
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    if isinstance(o, float) and not np.isfinite(o):
        return str(o)
    return o


def _check_trial(v: np.ndarray, time: TimeGrid, T: float, dx: float, name: str):
    outside = np.abs(time.t) > T * (1 + 1e-12)
    if np.abs(v[outside]).max(initial=0.0) > 1e-14 * np.abs(v).max():
        raise ValueError(f"trial {name} is not supported in |t| <= T")
    if np.sqrt(norm2(v, time, dx)) < 1e-12:
        raise ValueError(f"trial {name} is degenerate")


def verify_propest(P0: SpaceTimeOperator, multiplier: Sequence, trials: Sequence[Trial],
                   T: float, h: float, symbol: str = "") -> EstimateReport:
    """lhs = h^(1/2)(||b u||^2 + ||u||^2) and rhs = Im <P_0 u, b u> per trial."""
    time, dx, N = P0.time, P0.grid.dx, P0.N
    mult = [np.kron(np.eye(N), op.entries) for op in multiplier]
    lhs, rhs, cs = [], [], []
    for tr in trials:
        u = np.asarray(tr.values, dtype=complex)
        _check_trial(u, time, T, dx, tr.name)
        bu = apply_slices(mult, u)
        Pu = P0.apply(u)
        lhs.append(h**0.5 * (norm2(bu, time, dx) + norm2(u, time, dx)))
        rhs.append(inner(Pu, bu, time, dx).imag)
        cs.append(np.sqrt(norm2(u, time, dx)) / np.sqrt(norm2(Pu, time, dx)))
    return _report(symbol, h, T, [tr.name for tr in trials], lhs, rhs, cs)


def _report(symbol, h, T, names, lhs, rhs, cs=None, extra=None) -> EstimateReport:
    lhs, rhs = np.array(lhs), np.array(rhs)
    pos = rhs > 0
    C0 = float((lhs[pos] / (T * rhs[pos])).max()) if pos.any() else float("inf")
    verdict = bool(pos.all() and np.isfinite(C0))
    extra = dict(extra or {})
    extra["n_nonpositive"] = int((~pos).sum())
    if cs is not None and verdict:
        # ||u|| <= (C_0 / 2) T h^(-1/2) ||P_0 u|| follows from the estimate
        bound = C0 / 2 * T * h**-0.5
        extra["cauchy_schwarz_ok"] = bool((np.array(cs) <= bound * (1 + 1e-9)).all())
    return EstimateReport(symbol, h, T, list(names), lhs.tolist(), rhs.tolist(), C0,
                          C0 * T, verdict, extra)


# -- pipeline ---------------------------------------------------------------------

LOCALIZE = (7.0, 3.0)


def estimate_symbol(name: str) -> Callable:
    """Builtin symbol times a product cutoff in (x, xi), radius 7 and ramp width 3.

    Weyl matrices live on a periodic window, so symbols entering the estimate
    must vanish near its edge.  The cutoff is nonnegative and keeps the sign
    condition.
    """
    return corpus.localize(corpus.get(name).f, *LOCALIZE)


@dataclass
class Pipeline:
    """Everything needed for one (symbol, h, T) run."""

    grid: PhaseGrid
    time: TimeGrid
    field: ScalarField
    delta0: np.ndarray
    m: np.ndarray
    pseudo_sign: PseudoSign
    P0: SpaceTimeOperator
    multiplier: list
    psibar: dict
    weights: WeightBundle | None = None


def build_pipeline(f: Callable, h: float, T: float, n_x: int = 48, n_t: int = 33,
                   F0: Callable | None = None, skip_gate: bool = False,
                   x_half: float | None = None, tau_zero: float | None = None) -> Pipeline:
    """Sample f on [-T, T] x window, check the sign condition, build b_T and P_0.

    ``f`` may also be a :class:`ScalarField`, whose own grids are used (the
    arguments h, n_x, n_t and x_half are then ignored).  Raises
    :class:`GateError` when the sign condition fails, unless ``skip_gate``
    is set.
    """
    if isinstance(f, ScalarField):
        fld, grid, time = f, f.grid, f.time
        T = time.T
    else:
        grid = PhaseGrid.compatible(n_x, x_half, h=h)
        time = TimeGrid.symmetric(T, n_t)
        fld = sample_scalar(f, time, grid)
    psi = check_psibar(fld, tau_zero)
    if not psi["holds"] and not skip_gate:
        raise GateError(f"sign condition fails at {psi['n_violations']} nodes")
    d = signed_distance(sign_partition(fld, tau_zero), grid)
    w = build_weights(fld, d)
    ps = build_rho(d.delta0, w.m, time, T)
    P0 = assemble_P0(f, grid, time, F0)
    mult = build_multiplier(ps, grid)
    return Pipeline(grid, time, fld, d.delta0, w.m, ps, P0, mult, psi, w)


def run_estimate(f: Callable, h: float, T: float, name: str = "", n_x: int = 48,
                 n_t: int = 33, n_random: int = 20, seed: int = 0,
                 skip_gate: bool = False) -> EstimateReport:
    p = build_pipeline(f, h, T, n_x, n_t, skip_gate=skip_gate)
    trials = trial_corpus(p.grid, p.time, T, n_random, seed)
    rep = verify_propest(p.P0, p.multiplier, trials, T, h, name)
    rep.extra.update({"n_x": n_x, "n_t": n_t, "seed": seed, "psibar_holds": p.psibar["holds"],
                      "trial_seeds": [t.seed for t in trials]})
    return rep


def bisect_T(f: Callable, h: float, name: str = "", T_max: float = 1.0, T_min: float = 1e-3,
             n_iter: int = 8, runner: Callable | None = None, **kw) -> dict:
    """Largest T in [T_min, T_max] (geometric bisection) with every rhs > 0.

    ``runner(f, h, T, name, **kw)`` returns an :class:`EstimateReport`;
    defaults to :func:`run_estimate`.
    """
    run_estimate_ = runner or run_estimate
    rep = run_estimate_(f, h, T_max, name, **kw)
    if rep.verdict:
        return {"T": T_max, "report": rep, "status": "ok", "tested": [[T_max, True]]}
    lo_rep = run_estimate_(f, h, T_min, name, **kw)
    tested = [[T_max, False], [T_min, lo_rep.verdict]]
    if not lo_rep.verdict:
        return {"T": None, "report": lo_rep, "status": "fails at all tested T", "tested": tested}
    lo, hi, best = T_min, T_max, lo_rep
    for _ in range(n_iter):
        mid = float(np.sqrt(lo * hi))
        r = run_estimate_(f, h, mid, name, **kw)
        tested.append([mid, r.verdict])
        if r.verdict:
            lo, best = mid, r
        else:
            hi = mid
    return {"T": lo, "report": best, "status": "fails at larger T", "tested": tested}


# -- building blocks -----------------------------------------------------------------

def derivative_term_check(ps: PseudoSign, m: np.ndarray, grid: PhaseGrid,
                          vectors: Sequence[np.ndarray], eps: float = 1e-9) -> dict:
    """<(B(t+dt) - B(t))^Wick u, u> >= dt/(2T) <min(m(t), m(t+dt))^Wick u, u> - eps.

    Checked for fixed x-profiles u on every interval inside |t| <= T.
    """
    time, T = ps.time, ps.T
    idx = np.nonzero(ps.inside)[0]
    worst = np.inf
    for i0, i1 in zip(idx[:-1], idx[1:]):
        dt = time.t[i1] - time.t[i0]
        dB = wick_quantize(ps.B[i1] - ps.B[i0], grid, tail_tol=np.inf).entries
        mm = wick_quantize(np.minimum(m[i0], m[i1]), grid, tail_tol=np.inf).entries
        for u in vectors:
            q = np.vdot(u, dB @ u).real - dt / (2 * T) * np.vdot(u, mm @ u).real
            worst = min(worst, q / max(np.vdot(u, u).real, 1e-300))
    scale = max(np.abs(m).max(), 1.0)
    return {"min_excess": float(worst), "ok": bool(worst >= -eps * scale)}


def verify_west3(m: np.ndarray, B, grid: PhaseGrid, h: float) -> dict:
    """Per slice: smallest generalized eigenvalue c_1 of (m^Wick, h^(1/2)(B^Wick* B^Wick + Id))."""
    Bv = B.B if isinstance(B, PseudoSign) else np.asarray(B)
    m = np.asarray(m)
    c1 = []
    for i in range(m.shape[0]):
        W = wick_quantize(m[i], grid, tail_tol=np.inf).hermitian_part()
        if np.linalg.eigvalsh(W).min() <= 0:
            raise ValueError(f"m^Wick is not positive on slice {i}")
        Bw = wick_quantize(Bv[i], grid, tail_tol=np.inf).entries
        K = h**0.5 * (Bw.conj().T @ Bw + np.eye(grid.n_x))
        c1.append(float(eigh(W, K, eigvals_only=True)[0]))
    c1 = np.array(c1)
    return {"c1_per_slice": c1.tolist(), "c1": float(c1.min()), "ok": bool((c1 > 0).all())}


# -- lower-order reduction ---------------------------------------------------------

@dataclass
class LowerOrderReduction:
    time: TimeGrid
    E: np.ndarray
    residual: float
    min_abs_det: float
    warnings: tuple


def _as_time_callable(F0, time: TimeGrid, x, xi):
    if callable(F0):
        X, XI = np.meshgrid(x, xi, indexing="ij")

        def F(t):
            v = np.asarray(F0(t, X, XI), dtype=complex)
            if v.ndim == 2:
                v = np.broadcast_to(v, X.shape + v.shape)
            return v
        return F
    vals = np.asarray(F0.values if isinstance(F0, MatrixField) else F0, dtype=complex)
    spl = CubicSpline(time.t, vals, axis=0)
    return lambda t: spl(t)


def _rk4(F, E, t0, t1, n):
    hstep = (t1 - t0) / n
    out = [E]
    rhs = lambda t, E: -1j * (F(t) @ E)
    t = t0
    for _ in range(n):
        k1 = rhs(t, E)
        k2 = rhs(t + hstep / 2, E + hstep / 2 * k1)
        k3 = rhs(t + hstep / 2, E + hstep / 2 * k2)
        k4 = rhs(t + hstep, E + hstep * k3)
        E = E + hstep / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += hstep
        out.append(E)
    return np.array(out)


_D6 = np.array([-1, 9, -45, 0, 45, -9, 1]) / 60.0


def reduce_lower_order(F0, time: TimeGrid, grid: PhaseGrid | None = None,
                       midpoints: bool = False, max_substep: float = 1e-3,
                       det_floor: float = 1e-8) -> LowerOrderReduction:
    """Solve D_t E + F_0 E = 0, E(0) = Id pointwise in w by RK4.

    ``F0`` is a callback F0(t, x, xi) -> (..., N, N) evaluated on the grid
    nodes (or the half-step lattice in x when ``midpoints`` is set), a
    :class:`MatrixField`, or an array (n_t, ..., N, N) interpolated in t.
    Returns E at the time nodes and the residual max |D_t E + F_0 E| computed
    by sixth-order differences of the substep trajectory.
    """
    if grid is not None:
        x = grid.x_half if midpoints else grid.x
        xi = grid.xi
    else:
        x = xi = np.zeros(1)
    F = _as_time_callable(F0, time, x, xi)
    N = F(0.0).shape[-1]
    E0 = np.broadcast_to(np.eye(N, dtype=complex), F(0.0).shape).copy()
    # uniform substep lattice o + j hs through every node, reached from t = 0
    k = max(int(np.ceil(time.dt / max_substep)), 1)
    hs = time.dt / k
    o = time.t_min - np.floor(time.t_min / hs) * hs
    if o > hs - 1e-12 * hs:
        o = 0.0
    Eo = _rk4(F, E0, 0.0, o, 1)[-1] if o > 0 else E0
    pad = 3
    j_lo = int(round((time.t_min - o) / hs)) - pad
    j_hi = int(round((time.t_max - o) / hs)) + pad
    fwd = _rk4(F, Eo, o, o + j_hi * hs, max(j_hi, 1))[: j_hi + 1] if j_hi > 0 else Eo[None]
    bwd = _rk4(F, Eo, o, o + j_lo * hs, max(-j_lo, 1))[: -j_lo + 1] if j_lo < 0 else Eo[None]
    traj = np.concatenate([bwd[::-1], fwd[1:]])
    E_nodes, res = [], 0.0
    for t in time.t:
        i = int(round((t - o) / hs)) - j_lo
        win = traj[i - 3:i + 4]
        E_nodes.append(win[3])
        dE = np.tensordot(_D6, win, axes=(0, 0)) / hs
        r = -1j * dE + F(t) @ win[3]
        res = max(res, float(np.abs(r).max()))
    E_nodes = np.array(E_nodes)
    dets = np.abs(np.linalg.det(E_nodes))
    warn = ()
    if dets.min() < det_floor:
        warn = ("conjugation unreliable for this T",)
        log.warning(warn[0])
    return LowerOrderReduction(time, E_nodes, res, float(dets.min()), warn)


def verify_propest_conjugated(f: Callable, F0: Callable, h: float, T: float, n_x: int = 48,
                              n_t: int = 33, n_random: int = 20, seed: int = 0,
                              symbol: str = "") -> EstimateReport:
    """Estimate with F_0 removed by conjugation: trials u = E^w v.

    rhs = Im <P_0 u, M u> with M = ((E^-1)^w)* b_T^w (E^-1)^w and
    lhs = h^(1/2)(||b_T^w v~||^2 + ||v~||^2), v~ = (E^-1)^w u.
    The direct rhs Im <P_0 v, b_T^w v> is reported alongside.
    """
    p = build_pipeline(f, h, T, n_x, n_t, F0=F0)
    red = reduce_lower_order(F0, p.time, p.grid, midpoints=True)
    N = p.P0.N
    Ew = [weyl_quantize(E, p.grid).entries for E in red.E]
    Einv = [weyl_quantize(np.linalg.inv(E), p.grid).entries for E in red.E]
    b = [np.kron(np.eye(N), op.entries) for op in p.multiplier]
    M = [Ei.conj().T @ bi @ Ei for Ei, bi in zip(Einv, b)]
    trials = trial_corpus(p.grid, p.time, T, n_random, seed, N=N)
    lhs, rhs, direct = [], [], []
    dx = p.grid.dx
    for tr in trials:
        v = tr.values
        _check_trial(v, p.time, T, dx, tr.name)
        u = apply_slices(Ew, v)
        vt = apply_slices(Einv, u)
        bv = apply_slices(b, vt)
        lhs.append(h**0.5 * (norm2(bv, p.time, dx) + norm2(vt, p.time, dx)))
        rhs.append(inner(p.P0.apply(u), apply_slices(M, u), p.time, dx).imag)
        direct.append(inner(p.P0.apply(v), apply_slices(b, v), p.time, dx).imag)
    return _report(symbol, h, T, [t.name for t in trials], lhs, rhs,
                   extra={"direct_rhs": [float(x) for x in direct],
                          "direct_all_positive": bool(np.all(np.array(direct) > 0)),
                          "reduction_residual": red.residual, "min_abs_det": red.min_abs_det,
                          "n_x": n_x, "n_t": n_t, "seed": seed})


# -- lower-order examples ------------------------------------------------------------

_PAULI_MIX = np.array([[0.5, 1 + 1j], [1 - 1j, -0.5]])
_NIL = np.array([[0, 1], [0, 0]], dtype=complex)


def lower_order_example(t, x, xi):
    """Localized Hermitian part plus a time-dependent nilpotent part (N = 2)."""
    g = np.exp(-(np.asarray(x) ** 2 + np.asarray(xi) ** 2) / 8)[..., None, None]
    return 0.3 * g * _PAULI_MIX + 0.2 * np.cos(2 * t) * _NIL


F0_CORPUS: dict[str, Callable] = {
    "mixed": lower_order_example,
    "constant_hermitian": lambda t, x, xi: 0.4 * _PAULI_MIX + 0 * np.asarray(x)[..., None, None],
    "nilpotent_cos": lambda t, x, xi: np.cos(t) * np.exp(-np.asarray(x) ** 2 / 4)[..., None, None]
    * _NIL,
    "rotating": lambda t, x, xi: (np.tanh(np.asarray(xi))[..., None, None]
                                  * np.array([[np.cos(t), np.sin(t)], [-np.sin(t), 1j * t]])),
}
