"""
Pseudo-sign rho_T and the multiplier symbol B_T = delta_0 + rho_T.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .grid import PhaseGrid, TimeGrid
from .psi import eps_grid, lipschitz_adjacent


@dataclass(frozen=True)
class PseudoSign:
    rho: np.ndarray
    B: np.ndarray
    T: float
    time: TimeGrid
    inside: np.ndarray


def _inside(time: TimeGrid, T: float):
    if not (0 < T and time.t_min <= -T * (1 - 1e-12) and T * (1 - 1e-12) <= time.t_max):
        raise ValueError(f"T = {T} outside the time window")
    return np.abs(time.t) <= T * (1 + 1e-12)


def _finish(rho, delta0, inside, T, time):
    rho = np.where(inside.reshape((-1,) + (1,) * (rho.ndim - 1)), rho, -delta0)
    B = delta0 + rho
    return PseudoSign(rho, B, T, time, inside)


def build_rho(delta0, m, time: TimeGrid, T: float) -> PseudoSign:
    """rho_T(t) = sup_{-T <= s <= t} (d0(s) - d0(t) + (1/2T) int_s^t m - m(s)).

    One sweep per node: with I the trapezoid primitive of m,
    rho_T(t) = runmax_{s <= t}(d0(s) - I(s)/2T - m(s)) + I(t)/2T - d0(t).
    Outside |t| <= T, rho_T = -d0 so that B_T = 0.
    """
    d = np.asarray(delta0, dtype=float)
    m = np.asarray(m, dtype=float)
    if not (m > 0).all():
        raise ValueError("weight m must be positive")
    inside = _inside(time, T)
    idx = np.nonzero(inside)[0]
    ds, ms, ts = d[idx], m[idx], time.t[idx]
    I = cumulative_trapezoid(ms, ts, axis=0, initial=0.0) / (2 * T)
    run = np.maximum.accumulate(ds - I - ms, axis=0)
    rho = np.zeros_like(d)
    rho[idx] = run + I - ds
    return _finish(rho, d, inside, T, time)


def brute_force_rho(delta0, m, time: TimeGrid, T: float) -> np.ndarray:
    """Direct double loop over (s, t) with an explicit trapezoid sum; oracle."""
    d = np.asarray(delta0, dtype=float)
    m = np.asarray(m, dtype=float)
    inside = _inside(time, T)
    t = time.t
    idx = list(np.nonzero(inside)[0])
    rho = -d.copy()
    for a, i in enumerate(idx):
        best = np.full(d.shape[1:], -np.inf)
        for s in idx[:a + 1]:
            integral = np.zeros(d.shape[1:])
            for r in range(s, i):
                integral = integral + 0.5 * (m[r] + m[r + 1]) * (t[r + 1] - t[r])
            best = np.maximum(best, d[s] - d[i] + integral / (2 * T) - m[s])
        rho[i] = best
    return rho


def certify_pseudo_sign(ps: PseudoSign, delta0, m, grid: PhaseGrid,
                        eps_rel: float = 1e-9) -> dict:
    """Check |rho_T| <= m, the discrete derivative bound and the Lipschitz bound."""
    d = np.asarray(delta0)
    m = np.asarray(m)
    idx = np.nonzero(ps.inside)[0]
    mx = float(m.max())
    fp_tol = 8 * np.finfo(float).eps * max(mx, float(np.abs(d).max(initial=0)))
    bound_excess = float((np.abs(ps.rho[idx]) - m[idx]).max())
    B = ps.B[idx]
    dt = np.diff(ps.time.t[idx])
    lhs = ps.T * np.diff(B, axis=0) / dt.reshape((-1,) + (1,) * (B.ndim - 1))
    rhs = 0.5 * np.minimum(m[idx][:-1], m[idx][1:])
    deriv_excess = float((rhs - lhs).max())
    lip_rho = lipschitz_adjacent(ps.rho[idx], grid)
    lip_bound = lipschitz_adjacent(d[idx], grid) + 2 * lipschitz_adjacent(m[idx], grid) + eps_grid(grid)
    outside_zero = bool(np.all(ps.B[~ps.inside] == 0))
    res = {
        "T": ps.T,
        "rho_bound_max_excess": bound_excess,
        "rho_bound_ok": bound_excess <= fp_tol,
        "derivative_max_deficit": deriv_excess,
        "derivative_tol": eps_rel * mx,
        "derivative_ok": deriv_excess <= eps_rel * mx,
        "rho_lipschitz": lip_rho,
        "rho_lipschitz_bound": lip_bound,
        "rho_lipschitz_ok": lip_rho <= lip_bound,
        "B_zero_outside": outside_zero,
    }
    res["ok"] = bool(res["rho_bound_ok"] and res["derivative_ok"] and res["rho_lipschitz_ok"]
                     and outside_zero)
    return res
