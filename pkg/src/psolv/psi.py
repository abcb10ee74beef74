"""
Sign partition, condition (Psi-bar) in time-sliced normal form, the signed
distance delta_0 and a semibicharacteristic tracer for condition (Psi).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.ndimage import distance_transform_edt

from .grid import PhaseGrid, ScalarField


def default_tau(f: ScalarField) -> float:
    """Zero threshold 1e-12 * max|f|."""
    return 1e-12 * float(np.abs(f.values).max(initial=0.0))


def _record(f: ScalarField, i, j, k, **witness):
    return {"t": float(f.time.t[i]), "x": float(f.grid.x[j]), "xi": float(f.grid.xi[k]),
            "witness": {key: float(v) for key, v in witness.items()}}


@dataclass(frozen=True)
class SignPartition:
    """Labels in {+1, -1, 0} on the (t, x, xi) nodes.

    ``violations`` lists nodes eligible for both signs; their label is the
    pointwise sign of f (thresholded) so that downstream code can proceed
    when the caller chooses to ignore the gate.
    """

    labels: np.ndarray
    tau_zero: float
    violations: list = field(default_factory=list)
    n_violations: int = 0

    @property
    def consistent(self) -> bool:
        return self.n_violations == 0


def sign_partition(f: ScalarField, tau_zero: float | None = None,
                   max_report: int = 100) -> SignPartition:
    """Label nodes via running maxima of [f > tau] forward and [f < -tau] backward in t."""
    tau = default_tau(f) if tau_zero is None else float(tau_zero)
    if tau < 0:
        raise ValueError("tau_zero must be nonnegative")
    v = f.values
    pos = np.maximum.accumulate(v > tau, axis=0)
    neg = np.maximum.accumulate((v < -tau)[::-1], axis=0)[::-1]
    both = pos & neg
    labels = pos.astype(np.int8) - neg.astype(np.int8)
    violations = []
    if both.any():
        pointwise = np.where(v > tau, 1, np.where(v < -tau, -1, 0)).astype(np.int8)
        labels[both] = pointwise[both]
        first_pos = np.argmax(v > tau, axis=0)
        t = f.time.t
        for i, j, k in np.argwhere(both)[:max_report]:
            later = np.nonzero(v[i:, j, k] < -tau)[0]
            violations.append(_record(f, i, j, k, s_plus=t[first_pos[j, k]],
                                      s_minus=t[i + later[0]]))
    labels.flags.writeable = False
    return SignPartition(labels, tau, violations, int(both.sum()))


def check_psibar(f: ScalarField, tau_zero: float | None = None, max_report: int = 100) -> dict:
    """Check that f(t, w) > 0 and s > t imply f(s, w) >= 0 on the grid.

    Returns ``{"holds", "n_violations", "violations", "tau_zero"}``; each
    violation records the node (t, x, xi) where f first becomes positive
    and the witness ``s`` of a later negative value.
    """
    tau = default_tau(f) if tau_zero is None else float(tau_zero)
    v = f.values
    t = f.time.t
    was_pos = np.maximum.accumulate(v > tau, axis=0)
    # shift: positivity must have occurred strictly before the negative sample
    earlier = np.zeros_like(was_pos)
    earlier[1:] = was_pos[:-1]
    bad = earlier & (v < -tau)
    violations = []
    first_pos = np.argmax(v > tau, axis=0)
    for i, j, k in np.argwhere(bad)[:max_report]:
        violations.append(_record(f, first_pos[j, k], j, k, s=t[i]))
    return {"holds": not bad.any(), "n_violations": int(bad.sum()),
            "violations": violations, "tau_zero": tau}


@dataclass(frozen=True)
class SignedDistanceField:
    """delta_0 on the (t, x, xi) nodes, with its partition and h."""

    delta0: np.ndarray
    partition: SignPartition
    grid: PhaseGrid

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def bracket(self) -> np.ndarray:
        """<delta_0> = 1 + |delta_0|."""
        return 1.0 + np.abs(self.delta0)


def _edt(mask_other, sampling):
    # distance from every node to the nearest node where mask_other is True
    if not mask_other.any():
        return np.full(mask_other.shape, np.inf)
    return distance_transform_edt(~mask_other, sampling=sampling)


def _half_cell(grid):
    return 0.5 * min(grid.dx, grid.dxi)


def signed_distance(partition: SignPartition, grid: PhaseGrid) -> SignedDistanceField:
    """delta_0 = sgn * min(d_0, h^(-1/2)) slice by slice in t.

    For a node labelled s != 0, d_0 is the distance to the nearest node
    labelled 0, or the distance to the nearest node labelled -s minus half
    a cell, whichever is smaller.  The half-cell shift places the zero set
    midway between adjacent opposite-sign nodes when no node falls on it.
    Since labels only move from -1 towards +1 in t, delta_0 is exactly
    non-decreasing in t; it is 1-Lipschitz between nodes of equal sign.
    If every node of a slice carries the same sign, d_0 = inf.
    """
    lab = partition.labels
    cap = grid.h ** -0.5
    sampling = (grid.dx, grid.dxi)
    gap = _half_cell(grid)
    out = np.zeros(lab.shape)
    for i in range(lab.shape[0]):
        L = lab[i]
        if not L.any():
            continue
        dz = _edt(L == 0, sampling)
        dp = _edt(L == 1, sampling)
        dn = _edt(L == -1, sampling)
        d_pos = np.minimum(dz, dn - gap)
        d_neg = np.minimum(dz, dp - gap)
        out[i] = np.where(L > 0, np.minimum(d_pos, cap), 0.0)
        out[i] -= np.where(L < 0, np.minimum(d_neg, cap), 0.0)
    out.flags.writeable = False
    return SignedDistanceField(out, partition, grid)


def brute_force_distance(partition: SignPartition, grid: PhaseGrid) -> np.ndarray:
    """O(G^2) oracle for :func:`signed_distance` by explicit pair enumeration."""
    lab = partition.labels
    X, XI = grid.mesh()
    pts = np.stack([X.ravel(), XI.ravel()], 1)
    D = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    cap = grid.h ** -0.5
    out = np.zeros(lab.shape)
    for i in range(lab.shape[0]):
        L = lab[i].ravel()
        for a in np.nonzero(L)[0]:
            s = L[a]
            cand = [np.inf]
            if (L == 0).any():
                cand.append(D[a, L == 0].min())
            if (L == -s).any():
                cand.append(D[a, L == -s].min() - _half_cell(grid))
            out[i].flat[a] = s * min(min(cand), cap)
    return out


def eps_grid(grid: PhaseGrid) -> float:
    """Grid slack 2 (dx + dxi) / min(dx, dxi) allowed in Lipschitz checks."""
    return 2 * (grid.dx + grid.dxi) / min(grid.dx, grid.dxi)


def lipschitz_adjacent(values: np.ndarray, grid: PhaseGrid) -> float:
    """Max over adjacent node pairs (axis and diagonal) of |dv| / |dw|."""
    v = np.asarray(values)
    dx, dxi = grid.dx, grid.dxi
    ratios = [np.abs(np.diff(v, axis=-2)).max(initial=0) / dx,
              np.abs(np.diff(v, axis=-1)).max(initial=0) / dxi]
    diag = np.hypot(dx, dxi)
    ratios.append(np.abs(v[..., 1:, 1:] - v[..., :-1, :-1]).max(initial=0) / diag)
    ratios.append(np.abs(v[..., 1:, :-1] - v[..., :-1, 1:]).max(initial=0) / diag)
    return float(max(ratios))


def lipschitz_all_pairs(values: np.ndarray, grid: PhaseGrid) -> float:
    """Max over all node pairs of one t-slice stack of |dv| / |dw| (O(G^2) per slice)."""
    X, XI = grid.mesh()
    pts = np.stack([X.ravel(), XI.ravel()], 1)
    D = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(D, np.inf)
    v = np.asarray(values).reshape(-1, pts.shape[0])
    return float(max(np.max(np.abs(s[:, None] - s[None, :]) / D) for s in v))


def delta0_checks(f: ScalarField, d: SignedDistanceField) -> dict:
    """Exact invariants of delta_0 with the worst violation of each."""
    v, dl = f.values, d.delta0
    tau = d.partition.tau_zero
    cap = d.h ** -0.5
    mono = float(np.max(dl[:-1] - dl[1:], initial=0.0))
    sign_slack = float(np.max(-(dl * v) - tau * (1 + np.abs(dl)), initial=-np.inf))
    strong = np.abs(v) > tau
    sign_ok = bool(np.all((np.sign(dl[strong]) == 0) | (np.sign(dl[strong]) == np.sign(v[strong]))))
    lip = lipschitz_adjacent(dl, d.grid)
    return {
        "bound_ok": bool(np.abs(dl).max(initial=0) <= cap),
        "monotone_ok": mono <= 0.0,
        "max_monotone_drop": mono,
        "sign_ok": sign_ok and sign_slack <= 0.0,
        "lipschitz": lip,
        "lipschitz_bound": 1 + eps_grid(d.grid),
        "lipschitz_ok": lip <= 1 + eps_grid(d.grid),
    }


# -- semibicharacteristics ----------------------------------------------------

@dataclass
class TraceResult:
    path: np.ndarray
    re_q: np.ndarray
    im_q: np.ndarray
    events: list
    status: str

    def to_json(self) -> dict:
        return {"status": self.status, "n_steps": int(len(self.path) - 1),
                "events": self.events}


def _grad_re(q, x, xi, eps):
    gx = (q(x + eps, xi) - q(x - eps, xi)).real / (2 * eps)
    gxi = (q(x, xi + eps) - q(x, xi - eps)).real / (2 * eps)
    return np.array([gx, gxi])


def trace_bicharacteristic(q: Callable, start, step: float = 1e-2, max_steps: int = 1000,
                           tau_char: float = 1e-6, tau_zero: float = 1e-12,
                           eps_grad: float = 1e-10, fd: float = 1e-5,
                           window: tuple | None = None) -> TraceResult:
    """Integrate the Hamilton field of Re q from ``start`` and watch Im q.

    ``x' = d_xi Re q``, ``xi' = -d_x Re q`` with classical RK4, derivatives
    by central differences of the callback.  A "- to +" event is emitted
    each time Im q passes from below ``-tau_zero`` to above ``+tau_zero``;
    such a change along the forward flow violates condition (Psi).

    Parameters
    ----------
    q : callable (x, xi) -> complex
    start : (x0, xi0), required to satisfy |Re q| <= tau_char
    window : optional (x_min, x_max, xi_min, xi_max); leaving it stops the trace
    """
    z = np.array(start, dtype=float)
    if abs(complex(q(*z)).real) > tau_char:
        raise ValueError(f"start is not characteristic: |Re q| = {abs(complex(q(*z)).real):.3g}")

    def field_at(p):
        g = _grad_re(q, p[0], p[1], fd)
        return np.array([g[1], -g[0]]), np.hypot(*g)

    if field_at(z)[1] <= eps_grad:
        raise ValueError("d Re q vanishes at start")

    path, vals = [z.copy()], [complex(q(*z))]
    events, status = [], "ok"
    state = np.sign(vals[0].imag) if abs(vals[0].imag) > tau_zero else 0
    for n in range(max_steps):
        k1, g1 = field_at(z)
        if g1 < eps_grad:
            status = "not principal type along path"
            break
        k2, _ = field_at(z + step / 2 * k1)
        k3, _ = field_at(z + step / 2 * k2)
        k4, _ = field_at(z + step * k3)
        z = z + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if window is not None and not (window[0] <= z[0] <= window[1]
                                       and window[2] <= z[1] <= window[3]):
            status = "exited"
            break
        val = complex(q(*z))
        path.append(z.copy())
        vals.append(val)
        if val.imag > tau_zero:
            if state < 0:
                events.append({"step": n + 1, "x": float(z[0]), "xi": float(z[1]),
                               "im_before": float(vals[-2].imag), "im_after": float(val.imag)})
            state = 1
        elif val.imag < -tau_zero:
            state = -1
    vals = np.array(vals)
    return TraceResult(np.array(path), vals.real, vals.imag, events, status)
