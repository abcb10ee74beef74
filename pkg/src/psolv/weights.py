"""
Weight fields H^(-1/2), M and m built from a symbol f and its signed
distance delta_0, with certificates for the inequalities relating them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ScalarField, diff_w
from .psi import SignedDistanceField, lipschitz_adjacent


def _arr(a):
    return a.values if isinstance(a, ScalarField) else np.asarray(a, dtype=float)


def build_H(fp, fpp, delta0, h: float) -> np.ndarray:
    """H^(-1/2) = 1 + |d0| + |f'| / (|f''| + h^(1/4) |f'|^(1/2) + h^(1/2)).

    ``fp`` and ``fpp`` are the norms |f'| and |f''|; ``delta0`` is an array
    or a :class:`SignedDistanceField`.
    """
    fp, fpp = _arr(fp), _arr(fpp)
    d = delta0.delta0 if isinstance(delta0, SignedDistanceField) else np.asarray(delta0)
    return 1.0 + np.abs(d) + fp / (fpp + h**0.25 * np.sqrt(fp) + h**0.5)


def build_M(f, fp, fpp, Hinv_sqrt, h: float) -> np.ndarray:
    """M = |f| + |f'| H^(-1/2) + |f''| H^(-1) + h^(1/2) H^(-3/2)."""
    r = np.asarray(Hinv_sqrt)
    return np.abs(_arr(f)) + _arr(fp) * r + _arr(fpp) * r**2 + h**0.5 * r**3


def _A(delta0, Hinv_sqrt):
    return (1.0 + np.abs(delta0)) ** 2 / np.asarray(Hinv_sqrt)


def build_m(delta0, Hinv_sqrt) -> np.ndarray:
    """m(t) = inf over t1 <= t <= t2 of |d0(t1) - d0(t2)| + max(A(t1), A(t2)) / 2.

    Here A = H^(1/2) <d0>^2.  The infimum runs over all discrete pairs on
    the time axis (axis 0): a reverse cumulative minimum over t2 >= t
    followed by a minimum over t1 <= t, O(n_t^2) per phase-space node.
    """
    d = np.asarray(delta0.delta0 if isinstance(delta0, SignedDistanceField) else delta0)
    A = _A(d, Hinv_sqrt)
    n = d.shape[0]
    # V[t1, t2] for every pair; entries with t2 < t1 are never used
    V = np.abs(d[:, None] - d[None, :]) + 0.5 * np.maximum(A[:, None], A[None, :])
    S = np.minimum.accumulate(V[:, ::-1], axis=1)[:, ::-1]  # S[t1, i] = min_{t2 >= i}
    upper = np.triu(np.ones((n, n), bool))  # t1 <= i
    S = np.where(upper.reshape((n, n) + (1,) * (d.ndim - 1)), S, np.inf)
    return S.min(axis=0)


def brute_force_m(delta0, Hinv_sqrt) -> np.ndarray:
    """Direct enumeration of every (t1, t2) pair; oracle for :func:`build_m`."""
    d = np.asarray(delta0)
    A = _A(d, Hinv_sqrt)
    n = d.shape[0]
    out = np.full(d.shape, np.inf)
    for i in range(n):
        for a in range(i + 1):
            for b in range(i, n):
                out[i] = np.minimum(out[i], abs(d[a] - d[b]) + 0.5 * np.maximum(A[a], A[b]))
    return out


@dataclass(frozen=True)
class WeightBundle:
    """Weights on the (t, x, xi) nodes together with their sources."""

    Hinv_sqrt: np.ndarray
    M: np.ndarray
    m: np.ndarray
    bracket_delta0: np.ndarray
    f: ScalarField
    fp: np.ndarray
    fpp: np.ndarray
    delta0: SignedDistanceField

    @property
    def h(self) -> float:
        return self.f.grid.h

    @property
    def A(self) -> np.ndarray:
        """H^(1/2) <delta_0>^2."""
        return self.bracket_delta0**2 / self.Hinv_sqrt


def build_weights(f: ScalarField, d: SignedDistanceField) -> WeightBundle:
    h = f.grid.h
    fp = diff_w(f, 1).values
    fpp = diff_w(f, 2).values
    r = build_H(fp, fpp, d, h)
    return WeightBundle(Hinv_sqrt=r, M=build_M(f, fp, fpp, r, h), m=build_m(d.delta0, r),
                        bracket_delta0=d.bracket, f=f, fp=fp, fpp=fpp, delta0=d)


def _worst(excess, grid, time):
    """Max of an excess array (positive = violation) with its (t, x, xi) location."""
    i = np.unravel_index(np.argmax(excess), excess.shape)
    return float(excess[i]), {"t": float(time.t[i[0]]), "x": float(grid.x[i[1]]),
                              "xi": float(grid.xi[i[2]])}


def _qmax_excess(d, m):
    """max over t1 < t < t2 of sup m - (d(t2) - d(t1) + m(t1) + m(t2)), per node."""
    n = d.shape[0]
    worst = np.full(d.shape[1:], -np.inf)
    for a in range(n - 2):
        run = np.maximum.accumulate(m[a:], axis=0)  # sup of m over [t_a, t_b]
        bound = d[a:] - d[a] + m[a] + m[a:]
        worst = np.maximum(worst, (run[2:] - bound[2:]).max(axis=0))
    return worst


def certify_inequalities(b: WeightBundle, slack: float = 1e-9, n_pairs: int = 2000,
                         seed: int = 0, mest_budget: float = 64.0) -> dict:
    """Check the weight inequalities on the discrete fields.

    Keys of the returned dict
    -------------------------
    hhhest_ok : 1 <= H^(-1/2) <= 3 h^(-1/2) at every node
    chain_ok : h^(1/2)<d0>^2/6 <= m <= H^(1/2)<d0>^2/2 <= <d0>/2 at every node
    qmax_ok : sup over [t1, t2] of m <= d0(t2) - d0(t1) + m(t1) + m(t2), all triples
    mest0_C0 : max of M H^(3/2) <d0>^2 / m
    slowvar_CH, temper_CM : fitted temperance constants for H and m
    """
    f, h = b.f, b.h
    grid, time = f.grid, f.time
    r, m, br, d = b.Hinv_sqrt, b.m, b.bracket_delta0, b.delta0.delta0
    out = {"h": h, "slack": slack}

    lo = 1.0 - r
    hi = r - 3 * h**-0.5
    out["hhhest_max_excess"], out["hhhest_argmax"] = _worst(
        np.maximum(lo, hi / (3 * h**-0.5)), grid, time)
    out["hhhest_ok"] = out["hhhest_max_excess"] <= slack

    A = b.A
    e1 = (h**0.5 * br**2 / 6 - m) / m
    e2 = (m - A / 2) / m
    e3 = (A / 2 - br / 2) / br
    worst = np.maximum(np.maximum(e1, e2), e3)
    out["chain_max_rel_excess"], out["chain_argmax"] = _worst(worst, grid, time)
    out["chain_ok"] = out["chain_max_rel_excess"] <= slack
    out["m_positive"] = bool((m > 0).all())

    q = _qmax_excess(d, m) / np.maximum(m.max(axis=0), 1e-300)
    out["qmax_max_rel_excess"] = float(q.max(initial=-np.inf)) if d.shape[0] > 2 else 0.0
    out["qmax_ok"] = out["qmax_max_rel_excess"] <= slack

    ratio = b.M * br**2 / r**3 / m
    out["mest0_C0"], out["mest0_argmax"] = _worst(ratio, grid, time)
    out["mest0_budget"] = mest_budget
    out["mest0_ok"] = bool(np.isfinite(out["mest0_C0"]) and out["mest0_C0"] <= mest_budget)

    # temperance constants on random node pairs at a common time
    rng = np.random.default_rng(seed)
    nt, nx, nxi = m.shape
    i = rng.integers(0, nt, n_pairs)
    p = rng.integers(0, nx, (2, n_pairs))
    k = rng.integers(0, nxi, (2, n_pairs))
    dw2 = (grid.dx * (p[0] - p[1])) ** 2 + (grid.dxi * (k[0] - k[1])) ** 2
    H = r**-2
    H0, H1 = H[i, p[0], k[0]], H[i, p[1], k[1]]
    out["slowvar_CH"] = float(np.max(H1 / (H0 * (1 + H0 * dw2))))
    m0, m1 = m[i, p[0], k[0]], m[i, p[1], k[1]]
    out["temper_CM"] = float(np.max(m1 / (m0 * (1 + H0 * dw2))))
    out["m_lipschitz"] = lipschitz_adjacent(m, grid)

    # advisory: f / delta0 against M H^(1/2) where <d0> <= kappa H^(-1/2)
    nz = np.abs(d) > 0
    if nz.any():
        alpha = f.values[nz] / d[nz]
        out["ffact_min_ratio"] = float(np.min(alpha / (b.M[nz] / r[nz])))
    out["ok"] = bool(out["hhhest_ok"] and out["chain_ok"] and out["qmax_ok"]
                     and out["m_positive"] and out["mest0_ok"])
    return out
