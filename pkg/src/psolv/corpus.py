"""
Named scalar symbols f(t, x, xi) used by tests, demos and the CLI.

Every builtin has |d_w f| <= 1 on the whole phase plane (for |t| <= 1), so
the normalization max|f'| h^(1/2) <= 1 holds for every h in (0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


def smoothstep(s):
    """C^2 ramp: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10 - 15 * s + 6 * s**2)


def cutoff(s, radius: float, width: float):
    """Even cutoff equal to 1 on |s| <= radius - width and 0 on |s| >= radius."""
    return smoothstep((radius - np.abs(s)) / width)


def localize(f: Callable, radius: float, width: float | None = None) -> Callable:
    """Multiply f by a product cutoff in x and xi (nonnegative, so (Psi-bar) is kept)."""
    width = radius / 2 if width is None else width

    def g(t, x, xi):
        return f(t, x, xi) * cutoff(x, radius, width) * cutoff(xi, radius, width)
    return g


@dataclass(frozen=True)
class Symbol:
    name: str
    f: Callable
    psibar: bool
    description: str

    def __call__(self, t, x, xi):
        return self.f(t, x, xi)


def _band_limited(seed: int, n_modes: int = 6, k_max: float = 0.6, amp: float = 0.5):
    """Random trigonometric polynomial in (x, xi) with gradient at most ``amp``."""
    rng = np.random.default_rng(seed)
    k = rng.uniform(-k_max, k_max, size=(n_modes, 2))
    ph = rng.uniform(0, 2 * np.pi, n_modes)
    c = rng.standard_normal(n_modes)
    # |a| <= amp and |a'| <= amp
    c *= amp / np.sum(np.abs(c) * np.maximum(1.0, np.hypot(k[:, 0], k[:, 1])))

    def a(x, xi):
        return sum(c[i] * np.cos(k[i, 0] * x + k[i, 1] * xi + ph[i]) for i in range(n_modes))
    return a


def _random_compliant(seed: int):
    a = _band_limited(seed)
    e = _band_limited(seed + 1000, amp=0.25)
    return lambda t, x, xi: a(x, xi) + 0.5 * t * e(x, xi) ** 2


def _bump(x, xi, s=16.0):
    return np.exp(-(x**2 + xi**2) / s)


BUILTINS: dict[str, Symbol] = {}


def _register(name, f, psibar, description):
    BUILTINS[name] = Symbol(name, f, psibar, description)


_register("zero", lambda t, x, xi: 0.0 * (t + x + xi), True, "f = 0")
_register("x", lambda t, x, xi: x + 0.0 * (t + xi), True, "f = x")
_register("t_tanh", lambda t, x, xi: t * (1 + np.tanh(xi)) + 0.0 * x, True,
          "f = t (1 + tanh xi)")
_register("t_times_g", lambda t, x, xi: t * _bump(x, xi) + 0.0 * t, True,
          "f = t g(x, xi) with g a positive Gaussian bump")
_register("x2_bump", lambda t, x, xi: 0.25 * (x**2 - 4) * _bump(x, xi) + 0.0 * t, True,
          "time independent, sign changes on x = +-2")
_register("shift_plus_t",
          lambda t, x, xi: 0.5 * np.tanh(x - 1) + 0.25 * t * (1 + np.tanh(xi)), True,
          "a(w) + t e(w) with e >= 0")
_register("rotated", lambda t, x, xi: 0.6 * (0.8 * x + 0.6 * xi) + 0.3 * t, True,
          "linear in w, increasing in t")
_register("t_cubed", lambda t, x, xi: t**3 * 0.5 * (1 + np.tanh(x)) + 0.0 * xi, True,
          "f = t^3 (1 + tanh x) / 2")
_register("sin_bump", lambda t, x, xi: 0.5 * np.sin(x) * np.exp(-xi**2 / 10) + 0.0 * t, True,
          "time independent oscillation in x")
_register("random_1", _random_compliant(1), True, "random band-limited a + t e^2 / 2")
_register("random_2", _random_compliant(2), True, "random band-limited a + t e^2 / 2")
_register("random_3", _random_compliant(3), True, "random band-limited a + t e^2 / 2")
_register("minus_t_times_g", lambda t, x, xi: -t * _bump(x, xi) + 0.0 * t, False,
          "f = -t g: sign change from + to - in t")
_register("minus_t_tanh", lambda t, x, xi: -t * (1 + np.tanh(xi)) + 0.0 * x, False,
          "f = -t (1 + tanh xi)")


def get(name: str) -> Symbol:
    try:
        return BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown builtin symbol {name!r}; known: {sorted(BUILTINS)}") from None


def distance_corpus() -> list[Symbol]:
    """(Psi-bar)-compliant symbols for the signed-distance and weight suites."""
    return [s for s in BUILTINS.values() if s.psibar]


ESTIMATE_CORPUS = ("zero", "t_tanh", "t_times_g", "x", "shift_plus_t", "rotated")
