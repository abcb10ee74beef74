"""
Weyl and Wick quantization of scalar and matrix symbols on the discrete
x-line.

Discretization
--------------
Samples live on the cell centres ``x_j`` of a :class:`PhaseGrid`; the
frequency sum runs over the cell centres ``xi_l``.  The window is treated as
a phase-space torus: for a pair (x_j, x_k) the Weyl kernel uses the nearest
periodic image of x_j - x_k and the wrapped midpoint, which always lies on
the half-step lattice ``grid.x_half``.  On a window with
``dx * dxi * n_xi = 2 pi`` the symbol 1 quantizes to the identity exactly.
Wrapped entries carry the Bloch phase exp(i L_x xi), which makes
x-independent symbols exact discrete Fourier multipliers.
The Gaussian regularization is periodic in x and xi as well, so Wick
quantization agrees with the superposition of periodized coherent-state
projections up to aliasing of order exp(-L_x^2 / 16).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import erf

from .grid import (KIND_OPERATOR, MAGIC, FieldFormatError, PhaseGrid, _HEADER, _parse,
                   _payload)

log = logging.getLogger(__name__)

MAX_DIM = 4096


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense (n_x N) x (n_x N) matrix; block (alpha, beta) acts on component beta."""

    entries: np.ndarray
    dim_x: int
    sys_dim: int = 1
    label: str = ""
    warnings: tuple = field(default_factory=tuple)

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=complex)
        n = self.dim_x * self.sys_dim
        if e.shape != (n, n):
            raise ValueError(f"entries shape {e.shape} != {(n, n)}")
        if not np.isfinite(e).all():
            raise ValueError("non-finite operator entries")
        e = e.copy()
        e.flags.writeable = False
        object.__setattr__(self, "entries", e)

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            return OperatorMatrix(self.entries @ other.entries, self.dim_x, self.sys_dim,
                                  f"({self.label})({other.label})")
        return self.entries @ other

    @property
    def H(self) -> np.ndarray:
        return self.entries.conj().T

    def hermitian_part(self) -> np.ndarray:
        return 0.5 * (self.entries + self.H)

    def hermitian_defect(self) -> float:
        """||A - A*||_F / ||A||_F (0 for the zero matrix)."""
        nrm = np.linalg.norm(self.entries)
        return float(np.linalg.norm(self.entries - self.H) / nrm) if nrm > 0 else 0.0

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries, 2))

    def to_csv(self, path) -> None:
        """Write ``row,col,re,im`` lines (small matrices only)."""
        n = self.entries.shape[0]
        if n > 256:
            raise ValueError("CSV export is limited to 256 x 256 matrices")
        r, c = np.indices((n, n))
        data = np.column_stack([r.ravel(), c.ravel(), self.entries.real.ravel(),
                                self.entries.imag.ravel()])
        np.savetxt(path, data, delimiter=",", header="row,col,re,im", comments="",
                   fmt=["%d", "%d", "%.17g", "%.17g"])


def write_operator(path, op: OperatorMatrix, grid: PhaseGrid) -> None:
    """PSLF file of kind 2: header with n_t = 1, payload (n_x N)^2 complex."""
    head = MAGIC + _HEADER.pack(1, KIND_OPERATOR, 1, op.dim_x, grid.n_xi, op.sys_dim,
                                grid.x_min, grid.x_max, grid.xi_min, grid.xi_max,
                                0.0, 0.0, grid.h, 0.0)
    Path(path).write_bytes(head + np.ascontiguousarray(op.entries, dtype="<c16").tobytes())


def read_operator(path) -> tuple[OperatorMatrix, PhaseGrid]:
    kind, (n_t, n_x, n_xi, N), meta, body = _parse(Path(path).read_bytes())
    if kind != KIND_OPERATOR:
        raise FieldFormatError(f"kind {kind} is not an operator")
    n = n_x * N
    vals = _payload(body, n * n, "<c16").reshape(n, n)
    x_min, x_max, xi_min, xi_max, _, _, h, _ = meta
    return OperatorMatrix(vals, n_x, N), PhaseGrid(x_min, x_max, n_x, xi_min, xi_max, n_xi, h)


# -- symbol acquisition -----------------------------------------------------

def refine_x(a: np.ndarray) -> np.ndarray:
    """Node values (n, ...) -> half-step values (2n, ...) by periodic cubic interpolation."""
    a = np.asarray(a)
    out = np.empty((2 * a.shape[0],) + a.shape[1:], dtype=a.dtype)
    out[0::2] = a
    out[1::2] = (-np.roll(a, 1, 0) + 9 * a + 9 * np.roll(a, -1, 0) - np.roll(a, -2, 0)) / 16
    return out


def _eval(a: Callable, x, xi):
    X, XI = np.meshgrid(x, xi, indexing="ij")
    v = np.asarray(a(X, XI))
    if v.shape[:2] != X.shape:
        # constant scalar or constant N x N matrix
        v = np.broadcast_to(v, X.shape + (v.shape if v.ndim == 2 else ()))
    return np.array(v)


def sample_slice(a, grid: PhaseGrid) -> np.ndarray:
    """Node values (n_x, n_xi[, N, N]) of a slice given as callback or array."""
    if callable(a):
        return _eval(a, grid.x, grid.xi)
    a = np.asarray(a)
    if a.shape[:2] != grid.shape:
        raise ValueError(f"symbol array shape {a.shape[:2]} != grid {grid.shape}")
    return a


def midpoint_values(a, grid: PhaseGrid) -> np.ndarray:
    """Symbol on the half-step lattice (2 n_x, n_xi[, N, N]).

    ``a`` may be a callback ``a(x, xi)``, a half-step array or a node array
    (refined by :func:`refine_x`).
    """
    if callable(a):
        return _eval(a, grid.x_half, grid.xi)
    a = np.asarray(a)
    if a.shape[:2] == (2 * grid.n_x, grid.n_xi):
        return a
    if a.shape[:2] == grid.shape:
        return refine_x(a)
    raise ValueError(f"symbol array shape {a.shape[:2]} fits neither nodes nor midpoints")


# -- Weyl -------------------------------------------------------------------

def _check_grid(grid: PhaseGrid, N: int) -> list:
    if grid.n_x * N > MAX_DIM:
        raise ValueError(f"operator dimension {grid.n_x * N} exceeds budget {MAX_DIM}")
    warn = []
    if grid.compatibility_defect() > 1e-9:
        warn.append("dx*dxi*n_xi is not a multiple of 2 pi: quantization of 1 is not the identity")
        log.warning(warn[-1])
    return warn


def bloch_phase(grid: PhaseGrid) -> complex:
    """sigma = exp(i L_x xi_l) when it is the same for every xi node, else 1.

    Translating x by the window length multiplies exp(i x xi_l) by sigma, so
    wrapped kernel entries carry sigma^k; on matched grids with n_x = n_xi
    this reproduces the literal kernel and x-independent symbols become exact
    discrete Fourier multipliers.
    """
    s = np.exp(1j * grid.L_x * grid.xi)
    return complex(s[0]) if np.abs(s - s[0]).max() < 1e-9 else 1.0 + 0j


def _assemble(ah: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Kernel matrix (n, n, *tail) times dx from half-step symbol values."""
    n, dx = grid.n_x, grid.dx
    half = n // 2
    dvals = np.arange(-half, half + 1)
    E = np.exp(1j * dx * np.outer(grid.xi, dvals))
    F = np.einsum("sl...,ld->sd...", ah, E) * (grid.dxi / (2 * np.pi) * dx)
    j, k = np.indices((n, n))
    d0 = (j - k + half) % n - half          # nearest image of j - k
    wraps = (j - k - d0) // n               # number of window lengths crossed
    sigma = bloch_phase(grid)
    K = F[(2 * k + d0) % (2 * n), d0 + half]
    if n % 2 == 0:
        # antipodal pairs: average the two equidistant images to keep symmetry
        edge = d0 == -half
        kk = k[edge]
        K[edge] = 0.5 * (K[edge] + sigma * F[(2 * kk + half) % (2 * n), 2 * half])
    if sigma != 1:
        K = K * (sigma ** wraps).reshape(wraps.shape + (1,) * (K.ndim - 2))
    return K


def _blocks(K: np.ndarray, n: int) -> np.ndarray:
    if K.ndim == 2:
        return K
    N = K.shape[-1]
    return K.transpose(2, 0, 3, 1).reshape(n * N, n * N)


def weyl_quantize(a, grid: PhaseGrid, N: int | None = None, label: str = "weyl") -> OperatorMatrix:
    """Weyl quantization on the x-line of a scalar or N x N symbol slice.

    Kernel ``K(x_j, x_k) = (dxi / 2 pi) sum_l a((x_j + x_k)/2, xi_l) exp(i (x_j - x_k) xi_l)``
    with the nearest periodic image of x_j - x_k; the returned matrix is ``K dx``.

    Parameters
    ----------
    a : callable (x, xi) -> value, or array on nodes (n_x, n_xi[, N, N]) or
        on the half-step lattice (2 n_x, n_xi[, N, N])
    N : system size; inferred from the symbol when omitted
    """
    ah = midpoint_values(a, grid)
    tail = ah.shape[2:]
    N_sym = tail[0] if tail else 1
    if N is not None and N != N_sym:
        raise ValueError(f"symbol has system size {N_sym}, expected {N}")
    warn = _check_grid(grid, N_sym)
    if not np.isfinite(ah).all():
        raise ValueError("non-finite symbol values at the Weyl midpoints")
    return OperatorMatrix(_blocks(_assemble(ah.astype(complex), grid), grid.n_x),
                          grid.n_x, N_sym, label, tuple(warn))


# -- Gaussian regularization and Wick ----------------------------------------

def _gauss_matrix(out_pts, in_pts, step, period, images=2):
    d = out_pts[:, None] - in_pts[None, :]
    G = sum(np.exp(-(d - p * period) ** 2) for p in range(-images, images + 1))
    return G * step / np.sqrt(np.pi)


def gaussian_mass(grid: PhaseGrid) -> float:
    """Discrete mass of the periodized unit Gaussian at a node (ideally 1)."""
    gx = _gauss_matrix(grid.x[:1], grid.x, grid.dx, grid.L_x).sum()
    gxi = _gauss_matrix(grid.xi[:1], grid.xi, grid.dxi, grid.L_xi).sum()
    return float(gx * gxi)


def tail_mass(a: np.ndarray, grid: PhaseGrid) -> float:
    """Share of |a|-weighted Gaussian mass that falls outside the window.

    This is the part that a zero-padded convolution would lose and that the
    periodic convolution folds back in.
    """
    a = np.abs(np.asarray(a)).reshape(grid.n_x, grid.n_xi, -1).sum(-1)
    tot = a.sum()
    if tot == 0:
        return 0.0

    def inside(p, lo, hi):
        return 0.5 * (erf(hi - p) - erf(lo - p))
    ix = inside(grid.x, grid.x_min, grid.x_max)
    ixi = inside(grid.xi, grid.xi_min, grid.xi_max)
    return float((a * (1 - np.outer(ix, ixi))).sum() / tot)


def gaussian_regularize(a, grid: PhaseGrid, midpoints: bool = False) -> np.ndarray:
    """a_0(w) = pi^(-1) sum_z a(z) exp(-|w - z|^2) dx dxi, periodic in both variables.

    Separable in x and xi.  Returns node values, or half-step values in x
    when ``midpoints`` is true (the input of :func:`weyl_quantize`).
    """
    a = sample_slice(a, grid)
    out_x = grid.x_half if midpoints else grid.x
    Gx = _gauss_matrix(out_x, grid.x, grid.dx, grid.L_x)
    Gxi = _gauss_matrix(grid.xi, grid.xi, grid.dxi, grid.L_xi)
    return np.einsum("sj,jl...,ml->sm...", Gx, a, Gxi)


def wick_quantize(a, grid: PhaseGrid, N: int | None = None, tail_tol: float = 1e-6,
                  label: str = "wick") -> OperatorMatrix:
    """Wick quantization as the Weyl quantization of the Gaussian-regularized symbol."""
    nodes = sample_slice(a, grid)
    tm = tail_mass(nodes, grid)
    a0 = gaussian_regularize(nodes, grid, midpoints=True)
    op = weyl_quantize(a0, grid, N, label=label)
    warn = op.warnings
    if tm > tail_tol:
        warn = warn + (f"tail mass {tm:.3g} folded back by the periodic window",)
    return OperatorMatrix(op.entries, op.dim_x, op.sys_dim, label, warn)


@dataclass
class CoherentFrame:
    """Periodized coherent states centred at every grid node, weight dx dxi / 2 pi.

    ``phi_{y,eta}(x) = pi^(-1/4) sum_p sigma^p exp(-(x - y - p L)^2 / 2 + i eta (x - p L))``
    with the Bloch phase sigma of :func:`bloch_phase`.
    """

    grid: PhaseGrid
    images: int = 2

    def __post_init__(self):
        g = self.grid
        Y, ETA = g.mesh()
        self.centers = np.column_stack([Y.ravel(), ETA.ravel()])
        self.weight = g.dx * g.dxi / (2 * np.pi)
        x = g.x[:, None]
        y, eta = self.centers[:, 0][None], self.centers[:, 1][None]
        sigma = bloch_phase(g)
        phi = np.zeros((g.n_x, len(self.centers)), complex)
        for p in range(-self.images, self.images + 1):
            s = x - p * g.L_x
            phi += sigma**p * np.exp(-(s - y) ** 2 / 2 + 1j * eta * s)
        self.states = phi * np.pi**-0.25

    def operator(self, a, label: str = "frame") -> OperatorMatrix:
        """sum_z weight a(z) |phi_z><phi_z| acting on samples (inner product with dx)."""
        vals = sample_slice(a, self.grid)
        if vals.ndim != 2:
            raise ValueError("coherent frame supports scalar symbols only")
        c = self.weight * vals.ravel() * self.grid.dx
        return OperatorMatrix((self.states * c) @ self.states.conj().T, self.grid.n_x, 1, label)

    def deviation(self) -> float:
        """||sum_z weight |phi_z><phi_z| - Id||."""
        e = self.operator(np.ones(self.grid.shape)).entries
        return float(np.linalg.norm(e - np.eye(self.grid.n_x), 2))


# -- subspaces and residuals --------------------------------------------------

def interior_subspace(grid: PhaseGrid, margin: float = 5.0, xi_margin: float | None = None,
                      rtol: float = 1e-2) -> np.ndarray:
    """Orthonormal basis of coherent states centred at least ``margin`` inside the window.

    Only singular directions above ``rtol`` times the largest are kept; the
    nearly dependent combinations of overlapping states reach the window edge.
    """
    xi_margin = margin if xi_margin is None else xi_margin
    x = grid.x[(grid.x >= grid.x_min + margin) & (grid.x <= grid.x_max - margin)]
    xi = grid.xi[(grid.xi >= grid.xi_min + xi_margin) & (grid.xi <= grid.xi_max - xi_margin)]
    if not len(x) or not len(xi):
        raise ValueError("margin leaves no interior centres")
    Y, ETA = np.meshgrid(x, xi, indexing="ij")
    s = grid.x[:, None]
    phi = np.exp(-(s - Y.ravel()[None]) ** 2 / 2 + 1j * ETA.ravel()[None] * s)
    U, sv, _ = np.linalg.svd(phi, full_matrices=False)
    return U[:, sv > rtol * sv[0]]


def restricted_norm(A, Q: np.ndarray | None) -> float:
    """||Q* A Q|| for an orthonormal basis Q, or ||A|| when Q is None."""
    A = A.entries if isinstance(A, OperatorMatrix) else np.asarray(A)
    if Q is None:
        return float(np.linalg.norm(A, 2))
    return float(np.linalg.norm(Q.conj().T @ A @ Q, 2))


def composition_residual(a, b, grid: PhaseGrid, weights: tuple | None = None,
                         subspace: np.ndarray | None = None) -> dict:
    """||a^w b^w - (ab)^w|| with an optional predicted scale m1 m2 h.

    Symbols may be callbacks (the product is then evaluated exactly at the
    midpoints) or arrays on the half-step lattice or nodes.
    """
    ah, bh = midpoint_values(a, grid), midpoint_values(b, grid)
    ab = ah @ bh if ah.ndim == 4 else ah * bh
    A, B, C = weyl_quantize(ah, grid), weyl_quantize(bh, grid), weyl_quantize(ab, grid)
    res = restricted_norm(A.entries @ B.entries - C.entries, subspace)
    out = {"residual": res}
    if weights is not None:
        m1, m2 = weights
        out["predicted_scale"] = m1 * m2 * grid.h
        out["ratio"] = res / out["predicted_scale"]
    return out


# -- regularized sign symbols -------------------------------------------------

def regularized_sign_bound(B: np.ndarray, delta0: np.ndarray, grid: PhaseGrid) -> dict:
    """Regularize B = delta0 + rho0 slice by slice and compare |b| with <delta0>.

    Returns the regularized field ``b`` and ``max |b| / <delta0>``.
    """
    B = np.asarray(B, dtype=float)
    b = np.stack([gaussian_regularize(B[i], grid) for i in range(B.shape[0])])
    ratio = np.abs(b) / (1 + np.abs(np.asarray(delta0)))
    return {"b": b, "max_ratio": float(ratio.max())}


def kappa_sweep(delta0: np.ndarray, Hinv_sqrt: np.ndarray, kappas=(0.25, 0.5, 1, 2, 4)) -> dict:
    """Share of nodes where <delta0> <= kappa H^(-1/2), for each kappa."""
    jd = 1 + np.abs(np.asarray(delta0))
    return {float(k): float(np.mean(jd <= k * np.asarray(Hinv_sqrt))) for k in kappas}
