"""
Discretized phase space: grids, sampled symbol fields, finite differences
and the binary PSLF field format.

Phase space is T*R with coordinates w = (x, xi) and the flat metric
g(w) = |w|^2.  Phase-space nodes are cell centres; time nodes include both
end points of the time window.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

MAGIC = b"PSLFIELD"
VERSION = 1
KIND_SCALAR, KIND_MATRIX, KIND_OPERATOR = 0, 1, 2
_HEADER = struct.Struct("<6I8d")


class FieldError(ValueError):
    """A sampled field is malformed (shape, non-finite entries)."""


class FieldFormatError(ValueError):
    """A PSLF file cannot be decoded."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PhaseGrid:
    """Rectangular lattice of cell centres in (x, xi) with parameter h.

    The spacings ``dx`` and ``dxi`` are computed once at construction and
    stored.  Use :meth:`compatible` to get a grid whose windows satisfy
    ``dx * dxi * n_xi == 2*pi``, the condition under which the discrete
    Weyl quantization of 1 is the identity.
    """

    x_min: float
    x_max: float
    n_x: int
    xi_min: float
    xi_max: float
    n_xi: int
    h: float = 1.0
    dx: float = field(init=False)
    dxi: float = field(init=False)

    def __post_init__(self):
        if self.n_x < 2 or self.n_xi < 2:
            raise ValueError("need at least 2 nodes per direction")
        if not (self.x_max > self.x_min and self.xi_max > self.xi_min):
            raise ValueError("empty phase-space window")
        if not (0.0 < self.h <= 1.0):
            raise ValueError(f"h must lie in (0, 1], got {self.h}")
        object.__setattr__(self, "dx", (self.x_max - self.x_min) / self.n_x)
        object.__setattr__(self, "dxi", (self.xi_max - self.xi_min) / self.n_xi)

    @classmethod
    def compatible(cls, n_x: int, x_half: float | None = None, h: float = 1.0,
                   n_xi: int | None = None) -> "PhaseGrid":
        """Grid on ``[-x_half, x_half] x [-pi/dx, pi/dx]``.

        With ``x_half=None`` the window is square, ``x_half = sqrt(pi n_x / 2)``.
        """
        n_xi = n_x if n_xi is None else n_xi
        if x_half is None:
            x_half = float(np.sqrt(np.pi * n_x / 2.0))
        dx = 2.0 * x_half / n_x
        xi_half = np.pi / dx  # xi window 2 pi / dx, so dx * dxi * n_xi = 2 pi
        return cls(-x_half, x_half, n_x, -xi_half, xi_half, n_xi, h)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_x) + 0.5) * self.dx

    @property
    def xi(self) -> np.ndarray:
        return self.xi_min + (np.arange(self.n_xi) + 0.5) * self.dxi

    @property
    def x_half(self) -> np.ndarray:
        """The 2*n_x half-step lattice holding every Weyl midpoint (x_j+x_k)/2."""
        return self.x_min + 0.5 * self.dx + 0.5 * self.dx * np.arange(2 * self.n_x)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_x, self.n_xi)

    @property
    def L_x(self) -> float:
        return self.x_max - self.x_min

    @property
    def L_xi(self) -> float:
        return self.xi_max - self.xi_min

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.xi, indexing="ij")

    def compatibility_defect(self) -> float:
        """|dx*dxi*n_xi/(2 pi) - round(.)|; zero for DFT-matched windows."""
        r = self.dx * self.dxi * self.n_xi / (2 * np.pi)
        return abs(r - round(r))

    def with_h(self, h: float) -> "PhaseGrid":
        return PhaseGrid(self.x_min, self.x_max, self.n_x,
                         self.xi_min, self.xi_max, self.n_xi, h)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time nodes ``linspace(t_min, t_max, n_t)`` with half-width T."""

    t_min: float
    t_max: float
    n_t: int
    T: float
    dt: float = field(init=False)

    def __post_init__(self):
        if self.n_t < 3:
            raise ValueError("need at least 3 time nodes")
        if not self.T > 0:
            raise ValueError("T must be positive")
        tol = 1e-12 * max(1.0, abs(self.T))
        if not (self.t_min <= -self.T + tol and self.T - tol <= self.t_max):
            raise ValueError("time window must contain [-T, T]")
        object.__setattr__(self, "dt", (self.t_max - self.t_min) / (self.n_t - 1))

    @classmethod
    def symmetric(cls, T: float, n_t: int = 33) -> "TimeGrid":
        return cls(-T, T, n_t, T)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.n_t)

    def inside(self, atol: float = 1e-12) -> np.ndarray:
        """Boolean mask of nodes with |t| <= T."""
        return np.abs(self.t) <= self.T * (1 + atol)

    def weights(self) -> np.ndarray:
        """Trapezoid weights for integrals over the whole window."""
        w = np.full(self.n_t, self.dt)
        w[0] = w[-1] = self.dt / 2
        return w


@dataclass(frozen=True)
class ScalarField:
    """Real samples f[i, j, k] = f(t_i, x_j, xi_k)."""

    grid: PhaseGrid
    time: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        expected = (self.time.n_t, self.grid.n_x, self.grid.n_xi)
        if v.shape != expected:
            raise FieldError(f"shape {v.shape} != {expected}")
        _check_finite(v)
        object.__setattr__(self, "values", _freeze(v))

    def replace(self, values) -> "ScalarField":
        return ScalarField(self.grid, self.time, values)

    def __getitem__(self, i):
        return self.values[i]


@dataclass(frozen=True)
class MatrixField:
    """Complex N x N samples P[i, j, k] = P(t_i, x_j, xi_k)."""

    grid: PhaseGrid
    time: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 5 or v.shape[-1] != v.shape[-2]:
            raise FieldError(f"expected (n_t, n_x, n_xi, N, N) blocks, got {v.shape}")
        expected = (self.time.n_t, self.grid.n_x, self.grid.n_xi)
        if v.shape[:3] != expected:
            raise FieldError(f"shape {v.shape[:3]} != {expected}")
        _check_finite(v)
        object.__setattr__(self, "values", _freeze(v))

    @property
    def dim(self) -> int:
        return self.values.shape[-1]


def _check_finite(v):
    bad = ~np.isfinite(v)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise FieldError(f"non-finite value at index {idx}")


def _eval_on_grid(callback, t, x, xi, tail=()):
    T, X, XI = np.meshgrid(t, x, xi, indexing="ij")
    try:
        out = np.asarray(callback(T, X, XI))
    except Exception:  # callback is not vectorized; fall back to pointwise calls
        out = None
    target = T.shape + tuple(tail)
    if out is None or out.shape not in (target, ()):
        if out is not None and out.shape != () and np.size(out) == np.prod(target):
            return out.reshape(target)
        out = np.empty(target, dtype=complex if tail else float)
        for idx in np.ndindex(T.shape):
            out[idx] = callback(T[idx], X[idx], XI[idx])
        return out
    return np.broadcast_to(out, target)


def sample_scalar(callback: Callable, time: TimeGrid, grid: PhaseGrid) -> ScalarField:
    """Sample ``callback(t, x, xi)`` at every (time node, cell centre).

    The callback is tried once with broadcast arrays and falls back to
    pointwise evaluation.  Non-finite values raise :class:`FieldError`
    naming the offending (t, x, xi) index.
    """
    vals = _eval_on_grid(callback, time.t, grid.x, grid.xi)
    if np.iscomplexobj(vals):
        if np.abs(vals.imag).max(initial=0.0) > 0:
            raise FieldError("scalar symbol must be real")
        vals = vals.real
    return ScalarField(grid, time, np.array(vals, dtype=float))


def sample_matrix(callback: Callable, time: TimeGrid, grid: PhaseGrid, N: int) -> MatrixField:
    """Sample an N x N matrix symbol ``callback(t, x, xi) -> (..., N, N)``."""
    vals = _eval_on_grid(callback, time.t, grid.x, grid.xi, tail=(N, N))
    return MatrixField(grid, time, np.array(vals, dtype=complex))


def sample_midpoints(callback: Callable, time: TimeGrid, grid: PhaseGrid) -> np.ndarray:
    """Sample a scalar symbol on the half-step x lattice (n_t, 2 n_x, n_xi)."""
    vals = np.asarray(_eval_on_grid(callback, time.t, grid.x_half, grid.xi))
    _check_finite(vals)
    return np.array(vals.real if np.iscomplexobj(vals) else vals, dtype=float)


# -- finite differences -----------------------------------------------------

def _d1(f, h, axis):
    return np.gradient(f, h, axis=axis, edge_order=2)


def _d2(f, h, axis):
    f = np.moveaxis(f, axis, -1)
    out = np.empty_like(f)
    out[..., 1:-1] = (f[..., 2:] - 2 * f[..., 1:-1] + f[..., :-2]) / h**2
    out[..., 0] = (2 * f[..., 0] - 5 * f[..., 1] + 4 * f[..., 2] - f[..., 3]) / h**2
    out[..., -1] = (2 * f[..., -1] - 5 * f[..., -2] + 4 * f[..., -3] - f[..., -4]) / h**2
    return np.moveaxis(out, -1, axis)


def diff_w(f: ScalarField, order: int = 1, norm: bool = True):
    """Phase-space derivatives of a scalar field.

    Central differences in the interior, second-order one-sided stencils on
    the boundary.

    Parameters
    ----------
    f : ScalarField
    order : {1, 2}
        Gradient or Hessian.
    norm : bool
        If true return ``|f'|`` (Euclidean) or ``|f''|`` (Frobenius) as a
        ScalarField; otherwise the raw array with trailing (2,) or (2, 2).
    """
    g = f.grid
    v = f.values
    if order == 1:
        if min(g.n_x, g.n_xi) < 3:
            raise FieldError("gradient needs at least 3 nodes per direction")
        grad = np.stack([_d1(v, g.dx, 1), _d1(v, g.dxi, 2)], axis=-1)
        return f.replace(np.linalg.norm(grad, axis=-1)) if norm else grad
    if order == 2:
        if min(g.n_x, g.n_xi) < 5:
            raise FieldError("Hessian needs at least 5 nodes per direction")
        fxx = _d2(v, g.dx, 1)
        fpp = _d2(v, g.dxi, 2)
        fxp = _d1(_d1(v, g.dx, 1), g.dxi, 2)
        hess = np.stack([np.stack([fxx, fxp], -1), np.stack([fxp, fpp], -1)], -2)
        return f.replace(np.sqrt(fxx**2 + 2 * fxp**2 + fpp**2)) if norm else hess
    raise ValueError("order must be 1 or 2")


def gradient_scale(f: ScalarField) -> float:
    """max |f'| * h^(1/2); the weight bounds assume this is at most 1."""
    s = float(diff_w(f, 1).values.max() * np.sqrt(f.grid.h))
    if s > 1.0 + 1e-12:
        log.warning("max|f'| h^(1/2) = %.3g > 1: symbol not normalized for this h", s)
    return s


# -- PSLF binary format -------------------------------------------------------

def _header(kind, n_t, n_x, n_xi, N, grid, time):
    t_min, t_max, T = (time.t_min, time.t_max, time.T) if time is not None else (0.0, 0.0, 0.0)
    return MAGIC + _HEADER.pack(VERSION, kind, n_t, n_x, n_xi, N,
                                grid.x_min, grid.x_max, grid.xi_min, grid.xi_max,
                                t_min, t_max, grid.h, T)


def write_field(path, fld) -> None:
    """Write a ScalarField or MatrixField in PSLF format."""
    g, tm = fld.grid, fld.time
    if isinstance(fld, ScalarField):
        head = _header(KIND_SCALAR, tm.n_t, g.n_x, g.n_xi, 1, g, tm)
        payload = np.ascontiguousarray(fld.values, dtype="<f8").tobytes()
    elif isinstance(fld, MatrixField):
        head = _header(KIND_MATRIX, tm.n_t, g.n_x, g.n_xi, fld.dim, g, tm)
        payload = np.ascontiguousarray(fld.values, dtype="<c16").tobytes()
    else:
        raise TypeError(f"cannot write {type(fld).__name__}")
    Path(path).write_bytes(head + payload)


def _parse(buf: bytes):
    if len(buf) < len(MAGIC) + _HEADER.size:
        raise FieldFormatError("file shorter than PSLF header")
    if buf[:len(MAGIC)] != MAGIC:
        raise FieldFormatError(f"bad magic {buf[:len(MAGIC)]!r}")
    vals = _HEADER.unpack_from(buf, len(MAGIC))
    version, kind, n_t, n_x, n_xi, N = vals[:6]
    if version != VERSION:
        raise FieldFormatError(f"unsupported PSLF version {version}")
    return kind, (n_t, n_x, n_xi, N), vals[6:], buf[len(MAGIC) + _HEADER.size:]


def _payload(body, count, dtype):
    need = count * np.dtype(dtype).itemsize
    if len(body) < need:
        raise FieldFormatError(
            f"truncated payload: {len(body) // 8} floats present, {need // 8} expected")
    if len(body) > need:
        raise FieldFormatError(f"{len(body) - need} trailing bytes after payload")
    return np.frombuffer(body, dtype=dtype).astype(dtype[1:] if dtype[0] == "<" else dtype)


def read_field(path):
    """Read a PSLF scalar or matrix field written by :func:`write_field`."""
    kind, (n_t, n_x, n_xi, N), meta, body = _parse(Path(path).read_bytes())
    x_min, x_max, xi_min, xi_max, t_min, t_max, h, T = meta
    if kind == KIND_SCALAR:
        if N != 1:
            raise FieldFormatError("scalar field must declare N = 1")
        vals = _payload(body, n_t * n_x * n_xi, "<f8").reshape(n_t, n_x, n_xi)
    elif kind == KIND_MATRIX:
        vals = _payload(body, n_t * n_x * n_xi * N * N, "<c16")
        vals = vals.reshape(n_t, n_x, n_xi, N, N)
    else:
        raise FieldFormatError(f"kind {kind} is not a field (use read_operator)")
    try:
        grid = PhaseGrid(x_min, x_max, n_x, xi_min, xi_max, n_xi, h)
        time = TimeGrid(t_min, t_max, n_t, T)
    except ValueError as e:
        raise FieldFormatError(f"inconsistent header: {e}") from e
    return (ScalarField if kind == KIND_SCALAR else MatrixField)(grid, time, vals)
