"""
Pointwise analysis of matrix symbols P(w), w in R^d.

Multiplicities, principal type (determinant and bilinear-form tests),
constant characteristics, block reduction along a patch, companion systems
and a gallery of classical examples with their known verdicts.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from math import comb
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import null_space, orthogonal_procrustes
from scipy.optimize import linear_sum_assignment

from .psi import trace_bicharacteristic

RANK_TOL = 1e-8
CLUSTER_TOL = 1e-6


class ClusterAmbiguity(ValueError):
    """The clustering radius does not separate the spectrum cleanly."""


def _mat(P: Callable, w) -> np.ndarray:
    return np.atleast_2d(np.asarray(P(np.asarray(w, dtype=float)), dtype=complex))


def _scale(A: np.ndarray) -> float:
    return float(np.linalg.norm(A, 2))


def _rank(A: np.ndarray, thr: float) -> int:
    s = np.linalg.svd(A, compute_uv=False)
    return int((s > thr).sum())


def _cluster_tol(P: np.ndarray, tol: float | None) -> float:
    return CLUSTER_TOL * max(_scale(P), 1.0) if tol is None else tol


def multiplicities(P: np.ndarray, lam: complex, tol: float | None = None,
                   rank_tol: float = RANK_TOL) -> tuple[int, int]:
    """(algebraic, geometric) multiplicity of ``lam`` for the matrix ``P``.

    alg counts eigenvalues within ``tol`` of lam (default 1e-6 max(||P||, 1));
    geo = N - rank(P - lam Id) with singular values <= rank_tol ||P|| treated
    as zero.  Raises :class:`ClusterAmbiguity` when an eigenvalue sits
    between tol and 10 tol from lam.
    """
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    N = P.shape[0]
    tol = _cluster_tol(P, tol)
    d = np.abs(np.linalg.eigvals(P) - lam)
    if ((d > tol) & (d <= 10 * tol)).any():
        raise ClusterAmbiguity(f"eigenvalue at distance {d[(d > tol) & (d <= 10 * tol)].min():.3g} "
                               f"from {lam} with tol {tol:.3g}")
    alg = int((d <= tol).sum())
    geo = N - _rank(P - lam * np.eye(N), rank_tol * _scale(P))
    return alg, geo


def clusters(P: np.ndarray, tol: float | None = None, rank_tol: float = RANK_TOL) -> list[dict]:
    """Eigenvalue clusters (single linkage at radius ``tol``) with (alg, geo)."""
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    N = P.shape[0]
    tol = _cluster_tol(P, tol)
    ev = np.linalg.eigvals(P)
    lab = np.arange(N)
    for i in range(N):
        for j in range(i + 1, N):
            if abs(ev[i] - ev[j]) <= tol and lab[i] != lab[j]:
                lab[lab == lab[j]] = lab[i]
    out = []
    for c in np.unique(lab):
        idx = np.nonzero(lab == c)[0]
        mu = ev[idx].mean()
        geo = N - _rank(P - mu * np.eye(N), rank_tol * _scale(P))
        out.append({"center": complex(mu), "members": idx.tolist(), "alg": len(idx), "geo": geo})
    return out


# -- eigenvalue sections ----------------------------------------------------

@dataclass
class EigenSection:
    """A tracked eigenvalue along a path, with multiplicities at every point."""

    s: np.ndarray
    values: np.ndarray
    alg_mult: np.ndarray
    geo_mult: np.ndarray
    continuous: bool
    c1: bool
    quotient_growth: float


def _track(P, path, s, lam0, tol):
    vals = []
    prev = lam0
    for si in s:
        ev = np.linalg.eigvals(_mat(P, path(si)))
        prev = ev[np.argmin(np.abs(ev - prev))]
        vals.append(prev)
    return np.array(vals)


def eigen_section(P: Callable, path: Callable, s: np.ndarray, lam0: complex = 0.0,
                  tol: float | None = None, jump_tol: float = 0.5) -> EigenSection:
    """Nearest-neighbour section along ``w = path(s)`` starting near ``lam0``.

    ``c1`` is false when the largest difference quotient grows by more than
    25 % under one halving of the step, as it does at a square-root branch.
    """
    s = np.asarray(s, dtype=float)
    vals = _track(P, path, s, lam0, tol)
    alg, geo = [], []
    for si, v in zip(s, vals):
        A = _mat(P, path(si))
        c = min(clusters(A, tol), key=lambda c: abs(c["center"] - v))
        alg.append(c["alg"])
        geo.append(c["geo"])
    fine = np.linspace(s[0], s[-1], 2 * len(s) - 1)
    vf = _track(P, path, fine, lam0, tol)
    q0 = np.abs(np.diff(vals) / np.diff(s)).max()
    q1 = np.abs(np.diff(vf) / np.diff(fine)).max()
    growth = float(q1 / q0) if q0 > 0 else 1.0
    jump = float(np.abs(np.diff(vals)).max()) if len(s) > 1 else 0.0
    return EigenSection(s, vals, np.array(alg), np.array(geo), jump <= jump_tol,
                        growth <= 1.25, growth)


# -- principal type -----------------------------------------------------------

def _dir_derivative(g: Callable, k: int, h: float):
    """k-th derivative at 0 by central differences with one Richardson step."""
    def D(step):
        return sum((-1) ** j * comb(k, j) * g((k / 2 - j) * step) for j in range(k + 1)) / step**k
    return (4 * D(h / 2) - D(h)) / 3


def _directions(d: int, n_random: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    r = rng.standard_normal((n_random, d))
    return np.vstack([np.eye(d), r / np.linalg.norm(r, axis=1, keepdims=True)])


def principal_type_test(P: Callable, w0, fd_step: float = 1e-2, tol: float = 1e-6,
                        rank_tol: float = RANK_TOL, n_random: int = 8, seed: int = 0) -> dict:
    """Principal type at ``w0`` by two independent criteria.

    Determinant test: some directional derivative of order k = dim ker P(w0)
    of w -> det P(w) is nonzero.  Bilinear test: for some direction nu the
    form (u, v) -> <d_nu P u, v> on ker P x ker P* is nondegenerate.  The
    same directions (axes plus random unit vectors) are used for both.
    """
    w0 = np.asarray(w0, dtype=float)
    P0 = _mat(P, w0)
    N = P0.shape[0]
    thr = rank_tol * max(_scale(P0), 1.0)
    k = N - _rank(P0, thr)
    base = {"k": k, "fd_step": fd_step, "tol": tol, "rank_tol": rank_tol}
    if k == 0:
        return {**base, "is_pt": True, "verdict": "elliptic", "witness_nu": None,
                "det_derivative": float(abs(np.linalg.det(P0))), "bilinear_sigma_min": None}
    if k > 4:
        return {**base, "is_pt": None, "verdict": "indeterminate",
                "note": "derivative order above 4", "witness_nu": None,
                "det_derivative": None, "bilinear_sigma_min": None}
    U = null_space(P0, rcond=thr / max(_scale(P0), 1e-300))[:, :k]
    V = null_space(P0.conj().T, rcond=thr / max(_scale(P0), 1e-300))[:, :k]
    dets, sig = [], []
    dirs = _directions(len(w0), n_random, seed)
    for nu in dirs:
        dets.append(abs(_dir_derivative(lambda s: np.linalg.det(_mat(P, w0 + s * nu)), k, fd_step)))
        dP = _dir_derivative(lambda s: _mat(P, w0 + s * nu), 1, fd_step)
        sig.append(np.linalg.svd(V.conj().T @ dP @ U, compute_uv=False).min())
    dets, sig = np.array(dets), np.array(sig)
    det_pt, bil_pt = bool(dets.max() > tol), bool(sig.max() > tol)
    i = int(np.argmax(dets))
    out = {**base, "witness_nu": dirs[i].tolist(), "det_derivative": float(dets[i]),
           "bilinear_sigma_min": float(sig.max()), "det_test": det_pt, "bilinear_test": bil_pt}
    if det_pt != bil_pt:
        return {**out, "is_pt": None, "verdict": "indeterminate"}
    return {**out, "is_pt": det_pt, "verdict": "principal type" if det_pt else "not principal type"}


# -- constant characteristics -------------------------------------------------

def _labelled(P0, tol, rank_tol):
    cl = clusters(P0, tol, rank_tol)
    ev = np.linalg.eigvals(P0)
    lab = np.empty(len(ev), int)
    for c_i, c in enumerate(cl):
        lab[c["members"]] = c_i
    return ev, lab, cl


def constant_characteristics_test(P: Callable, w0, eps_ball: float = 0.1, n_samples: int = 64,
                                  lam_window: float | None = None, tol: float | None = None,
                                  rank_tol: float = RANK_TOL, n_path: int = 16,
                                  seed: int = 0) -> dict:
    """Sampled check that eigenvalue sections with |lambda| < lam_window keep (alg, geo).

    Eigenvalues are tracked from ``w0`` to each sample along a straight path
    by optimal matching.  A section whose eigenvalues split, or whose cluster
    changes (alg, geo), makes the verdict false.  Two sections from different
    clusters coming closer than twice the per-step displacement (or ``tol``)
    make it indeterminate.
    """
    w0 = np.asarray(w0, dtype=float)
    lam_window = eps_ball if lam_window is None else lam_window
    P0 = _mat(P, w0)
    tol = _cluster_tol(P0, tol)
    ev0, lab, cl0 = _labelled(P0, tol, rank_tol)
    watch = [i for i, c in enumerate(cl0) if abs(c["center"]) < lam_window]
    base = {"eps_ball": eps_ball, "lam_window": lam_window, "tol": tol, "rank_tol": rank_tol,
            "at_w0": [{"center": [c["center"].real, c["center"].imag], "alg": c["alg"],
                       "geo": c["geo"]} for i, c in enumerate(cl0) if i in watch]}
    rng = np.random.default_rng(seed)
    d = len(w0)
    for _ in range(n_samples):
        v = rng.standard_normal(d)
        w = w0 + eps_ball * rng.random() ** (1 / d) * v / np.linalg.norm(v)
        ev = ev0.copy()
        for s in np.linspace(0, 1, n_path + 1)[1:]:
            new = np.linalg.eigvals(_mat(P, w0 + s * (w - w0)))
            r, c = linear_sum_assignment(np.abs(ev[:, None] - new[None, :]))
            moved = new[c[np.argsort(r)]]
            # matching is ambiguous once sections come closer than they move per step
            gap = max(tol, 2 * np.abs(moved - ev).max())
            ev = moved
            diff = np.abs(ev[:, None] - ev[None, :])
            clash = (diff <= gap) & (lab[:, None] != lab[None, :])
            if clash.any():
                i, j = map(int, np.argwhere(clash)[0])
                return {**base, "constant": None, "verdict": "indeterminate",
                        "evidence": {"w": (w0 + s * (w - w0)).tolist(),
                                     "colliding": [[ev[i].real, ev[i].imag], [ev[j].real, ev[j].imag]]}}
        Pw = _mat(P, w)
        clw = clusters(Pw, tol, rank_tol)
        for li in watch:
            members = set(np.nonzero(lab == li)[0].tolist())
            # clusters at w containing the tracked members (matched by value)
            hit = []
            for c in clw:
                vals = [ev[m] for m in members if min(abs(ev[m] - np.linalg.eigvals(Pw)[c["members"]])) <= tol]
                if vals:
                    hit.append(c)
            ok = (len(hit) == 1 and hit[0]["alg"] == cl0[li]["alg"] and hit[0]["geo"] == cl0[li]["geo"])
            if not ok:
                return {**base, "constant": False, "verdict": "not constant",
                        "evidence": {"w": w.tolist(), "w0_mult": [cl0[li]["alg"], cl0[li]["geo"]],
                                     "w_mult": [[c["alg"], c["geo"]] for c in hit]}}
    return {**base, "constant": True, "verdict": "constant", "evidence": {"n_samples": n_samples}}


def constant_characteristics_sweep(P: Callable, w0, eps_values=(0.3, 0.1, 0.03, 0.01),
                                   **kw) -> dict:
    """Verdict for each ball radius; the existential epsilon is left to the reader."""
    res = {float(e): constant_characteristics_test(P, w0, eps_ball=e, **kw)["constant"]
           for e in eps_values}
    vals = set(res.values())
    return {"verdicts": res, "stable": len(vals) == 1}


# -- block reduction ----------------------------------------------------------

@dataclass
class BlockReduction:
    status: str
    K: int
    lam: np.ndarray
    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    q12: np.ndarray
    q21: np.ndarray
    q11_defect: np.ndarray
    roundtrip: np.ndarray
    p22_cond: np.ndarray

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _align(U, U_prev):
    """Rotate the columns of U (within their span) to best match U_prev."""
    R, _ = orthogonal_procrustes(U, U_prev)
    return U @ R


def block_reduce(P: Callable, points: np.ndarray, lam=None, tol: float = 1e-8,
                 cluster_tol: float | None = None) -> BlockReduction:
    """Reduce P to diag(lambda Id_K, Q22) along an ordered patch of points.

    At every point: an orthonormal kernel basis of P - lambda Id (aligned to
    the previous point by orthogonal Procrustes) and its complement give a
    unitary E with E* P E block upper triangular; the left factor
    [[Id, -P12 P22^-1], [0, Id]] removes the (1, 2) block.  A = L E* and
    B = E, so A P B = Q.

    ``lam`` is a callback, an array of values, or None for the eigenvalue
    nearest zero at the first point followed by nearest-neighbour tracking.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    mats = [_mat(P, w) for w in pts]
    N = mats[0].shape[0]
    if callable(lam):
        lams = np.array([complex(lam(w)) for w in pts])
    elif lam is not None:
        lams = np.asarray(lam, dtype=complex)
    else:
        lams, prev = [], 0.0
        for M in mats:
            ev = np.linalg.eigvals(M)
            prev = ev[np.argmin(np.abs(ev - prev))]
            lams.append(prev)
        lams = np.array(lams)
    n = len(pts)
    out = {k: np.zeros((n, N, N), complex) for k in ("E", "A", "B", "Q")}
    q12, q21, q11, rt, cond = (np.full(n, np.nan) for _ in range(5))
    status, K = "ok", None
    U_prev = W_prev = None
    for i, (M, lm) in enumerate(zip(mats, lams)):
        try:
            alg, geo = multiplicities(M, lm, cluster_tol)
        except ClusterAmbiguity:
            alg, geo = -1, -1
        if K is None:
            K = geo
        if alg != geo or geo != K or K == 0:
            status = "multiplicity not constant on patch"
            break
        Sh = M - lm * np.eye(N)
        _, s, Vh = np.linalg.svd(Sh)
        U = Vh[N - K:].conj().T
        Wc = Vh[:N - K].conj().T
        if U_prev is not None:
            U = _align(U, U_prev)
            if N > K:
                Wc = _align(Wc, W_prev)
        U_prev, W_prev = U, Wc
        E = np.hstack([U, Wc])
        T = E.conj().T @ M @ E
        P12, P22 = T[:K, K:], T[K:, K:]
        if N > K:
            c = np.linalg.cond(P22)
            cond[i] = c
            if not np.isfinite(c) or c > 1 / tol:
                status = "not principal type on patch"
                break
            X = np.linalg.solve(P22.T, P12.T).T
        else:
            X = np.zeros((K, 0))
        L = np.eye(N, dtype=complex)
        L[:K, K:] = -X
        A = L @ E.conj().T
        Q = A @ M @ E
        D = np.zeros_like(Q)
        D[:K, :K], D[K:, K:] = Q[:K, :K], Q[K:, K:]
        out["E"][i], out["A"][i], out["B"][i], out["Q"][i] = E, A, E, Q
        q12[i] = np.linalg.norm(Q[:K, K:])
        q21[i] = np.linalg.norm(Q[K:, :K])
        q11[i] = np.linalg.norm(Q[:K, :K] - lm * np.eye(K))
        rt[i] = np.linalg.norm(A @ M @ E - D) / max(np.linalg.norm(M), 1e-300)
    return BlockReduction(status, int(K or 0), lams, out["E"], out["A"], out["B"], out["Q"],
                          q12, q21, q11, rt, cond)


# -- companion systems --------------------------------------------------------

def companion_system(Q: Callable, A: Sequence[Callable]) -> Callable:
    """w -> N x N matrix [[Q, -1, 0, ...], ..., [A_0, A_1, ..., Q + A_{N-1}]]."""
    A = list(A)
    N = len(A)
    if N < 1:
        raise ValueError("companion system needs N >= 1")

    def P(w):
        q = complex(Q(w))
        M = np.zeros((N, N), complex)
        M[np.arange(N), np.arange(N)] = q
        M[np.arange(N - 1), np.arange(1, N)] = -1
        M[N - 1, :] += np.array([complex(a(w)) for a in A])
        return M
    return P


# -- gallery ------------------------------------------------------------------

@dataclass
class ClassificationReport:
    name: str
    w0: list
    principal_type: bool | None
    pt_certificate: dict
    constant_characteristics: bool | None
    cc_evidence: dict
    psi_status: str = "not-checked"
    diagonalizable: bool | None = None
    block_form: dict | None = None
    expected: dict = field(default_factory=dict)

    def matches(self) -> dict:
        """expected key -> whether the computed verdict agrees."""
        return {k: getattr(self, k) == v for k, v in self.expected.items()}

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.generic):
        return _jsonable(o.item())
    return o


def diagonalizable(P: np.ndarray, tol: float | None = None) -> bool:
    """alg == geo for every eigenvalue cluster."""
    return all(c["alg"] == c["geo"] for c in clusters(P, tol))


def psi_status_of(q: Callable, start, step: float = 0.05, max_steps: int = 40) -> str:
    """'violated' when Im q changes sign from - to + along the flow of Re q."""
    r = trace_bicharacteristic(q, start, step=step, max_steps=max_steps)
    return "violated" if r.events else "holds"


def classify(name: str, P: Callable, w0, eigenvalue: Callable | None = None,
             trace_start=None, expected: dict | None = None, rank_tol: float = RANK_TOL,
             **cc_kw) -> ClassificationReport:
    """Run the principal-type, constant-characteristics and (optionally) sign tests.

    ``rank_tol`` goes to both tests; remaining keywords to
    :func:`constant_characteristics_test`.
    """
    pt = principal_type_test(P, w0, rank_tol=rank_tol)
    cc = constant_characteristics_test(P, w0, rank_tol=rank_tol, **cc_kw)
    psi = "not-checked"
    if eigenvalue is not None:
        psi = psi_status_of(eigenvalue, trace_start)
    return ClassificationReport(name, list(map(float, w0)), pt["is_pt"], pt, cc["constant"], cc,
                                psi, diagonalizable(_mat(P, w0)), None, expected or {})


def _popex(p1):
    # principal symbol of [[p, p1], [-1, p]]: the -1 entry is of lower order
    return lambda w: np.array([[w[1], p1(w)], [0, w[1]]])


def _newex(b0=1.0):
    def P(w):
        xi1, xi2 = w[0], w[1]
        nrm = np.linalg.norm(w)
        return np.array([[xi1, xi2 * b0], [0, xi1 + xi2**2 / nrm]])
    return P


def nonsolvex_symbol(b: Callable) -> Callable:
    """sigma(P)(t, tau, xi) = [[tau + b xi, (t - i b) xi], [(t + i b) xi, -tau + b xi]]."""
    def P(w):
        t, tau, xi = w
        bt = b(t)
        return np.array([[tau + bt * xi, (t - 1j * bt) * xi],
                         [(t + 1j * bt) * xi, -tau + bt * xi]])
    return P


def nonsolvex_triangular(b: Callable) -> Callable:
    """[[tau - i t xi, 2 b xi], [0, tau + i t xi]]."""
    def Q(w):
        t, tau, xi = w
        return np.array([[tau - 1j * t * xi, 2 * b(t) * xi], [0, tau + 1j * t * xi]])
    return Q


NONSOLVEX_LEFT = 0.5 * np.array([[1, -1j], [1, 1j]])
NONSOLVEX_RIGHT = np.array([[1, 1], [-1j, 1j]])


def symmetric_example(w):
    return np.array([[w[0], w[1]], [w[1], -w[0]]], dtype=complex)


def jordan_example(w):
    lam = w[0] + 1j * w[1] ** 2
    return np.array([[lam, w[1]], [0, lam]])


def branch_example(w):
    return np.array([[w[0], 1], [w[1], w[0]]], dtype=complex)


def sqrt_example(w):
    return np.array([[0, 1], [w[0], 0]], dtype=complex)


def gallery_specs(scale: float = 1.0) -> list[dict]:
    """Classical examples with their known verdicts; ``scale`` rescales the xi slice.

    Each entry holds the keyword arguments of :func:`classify`.
    """
    s = scale
    ev_t = lambda t, tau: tau + 1j * t * s
    return [
        # (a) square of a real principal-type operator, reduced to a 2 x 2 system; w = (x1, xi1)
        dict(name="popex_p1_zero", P=_popex(lambda w: 1j * w[0]), w0=[0.0, 0.0],
             eigenvalue=lambda x, xi: xi + 0j, trace_start=(-1.0, 0.0),
             expected={"principal_type": True, "constant_characteristics": False,
                       "psi_status": "holds"}),
        dict(name="popex_p1_nonzero", P=_popex(lambda w: 1j * w[0]), w0=[0.5, 0.0],
             eigenvalue=lambda x, xi: xi + 0j, trace_start=(-1.0, 0.0),
             expected={"principal_type": False, "constant_characteristics": True,
                       "psi_status": "holds"}),
        # (b) unsolvable system of principal type without constant characteristics
        dict(name="newex", P=_newex(), w0=[0.0, 0.0, s],
             expected={"principal_type": True, "constant_characteristics": False}),
        # (c) symmetric system with b = 1 and b = 0; w = (t, tau, xi) at t = tau = 0
        dict(name="nonsolvex_b1", P=nonsolvex_symbol(lambda t: 1.0), w0=[0.0, 0.0, s],
             eigenvalue=ev_t, trace_start=(-1.0, 0.0),
             expected={"diagonalizable": True, "principal_type": False,
                       "psi_status": "violated"}),
        dict(name="nonsolvex_b0", P=nonsolvex_symbol(lambda t: 0.0), w0=[0.0, 0.0, s],
             eigenvalue=ev_t, trace_start=(-1.0, 0.0),
             expected={"principal_type": True, "constant_characteristics": False,
                       "diagonalizable": True, "psi_status": "violated"}),
        # (d) symmetric example with eigenvalues +-|w|
        dict(name="symmetric", P=symmetric_example, w0=[0.0, 0.0],
             expected={"principal_type": True, "constant_characteristics": False}),
        # (e) constant algebraic but not geometric multiplicity; and the converse
        dict(name="jordan", P=jordan_example, w0=[0.0, 0.0],
             expected={"principal_type": True, "constant_characteristics": False}),
        dict(name="branch", P=branch_example, w0=[0.0, 0.0],
             expected={"principal_type": True, "constant_characteristics": False,
                       "diagonalizable": False}),
    ]


GALLERY_ALIASES = {"symmetric_w1_w2": "symmetric"}


def gallery_item(name: str, scale: float = 1.0) -> dict:
    name = GALLERY_ALIASES.get(name, name)
    for spec in gallery_specs(scale):
        if spec["name"] == name:
            return spec
    known = sorted([sp["name"] for sp in gallery_specs()] + list(GALLERY_ALIASES))
    raise KeyError(f"unknown gallery item {name!r}; known: {known}")


def gallery(scale: float = 1.0) -> list[ClassificationReport]:
    return [classify(**spec) for spec in gallery_specs(scale)]
