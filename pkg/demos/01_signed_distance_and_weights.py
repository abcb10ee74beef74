"""Signed distance, weights and their certificate for one symbol.

Samples f(t, x, xi) = t (1 + tanh xi) on a 33 x 64 x 64 grid, builds the
signed distance delta_0, the weights H^(-1/2), M, m and the pseudo-sign B_T,
and prints the checked inequalities.

    python demos/01_signed_distance_and_weights.py [symbol] [h]
"""
import sys

import numpy as np

from psolv import corpus
from psolv.grid import PhaseGrid, TimeGrid, sample_scalar
from psolv.psi import check_psibar, delta0_checks, sign_partition, signed_distance
from psolv.pseudo_sign import build_rho, certify_pseudo_sign
from psolv.weights import build_weights, certify_inequalities

name = sys.argv[1] if len(sys.argv) > 1 else "t_tanh"
h = float(sys.argv[2]) if len(sys.argv) > 2 else 0.1

grid = PhaseGrid.compatible(64, h=h)
time = TimeGrid.symmetric(1.0, 33)
f = sample_scalar(corpus.get(name).f, time, grid)
print(f"symbol {name}: {corpus.get(name).description}, h = {h}")

psi = check_psibar(f)
print(f"sign condition holds: {psi['holds']} ({psi['n_violations']} violating nodes)")

d = signed_distance(sign_partition(f), grid)
checks = delta0_checks(f, d)
print(f"delta_0 range [{d.delta0.min():.3f}, {d.delta0.max():.3f}], cap h^(-1/2) = {h**-0.5:.3f}")
print("delta_0 checks:", {k: v for k, v in checks.items() if k.endswith("ok")})

w = build_weights(f, d)
cert = certify_inequalities(w)
print(f"weights: m in [{w.m.min():.4f}, {w.m.max():.4f}], "
      f"H^(-1/2) in [{w.Hinv_sqrt.min():.3f}, {w.Hinv_sqrt.max():.3f}]")
print("weight certificate:", {k: cert[k] for k in ("hhhest_ok", "chain_ok", "qmax_ok",
                                                    "mest0_ok", "mest0_C0")})

ps = build_rho(d.delta0, w.m, time, 1.0)
pc = certify_pseudo_sign(ps, d.delta0, w.m, grid)
print("pseudo-sign certificate:", {k: bool(pc[k]) for k in ("rho_bound_ok", "derivative_ok",
                                                       "rho_lipschitz_ok", "ok")})
# B_T rises across the window: T dB/dt >= m / 2
j = k = 32
print("B_T along t at the centre node:", np.round(ps.B[:, j, k], 3))
