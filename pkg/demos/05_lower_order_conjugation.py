"""Removing a lower-order term F_0 by conjugation.

Solves D_t E + F_0 E = 0, E(0) = Id pointwise in phase space, then checks the
multiplier estimate for the conjugated problem with trials u = E^w v.
"""
from psolv.estimate import (F0_CORPUS, estimate_symbol, lower_order_example,
                            reduce_lower_order, verify_propest_conjugated)
from psolv.grid import PhaseGrid, TimeGrid

grid = PhaseGrid.compatible(48, h=0.1)
time = TimeGrid.symmetric(1.0, 33)
for name, F0 in F0_CORPUS.items():
    r = reduce_lower_order(F0, time, grid, midpoints=True)
    print(f"F0 {name:18s} residual {r.residual:.1e}, min |det E| {r.min_abs_det:.3f}")

for sym in ("t_tanh", "x"):
    rep = verify_propest_conjugated(estimate_symbol(sym), lower_order_example, 0.1, 1.0,
                                    symbol=sym)
    print(f"{sym}: conjugated estimate holds={rep.verdict}, fitted C0={rep.fitted_C0:.3f}, "
          f"direct rhs all positive={rep.extra['direct_all_positive']}")
