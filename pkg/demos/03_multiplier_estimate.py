"""The multiplier estimate on the estimate corpus, and what breaks without the sign condition.

For each symbol and h the largest tested T with Im <P_0 u, b_T^w u> > 0 on all
30 trials is found by bisection, and the fitted constant C_0 is printed.
The last block runs a symbol that violates the condition with the gate
switched off.
"""
from psolv import corpus
from psolv.estimate import GateError, bisect_T, build_pipeline, estimate_symbol, run_estimate

print(f"{'symbol':14s} {'h':>5s} {'T':>6s} {'C0':>8s}  status")
for name in corpus.ESTIMATE_CORPUS:
    for h in (0.2, 0.1, 0.05):
        b = bisect_T(estimate_symbol(name), h, name)
        print(f"{name:14s} {h:5.2f} {b['T']:6.3f} {b['report'].fitted_C0:8.3f}  {b['status']}")

bad = "minus_t_times_g"
try:
    build_pipeline(estimate_symbol(bad), 0.1, 1.0)
except GateError as e:
    print(f"\n{bad}: refused at the gate ({e})")
rep = run_estimate(estimate_symbol(bad), 0.1, 1.0, bad, skip_gate=True)
neg = [(n, round(r, 4)) for n, r in zip(rep.trials, rep.rhs_values) if r <= 0]
print(f"with the gate skipped: {len(neg)} of {len(rep.trials)} trials have rhs <= 0, e.g. {neg[:3]}")
