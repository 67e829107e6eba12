#!/usr/bin/env python3
"""Full alternating factorization: damped Newton vs quasi-Newton vs
multiplicative updates.

All three methods run inside the same alternating loop and differ only in
how each mode's row subproblems are solved.  The second-order methods push
the KKT violation to tight tolerances; the multiplicative baseline makes
quick early progress, then slows to a crawl and rarely touches the bound
exactly.
"""

import numpy as np

from poissoncp import (
    FitConfig,
    GenConfig,
    fit,
    full_kkt_violation,
    generate_dataset,
    score_greedy,
)

config = GenConfig(dims=(20, 30, 40), rank=5, samples=50_000, seed=5)
truth, tensor = generate_dataset(config)
print(f"desk tensor: dims={config.dims} nnz={tensor.nnz} "
      f"density={tensor.density():.2%}\n")

results = {}
for method in ("pdnr", "pqnr", "mu"):
    res = fit(tensor, FitConfig(method=method, rank=5, tau=1e-4,
                                outer_max=200, seed=1))
    results[method] = res
    last = res.trace.records[-1]
    print(f"{method:>4}: converged={res.converged} after {len(res.trace)} "
          f"outer iterations, kkt={res.final_kkt:.2e}, "
          f"objective={last.objective:.4f}, exact zeros={last.exact_zeros}, "
          f"{last.seconds:.2f}s")

# The trace records one row per outer iteration; objectives never increase.
print("\npdnr trace (outer, kkt, objective, zeros):")
for rec in results["pdnr"].trace.records[::5]:
    print(f"  {rec.outer:>3} {rec.mode_kkt_max:>10.3e} "
          f"{rec.objective:>14.4f} {rec.exact_zeros:>5}")

# Post-hoc check: re-deriving every mode's KKT violation from scratch
# reproduces the driver's final figure.
per_mode, worst = full_kkt_violation(tensor, results["pdnr"].model)
print(f"\nper-mode KKT of the returned model: "
      f"{[f'{v:.2e}' for v in per_mode]} (max {worst:.2e})")

# Recovery: congruence of the fitted factors against the generator truth,
# and against an unrelated truth as a null reference.
other_truth, _ = generate_dataset(GenConfig(dims=(20, 30, 40), rank=5,
                                            samples=50_000, seed=99))
for method, res in results.items():
    hit = score_greedy(res.model, truth)
    null = score_greedy(res.model, other_truth)
    print(f"{method:>4}: score vs truth {hit.score:.3f} "
          f"(permutation {hit.permutation}), vs unrelated truth {null.score:.3f}")
