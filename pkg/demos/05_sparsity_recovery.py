#!/usr/bin/env python3
"""Finding the zeros: exact sparsity versus thresholding.

When the generating factors are sparse, the maximum-likelihood factors
contain entries exactly at the zero bound.  Projected second-order steps
land on the bound in finitely many iterations; multiplicative updates only
shrink entries geometrically, so recovering the support from them requires
guessing a threshold, and no single threshold is right at every accuracy.
"""

import numpy as np

from poissoncp import (
    FitConfig,
    GenConfig,
    KruskalModel,
    exact_zero_count,
    fit,
    generate_dataset,
    init_model,
    thresholded_zero_count,
)

config = GenConfig(dims=(20, 30, 40), rank=5, samples=50_000, seed=5)
truth, tensor = generate_dataset(config)

# Hold two modes at the truth and solve the remaining convex mode-1
# subproblem, so every run heads to the same unique optimum.
start = init_model(tensor.shape, 5, seed=1000)
start = KruskalModel(
    start.weights,
    (start.factors[0], truth.factors[1], truth.factors[2]),
    normalized=True,
)

runs = {}
for method, outers in (("pdnr", 100), ("pqnr", 100), ("mu", 100)):
    res = fit(tensor, FitConfig(method=method, rank=5, tau=1e-8,
                                outer_max=outers, modes=(1,)), init=start)
    runs[method] = res.model
    b = res.model.factors[0] * res.model.weights
    print(f"{method:>4}: kkt={res.final_kkt:.2e} after {len(res.trace)} outer "
          f"iterations, exact zeros in the mode-1 block: "
          f"{int(np.count_nonzero(b == 0.0))} of {b.size}")

# Thresholding the multiplicative result: each threshold answers
# differently, and none reproduces the exact count of the projected
# methods without knowing the answer first.
print("\nzero counts of the mode-1 factor under different definitions:")
print(f"{'model':>6} {'exact':>7} {'<=1e-3':>7} {'<=1e-4':>7} {'<=1e-5':>7}")
for method, model in runs.items():
    exact = exact_zero_count(model).per_factor[0]
    row = [f"{exact:>7}"]
    for t in (1e-3, 1e-4, 1e-5):
        row.append(f"{thresholded_zero_count(model, t).per_factor[0]:>7}")
    print(f"{method:>6} " + " ".join(row))

pdnr_b = runs["pdnr"].factors[0] * runs["pdnr"].weights
mu_b = runs["mu"].factors[0] * runs["mu"].weights
support_match = ((pdnr_b == 0) == (mu_b <= 1e-5)).mean()
print(f"\nfraction of entries where 'mu <= 1e-5' agrees with the exact "
      f"zero set: {support_match:.1%}")
smallest_nonzero = pdnr_b[pdnr_b > 0].min()
print(f"smallest nonzero entry of the projected solution: "
      f"{smallest_nonzero:.3e} (an exact-zero report needs no threshold)")
