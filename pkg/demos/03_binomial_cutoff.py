"""The exact binomial cutoff, and why plain split conformal can't do this job.

Given M calibration scores, the threshold is the (M - k)-th smallest score
where k = k(M, eps, delta) is the largest integer with Bin(M, eps) CDF at
most delta. Smaller delta (more confidence) means smaller k, a higher order
statistic, and wider intervals. Plain split CP would need its level inflated
by sqrt(ln(1/delta) / 2M), which only fits below one when M is large enough.
"""

import numpy as np

from pacope import (
    binomial_quantile_k,
    child_rng,
    pac_threshold,
    split_cp_inflated_level,
    split_cp_min_calibration_size,
    split_cp_threshold,
)

eps = 0.2

print("cutoff k(M, 0.2, delta) by calibration size and confidence:")
print("      M |  d=0.5  d=0.25  d=0.1  d=0.01")
for m in (5, 20, 50, 100, 500, 1000):
    ks = [binomial_quantile_k(m, eps, d) for d in (0.5, 0.25, 0.1, 0.01)]
    print(f"  {m:5d} | " + "  ".join(f"{k:5d}" for k in ks))
print("(k = -1 forces the trivial whole-line interval: too little data for the guarantee)")

scores = np.sort(child_rng(3).normal(size=500))
print("\nthresholds on one set of 500 calibration scores:")
print(f"  split-CP at level 0.8 (marginal only): {split_cp_threshold(scores, 0.8):+.4f}")
for delta in (0.5, 0.25, 0.1, 0.01):
    thr = pac_threshold(scores, eps, delta)
    print(f"  PAC threshold at delta={delta:<5}: {thr:+.4f}")
print("(the threshold grows as delta shrinks: confidence costs width, moderately)")

print("\nlevel plain split CP would need for the same training-conditional guarantee:")
for m in (20, 29, 100, 500):
    level = split_cp_inflated_level(eps, 0.1, m)
    note = "  <- exceeds 1: inapplicable" if level > 1 else ""
    print(f"  M={m:4d}: level {level:.4f}{note}")
print(f"smallest workable M at (eps, delta) = (0.2, 0.1): "
      f"{split_cp_min_calibration_size(eps, 0.1)}")
