"""Rank agreement between predicted barn counts and census operation counts."""

from __future__ import annotations

import math

import numpy as np

from barnscan.census import CountyRecord, cv_subset_sweep, spearman, threshold_sweep

rng = np.random.default_rng(6)
records = []
for k in range(400):
    scale = rng.gamma(2.0, 40.0)
    large = rng.poisson(scale / 8)
    medium = rng.poisson(scale / 3) + rng.poisson(15)
    small = rng.poisson(scale) + rng.poisson(80)
    cv = float(rng.uniform(0, 0.8))
    barns = max(0, int(round(4 * large + rng.normal(0, 1 + 20 * cv))))
    records.append(CountyRecord(f"{k:05d}", barns, {1: small, 400: medium, 10000: large}, cv))

print("rho by operation size:", {t: round(r, 3) for t, r in threshold_sweep(records, [1, 400, 10000]).items()})
cv = cv_subset_sweep(records, [0.05, 0.1, 0.2, 0.4, math.inf], threshold=10000)
print("rho by CV cutoff (>= 10,000 heads):", {c: None if r is None else round(r, 3) for c, r in cv.items()})
print("ties handled by average ranks:", round(spearman([1, 2, 2, 4], [10, 20, 30, 40]), 4))
