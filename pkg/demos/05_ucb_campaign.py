"""Active validation: spend labelling effort where detections are most likely real."""

from __future__ import annotations

import numpy as np

from barnscan.ucb import estimate_total, new_campaign, run_campaign

rng = np.random.default_rng(4)
scores, truth = {}, {}
for k in range(6000):
    n = int(rng.poisson(0.6))
    s = rng.uniform(1, 6, n).tolist()
    scores[f"img{k:05d}"] = s
    p = 0.01 if not s else min(0.95, 0.12 * max(s))
    truth[f"img{k:05d}"] = bool(rng.random() < p)

state = new_campaign(scores, alpha=1.0, seed=1, k=5)
print("bucket sizes:", state.sizes.tolist())
records = run_campaign(state, 60, truth.__getitem__)
for rec in records[:3] + records[-2:]:
    print(f"round {rec['round']:3d}  found {rec['found']:4d}  N_mu {rec['N_c_mu']:7.1f}  "
          f"pi {np.round(rec['pi'], 2).tolist()}  stop {rec['stopped']}")
n_mu, n_pi, _ = estimate_total(state)
actual = sum(truth.values())
print(f"labelled {len(state.examined)} of {len(scores)} images; found {state.found} of {actual} facilities "
      f"({state.found / actual:.0%}); estimates N_mu {n_mu:.0f}, N_pi {n_pi:.0f}")
