"""
Online step calibration with hedge
==================================

The hedge forecaster against an adaptive nature and against coin flips.
Its step error grows like sqrt(T log T).
"""

import math

from stepcal import scaling_fit

grid = [128, 256, 512, 1024]
natures = {
    "binary_search": {"kind": "binary_search", "T": grid[0]},
    "bernoulli_half": {"kind": "product", "T": grid[0], "pstar": 0.5},
}

for label, nature in natures.items():
    fit = scaling_fit(nature, {"kind": "hedge_step"}, "step", grid, n_reps=20, seed=3)
    print(f"{label}: log-log slope {fit.slope:.3f}")
    for T, r in zip(grid, fit.reports):
        print(f"  T={T:>5} mean {r.mean:7.2f}  sqrt(T ln T) {math.sqrt(T * math.log(T)):7.2f}")
