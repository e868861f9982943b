"""
A tour of the calibration measures
==================================

One short transcript, every measure, and the ordering between them.
"""

import numpy as np

from stepcal import (
    SubsetSampler, ece, sign_ce, smce, ssce, step_ce, step_ce_sub,
    step_ce_sub_exact, ucal_bounds, vcal,
)

# too low at 0.8 (six ones in seven), too high at 0.2 (no ones)
x = np.array([1, 0, 1, 1, 0, 1, 0, 1, 1, 0])
p = np.array([0.8, 0.2, 0.8, 0.8, 0.2, 0.8, 0.2, 0.8, 0.8, 0.8])

# exact measures on the full transcript
for name, fn in [("step", step_ce), ("sign", sign_ce), ("vcal", vcal),
                 ("ece", ece), ("smce", smce), ("step_sub_exact", step_ce_sub_exact)]:
    print(f"{name:>15}: {fn(x, p).value:.4f}")

# ucal is only bracketed
u = ucal_bounds(x, p)
print(f"{'ucal':>15}: [{u.lower:.4f}, {u.upper:.4f}]")

# subset-averaged measures by Monte Carlo, with a standard error
sampler = SubsetSampler(m=2000, seed=1)
for name, fn in [("step_sub", step_ce_sub), ("ssce", ssce)]:
    v = fn(x, p, sampler)
    print(f"{name:>15}: {v.value:.4f} +/- {v.stderr:.4f}")

# the step measure sits between a third of sign and ece
s = step_ce(x, p).value
assert sign_ce(x, p).value / 3 <= s <= ece(x, p).value
# a perfect forecaster scores zero everywhere
assert step_ce(x, x.astype(float)).value == 0
