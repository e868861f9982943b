"""
Checking the fast measures against brute force
==============================================

Random small transcripts, each measure compared with a grid search over
thresholds and with full subset enumeration.
"""

import numpy as np

from stepcal import ssce, step_ce, step_ce_sub_exact, SubsetSampler
from stepcal.oracle import grid_sup_oracle, random_instance, subset_enumeration_oracle

rng = np.random.default_rng(0)
worst_grid = worst_subset = 0.0
for _ in range(200):
    x, p = random_instance(rng, int(rng.integers(1, 10)))
    worst_grid = max(worst_grid, abs(step_ce(x, p).value - grid_sup_oracle(x, p, "step")))
    worst_subset = max(worst_subset,
                       abs(step_ce_sub_exact(x, p).value - subset_enumeration_oracle(x, p, "step")),
                       abs(ssce(x, p, SubsetSampler(exhaustive=True)).value
                           - subset_enumeration_oracle(x, p, "smce")))

print(f"largest gap to the threshold grid: {worst_grid:.2e}")
print(f"largest gap to subset enumeration: {worst_subset:.2e}")

# the same battery from the command line:
#   stepcal oracle --config <(echo '{"instances": 200}')
