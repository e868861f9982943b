"""
When lying pays
===============

Four natures on which a strategic forecaster beats the truthful one under
some measure. Each row is a mean over seeded replicates.
"""

from stepcal import truthfulness_gap

REPS = 40

# binary search: truthful vcal is linear in T, constant 1/2 is not
# hedging: predicting 2/5 then 3/5 makes vcal exactly zero
# smoothed_hedging: the same trick survives random p*
# epoch: on the step measure, patching beats the truth
runs = [
    ("binary_search", 1000, {}),
    ("hedging", 1000, {}),
    ("smoothed_hedging", 10_000, {"c": 0.1}),
    ("epoch", 15_000, {"c": 2 ** -6}),
]

print(f"{'experiment':>18} {'measure':>8} {'T':>6} {'truthful':>9} {'strategic':>9}")
for name, T, params in runs:
    g = truthfulness_gap(name, T, params, n_reps=REPS, seed=1)
    print(f"{name:>18} {g.truthful.measure:>8} {T:>6} "
          f"{g.truthful.mean:>9.2f} {g.strategic.mean:>9.2f}")
