"""Bootstrap confidence interval coverage experiment.

Builds many independent two-model worlds with a known 200-point gap, fits
each with 100 bootstrap resamples, and counts how often the 95% interval
covers the truth. Percentile intervals at this sample size should land in
the low-to-mid 90s.
"""

from geoarena import BTConfig, ModelId, SimModel, SyntheticWorld, bootstrap_ci, simulate

anchor = ModelId.parse("demo/anchor")
other = ModelId.parse("demo/challenger")
config = BTConfig(anchor_model=anchor)

TRIALS = 60
BATTLES = 400
TRUE_GAP = 200.0

hits = 0
widths = []
for trial in range(TRIALS):
    world = SyntheticWorld(
        models=(SimModel(anchor, 1000.0), SimModel(other, 1000.0 - TRUE_GAP)),
        seed=5000 + trial,
    )
    intervals = bootstrap_ci(simulate(world, BATTLES), config, rounds=100, seed=trial)
    lo, hi = intervals[other]
    widths.append(hi - lo)
    if lo <= 1000.0 - TRUE_GAP <= hi:
        hits += 1
    marker = "x" if lo <= 1000.0 - TRUE_GAP <= hi else " "
    if trial < 10:
        print(f"trial {trial:2d}: [{lo:7.1f}, {hi:7.1f}] covers truth: [{marker}]")

print("...")
print(f"\ncoverage: {hits}/{TRIALS} = {hits / TRIALS:.1%} (nominal 95%)")
print(f"mean interval width: {sum(widths) / len(widths):.1f} rating points")
