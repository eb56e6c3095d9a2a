"""Offline leaderboard walkthrough.

Simulates an arena with three models of known strength, fits the
Bradley-Terry model, bootstraps confidence intervals, and prints the
leaderboard table. Run it straight: `python demos/01_offline_leaderboard.py`
"""

from geoarena import BTConfig, ModelId, SimModel, SyntheticWorld, leaderboard, simulate
from geoarena.rating import leaderboard_table

# Three synthetic models with true strengths 1150 / 1000 / 870. The middle
# model is the anchor, so its fitted rating is pinned to exactly 1000.
anchor = ModelId.parse("demo/steady")
world = SyntheticWorld(
    models=(
        SimModel(ModelId.parse("demo/sharp"), 1150.0),
        SimModel(anchor, 1000.0),
        SimModel(ModelId.parse("demo/hazy"), 870.0),
    ),
    tie_probability=0.1,
    seed=7,
)

battles = simulate(world, 4000)
print(f"simulated {len(battles)} battles between {len(world.models)} models\n")

config = BTConfig(anchor_model=anchor)
rows = leaderboard(battles, config, rounds=100, seed=0)

print(leaderboard_table(rows))
print()
for row in rows:
    truth = dict(world.true_elos())[row.model]
    print(f"{row.model}: fitted {row.elo:7.1f}  true {truth:7.1f}  "
          f"CI [{row.ci_lower:.1f}, {row.ci_upper:.1f}]")
