"""Model-as-judge alignment study on a synthetic log.

Uses two scripted judges over the same 100-battle sample: one that echoes
the human vote (perfect agreement) and one that always answers "tie"
(agreement equal to the human tie rate). The confusion matrix shows where
a judge's three-way labels land against the human ground truth.
"""

from geoarena import ModelId, Outcome, SimModel, SyntheticWorld, simulate
from geoarena.judge import JudgeLabel, JudgeVerdict, alignment_study

world = SyntheticWorld(
    models=(
        SimModel(ModelId.parse("demo/a"), 1080.0),
        SimModel(ModelId.parse("demo/b"), 920.0),
    ),
    tie_probability=0.25,
    seed=3,
)
battles = simulate(world, 400)

ECHO = {
    Outcome.WIN_A: JudgeLabel.WIN,
    Outcome.WIN_B: JudgeLabel.LOSS,
    Outcome.TIE: JudgeLabel.TIE,
}


def echo_judge(record):
    return JudgeVerdict(record.battle_id, ECHO[record.outcome], "echo")


def tie_judge(record):
    return JudgeVerdict(record.battle_id, JudgeLabel.TIE, "tie")


for name, judge_fn in [("echo judge", echo_judge), ("constant-tie judge", tie_judge)]:
    report = alignment_study(battles, sample_size=100, seed=0, judge_fn=judge_fn)
    print(f"{name}: accuracy {report.accuracy:.2f} "
          f"({report.valid_count} valid, {report.invalid_count} invalid)")
    print("  confusion (rows = human label, columns = judge label):")
    header = "        " + "".join(f"{c:>9}" for c in ["win", "loss", "tie", "invalid"])
    print(header)
    for human_label, row in report.confusion.items():
        cells = "".join(f"{row[c]:>9}" for c in ["win", "loss", "tie", "invalid"])
        print(f"  {human_label:>5} {cells}")
    print()
