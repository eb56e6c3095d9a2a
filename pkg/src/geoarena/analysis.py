"""Descriptive statistics over a battle log: head-to-head matrices,
judge-agreement accuracy, and image-composition summaries."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import BattleRecord, ModelId, Outcome


@dataclass
class PairwiseMatrix:
    """Win rates (ties excluded) and battle counts for every model pair.

    ``win_rate[i][j]`` is how often row model i beat column model j, or None
    when the pair has no decisive battle. ``battle_count`` includes ties and
    is symmetric. Rows are ordered by average win rate, best first.
    """

    models: list[ModelId]
    win_rate: list[list[float | None]]
    battle_count: list[list[int]]

    def to_dict(self) -> dict:
        return {
            "models": [m.canonical for m in self.models],
            "win_rate": self.win_rate,
            "battle_count": self.battle_count,
        }

    def _csv(self, kind: str) -> str:
        out = io.StringIO()
        writer = csv.writer(out)
        names = [m.canonical for m in self.models]
        writer.writerow([kind] + names)
        source = self.win_rate if kind == "win_rate" else self.battle_count
        for name, row in zip(names, source):
            writer.writerow([name] + ["" if v is None else v for v in row])
        return out.getvalue()

    def win_rate_csv(self) -> str:
        return self._csv("win_rate")

    def battle_count_csv(self) -> str:
        return self._csv("battle_count")


def pairwise_matrix(battles: Sequence[BattleRecord]) -> PairwiseMatrix:
    """Count every ordered pair's wins and battles.

    Ordering ties (equal average win rate) break on the canonical id.
    """
    models = sorted({m for r in battles for m in r.models()})
    index = {m: i for i, m in enumerate(models)}
    n = len(models)
    wins = [[0 for _ in range(n)] for _ in range(n)]
    counts = [[0 for _ in range(n)] for _ in range(n)]
    for record in battles:
        ia, ib = index[record.model_a], index[record.model_b]
        counts[ia][ib] += 1
        counts[ib][ia] += 1
        if record.outcome is Outcome.WIN_A:
            wins[ia][ib] += 1
        elif record.outcome is Outcome.WIN_B:
            wins[ib][ia] += 1

    def rate(i: int, j: int) -> float | None:
        decisive = wins[i][j] + wins[j][i]
        if i == j or decisive == 0:
            return None
        return wins[i][j] / decisive

    def avg_rate(i: int) -> float:
        rates = [rate(i, j) for j in range(n) if j != i]
        defined = [r for r in rates if r is not None]
        return sum(defined) / len(defined) if defined else float("-inf")

    order = sorted(range(n), key=lambda i: (-avg_rate(i), models[i].canonical))
    ordered_models = [models[i] for i in order]
    win_rate = [[rate(i, j) for j in order] for i in order]
    battle_count = [[counts[i][j] for j in order] for i in order]
    return PairwiseMatrix(ordered_models, win_rate, battle_count)


def agreement_accuracy(human: Sequence[Outcome], judge: Sequence[Outcome]) -> float:
    """Fraction of index-aligned positions where the three-way labels match."""
    if len(human) != len(judge):
        raise ValueError("outcome lists must have equal length")
    if not human:
        raise ValueError("outcome lists must be non-empty")
    matches = sum(1 for h, j in zip(human, judge) if h is j)
    return matches / len(human)


def dataset_composition(annotations: Iterable) -> dict[str, float]:
    """Percentage breakdown of the three binary image attributes.

    Accepts any objects with ``indoor``, ``has_text``, ``has_landmark``
    boolean fields. Complementary percentages sum to 100 within rounding.
    """
    items = list(annotations)
    total = len(items)
    if total == 0:
        return {"count": 0}

    def pct(flag: str) -> float:
        return 100.0 * sum(1 for a in items if getattr(a, flag)) / total

    indoor = pct("indoor")
    has_text = pct("has_text")
    has_landmark = pct("has_landmark")
    return {
        "count": total,
        "indoor_pct": indoor,
        "outdoor_pct": 100.0 - indoor,
        "has_text_pct": has_text,
        "no_text_pct": 100.0 - has_text,
        "has_landmark_pct": has_landmark,
        "no_landmark_pct": 100.0 - has_landmark,
    }
