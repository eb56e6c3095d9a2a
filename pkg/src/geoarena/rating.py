"""Ranking mathematics: online Elo, anchored Bradley-Terry fits, bootstrap CIs.

Online Elo is kept for contrast and pedagogy; it is order-sensitive by
construction. The leaderboard itself uses the Bradley-Terry maximum
likelihood fit, which depends only on the multiset of battles. Internally
the fit works in natural-log odds; ratings are reported on the familiar
Elo scale where ``scale`` points (default 400) correspond to a 10x odds
ratio, pinned either to an anchor model or to the roster mean.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import BattleRecord, ModelId, Outcome
from .style import FEATURE_NAMES

LN10 = math.log(10.0)


class FitError(ValueError):
    """The battle data cannot support the requested fit."""


class DegenerateDataWarning(UserWarning):
    """The fit proceeded, but the data is degenerate in some respect."""


@dataclass(frozen=True)
class EloConfig:
    """Knobs for the online Elo pass."""

    alpha: float = 400.0
    k_factor: float = 32.0
    initial_rating: float = 1000.0

    def __post_init__(self) -> None:
        if self.alpha <= 0 or self.k_factor <= 0:
            raise ValueError("alpha and k_factor must be positive")


@dataclass(frozen=True)
class BTConfig:
    """Knobs for the Bradley-Terry fit.

    ``alpha`` is the logistic spread used wherever Elo-scale gaps are turned
    into win probabilities; ``scale`` is the output transform (Elo points per
    decade of odds). Both default to the conventional 400. Ties enter the
    likelihood as two directed half-wins weighted ``tie_weight`` (0 drops
    ties entirely).
    """

    alpha: float = 400.0
    scale: float = 400.0
    init_rating: float = 1000.0
    anchor_model: ModelId | None = None
    tie_weight: float = 0.5
    max_iterations: int = 1000
    tolerance: float = 1e-8
    l2_penalty: float = 0.0

    def __post_init__(self) -> None:
        if self.alpha <= 0 or self.scale <= 0:
            raise ValueError("alpha and scale must be positive")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.tie_weight < 0 or self.l2_penalty < 0:
            raise ValueError("tie_weight and l2_penalty must be non-negative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


@dataclass(frozen=True)
class Rating:
    """A model's Elo-scale strength with optional bootstrap interval."""

    model: ModelId
    elo: float
    ci_lower: float | None = None
    ci_upper: float | None = None

    def __post_init__(self) -> None:
        if (
            self.ci_lower is not None
            and self.ci_upper is not None
            and self.ci_lower > self.ci_upper
        ):
            raise ValueError("ci_lower must not exceed ci_upper")


@dataclass
class BTFitResult:
    ratings: dict[ModelId, Rating]
    style_coefficients: np.ndarray | None
    converged: bool
    iterations: int
    final_gradient_norm: float


def elo_expected(r_i: float, r_j: float, alpha: float = 400.0) -> float:
    """Expected score of the first player: 1 / (1 + 10^((r_j - r_i)/alpha))."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return 1.0 / (1.0 + 10.0 ** ((r_j - r_i) / alpha))


def elo_update(
    r_i: float, r_j: float, s: float, config: EloConfig = EloConfig()
) -> tuple[float, float]:
    """One online update; the pair's rating sum is conserved exactly."""
    expected = elo_expected(r_i, r_j, config.alpha)
    delta = config.k_factor * (s - expected)
    return r_i + delta, r_j - delta


def elo_run(
    battles: Sequence[BattleRecord], config: EloConfig = EloConfig()
) -> dict[ModelId, float]:
    """Single chronological Elo pass; models start at the initial rating.

    The result depends on battle order, which is exactly why the leaderboard
    uses ``bt_fit`` instead.
    """
    ratings: dict[ModelId, float] = {}
    for record in battles:
        a, b = record.model_a, record.model_b
        r_a = ratings.setdefault(a, config.initial_rating)
        r_b = ratings.setdefault(b, config.initial_rating)
        ratings[a], ratings[b] = elo_update(r_a, r_b, record.outcome.score_for_a, config)
    return ratings


# -- Bradley-Terry internals -------------------------------------------------
#
# Every battle becomes one or two directed win events (winner, loser, weight,
# style-difference-from-winner's-side). The log-likelihood over natural-log
# strengths s and style coefficients beta is
#
#     L = sum_e  w_e * log sigmoid(s_win - s_lose + beta . x_e)
#         - l2/2 * ||theta||^2
#
# which is concave, so a damped Newton iteration with backtracking converges
# to the unique maximum (up to per-component translation when l2 = 0).


def _sigmoid(m: np.ndarray) -> np.ndarray:
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    e = np.exp(m[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _log_sigmoid(m: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -m)


class BTProblem:
    """Weighted logistic log-likelihood over directed win events.

    Parameters are ``theta = (s_0..s_{M-1}, beta_0..beta_{F-1})`` with the
    strengths in natural-log-odds units. Exposed so tests can check the
    analytic gradient against finite differences.
    """

    def __init__(
        self,
        n_models: int,
        winners: np.ndarray,
        losers: np.ndarray,
        weights: np.ndarray,
        features: np.ndarray | None = None,
        l2_penalty: float = 0.0,
    ):
        self.n_models = n_models
        self.winners = np.asarray(winners, dtype=np.intp)
        self.losers = np.asarray(losers, dtype=np.intp)
        self.weights = np.asarray(weights, dtype=float)
        if features is None:
            features = np.zeros((len(self.weights), 0))
        self.features = np.asarray(features, dtype=float)
        self.n_features = self.features.shape[1]
        self.l2 = float(l2_penalty)

    @property
    def n_params(self) -> int:
        return self.n_models + self.n_features

    def _margins(self, theta: np.ndarray) -> np.ndarray:
        s = theta[: self.n_models]
        m = s[self.winners] - s[self.losers]
        if self.n_features:
            m = m + self.features @ theta[self.n_models :]
        return m

    def value(self, theta: np.ndarray) -> float:
        ll = float(np.dot(self.weights, _log_sigmoid(self._margins(theta))))
        if self.l2:
            ll -= 0.5 * self.l2 * float(np.dot(theta, theta))
        return ll

    def value_and_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        margins = self._margins(theta)
        ll = float(np.dot(self.weights, _log_sigmoid(margins)))
        residual = self.weights * (1.0 - _sigmoid(margins))
        grad = np.zeros(self.n_params)
        grad[: self.n_models] = np.bincount(
            self.winners, weights=residual, minlength=self.n_models
        ) - np.bincount(self.losers, weights=residual, minlength=self.n_models)
        if self.n_features:
            grad[self.n_models :] = self.features.T @ residual
        if self.l2:
            ll -= 0.5 * self.l2 * float(np.dot(theta, theta))
            grad -= self.l2 * theta
        return ll, grad

    def neg_hessian(self, theta: np.ndarray) -> np.ndarray:
        """Negative Hessian of the log-likelihood (positive semidefinite)."""
        sig = _sigmoid(self._margins(theta))
        curve = self.weights * sig * (1.0 - sig)
        design = np.zeros((len(self.weights), self.n_params))
        rows = np.arange(len(self.weights))
        design[rows, self.winners] += 1.0
        design[rows, self.losers] -= 1.0
        if self.n_features:
            design[:, self.n_models :] = self.features
        h = design.T @ (curve[:, None] * design)
        if self.l2:
            h += self.l2 * np.eye(self.n_params)
        return h


def _connected_components(n_models: int, winners: np.ndarray, losers: np.ndarray) -> list[list[int]]:
    parent = list(range(n_models))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for w, l in zip(winners, losers):
        rw, rl = find(int(w)), find(int(l))
        if rw != rl:
            parent[rw] = rl
    groups: dict[int, list[int]] = {}
    for i in range(n_models):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def _maximize(problem: BTProblem, config: BTConfig) -> tuple[np.ndarray, bool, int, float]:
    """Damped Newton ascent with backtracking on the concave log-likelihood."""
    theta = np.zeros(problem.n_params)
    components = _connected_components(problem.n_models, problem.winners, problem.losers)
    grad_norm = float("inf")
    iterations = 0
    converged = False
    eye = np.eye(problem.n_params)
    for iterations in range(config.max_iterations + 1):
        ll, grad = problem.value_and_grad(theta)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= config.tolerance:
            converged = True
            break
        if iterations == config.max_iterations:
            break
        h = problem.neg_hessian(theta)
        damp = 1e-10 * (1.0 + float(np.trace(h)) / problem.n_params)
        step = np.linalg.solve(h + damp * eye, grad)
        # Backtrack until the likelihood actually improves.
        t = 1.0
        while t >= 1e-12:
            candidate = theta + t * step
            if problem.value(candidate) > ll:
                break
            t *= 0.5
        else:
            break  # no ascent direction left; stop at the best iterate
        theta = theta + t * step
        if not problem.l2:
            # Translation within a component is likelihood-neutral; recenter
            # to keep iterates bounded and make the result deterministic.
            s = theta[: problem.n_models]
            for comp in components:
                s[comp] -= s[comp].mean()
    return theta, converged, iterations, grad_norm


def _battles_to_events(
    battles: Sequence[BattleRecord],
    models: list[ModelId],
    tie_weight: float,
    features: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray | None]:
    """Directed (winner, loser, weight, style-diff) events, one or two per battle."""
    index = {m: i for i, m in enumerate(models)}
    winners: list[int] = []
    losers: list[int] = []
    weights: list[float] = []
    rows: list[np.ndarray] = []
    for k, record in enumerate(battles):
        ia, ib = index[record.model_a], index[record.model_b]
        x = features[k] if features is not None else None
        if record.outcome is Outcome.WIN_A:
            winners.append(ia), losers.append(ib), weights.append(1.0)
            if x is not None:
                rows.append(x)
        elif record.outcome is Outcome.WIN_B:
            winners.append(ib), losers.append(ia), weights.append(1.0)
            if x is not None:
                rows.append(-x)
        else:
            if tie_weight > 0:
                winners.extend([ia, ib])
                losers.extend([ib, ia])
                weights.extend([tie_weight, tie_weight])
                if x is not None:
                    rows.extend([x, -x])
    out_features = np.array(rows) if features is not None else None
    return (
        np.array(winners, dtype=np.intp),
        np.array(losers, dtype=np.intp),
        np.array(weights, dtype=float),
        out_features,
    )


def _aggregate_events(
    n_models: int, winners: np.ndarray, losers: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Collapse events into per-(winner, loser) totals, in deterministic order.

    Weights are integers and halves, so the sums are exact and the collapsed
    problem is bit-identical under any permutation of the battle list.
    """
    totals: dict[tuple[int, int], float] = {}
    for w, l, wt in zip(winners, losers, weights):
        totals[(int(w), int(l))] = totals.get((int(w), int(l)), 0.0) + wt
    keys = sorted(totals)
    return (
        np.array([k[0] for k in keys], dtype=np.intp),
        np.array([k[1] for k in keys], dtype=np.intp),
        np.array([totals[k] for k in keys], dtype=float),
    )


def _fit_models(battles: Sequence[BattleRecord]) -> list[ModelId]:
    models = sorted({m for r in battles for m in r.models()})
    if not battles:
        raise FitError("at least one battle is required")
    return models


def _transform_to_elo(
    s: np.ndarray, models: list[ModelId], config: BTConfig
) -> dict[ModelId, float]:
    """Natural-log strengths -> Elo scale, pinned to the anchor or the mean."""
    elo = config.scale * (s / LN10) + config.init_rating
    anchor = config.anchor_model
    if anchor is not None and anchor in models:
        elo = elo - (elo[models.index(anchor)] - config.init_rating)
        ratings = dict(zip(models, elo.tolist()))
        ratings[anchor] = config.init_rating  # exact, no float residue
        return ratings
    if anchor is not None:
        warnings.warn(
            f"anchor model {anchor} has no battles; falling back to mean anchoring",
            DegenerateDataWarning,
            stacklevel=3,
        )
    elo = elo - (elo.mean() - config.init_rating)
    return dict(zip(models, elo.tolist()))


def bt_problem(
    battles: Sequence[BattleRecord],
    config: BTConfig = BTConfig(),
    features: np.ndarray | None = None,
    aggregate: bool = True,
) -> tuple[BTProblem, list[ModelId]]:
    """Build the optimization problem for a battle list.

    Mostly an implementation detail of ``bt_fit``/``bt_fit_style``, exposed
    so the analytic gradient can be verified independently.
    """
    models = _fit_models(battles)
    winners, losers, weights, rows = _battles_to_events(
        battles, models, config.tie_weight, features
    )
    if features is None and aggregate:
        winners, losers, weights = _aggregate_events(len(models), winners, losers, weights)
    problem = BTProblem(
        len(models), winners, losers, weights, rows, l2_penalty=config.l2_penalty
    )
    return problem, models


def _check_connectivity(problem: BTProblem, models: list[ModelId]) -> None:
    components = _connected_components(problem.n_models, problem.winners, problem.losers)
    if len(components) > 1:
        warnings.warn(
            f"comparison graph has {len(components)} components; "
            "ratings are only identified within each component",
            DegenerateDataWarning,
            stacklevel=3,
        )


def bt_fit(battles: Sequence[BattleRecord], config: BTConfig = BTConfig()) -> BTFitResult:
    """Maximum-likelihood Bradley-Terry ratings on the Elo scale.

    Order-invariant in the battle list. Ties contribute ``tie_weight`` to
    both directed pairs. With an anchor model set, the anchor's rating is
    exactly ``init_rating``; otherwise ratings are mean-centered there.
    """
    problem, models = bt_problem(battles, config)
    _check_connectivity(problem, models)
    theta, converged, iterations, grad_norm = _maximize(problem, config)
    ratings = _transform_to_elo(theta[: len(models)], models, config)
    return BTFitResult(
        ratings={m: Rating(m, elo) for m, elo in ratings.items()},
        style_coefficients=None,
        converged=converged,
        iterations=iterations,
        final_gradient_norm=grad_norm,
    )


def bt_fit_style(
    battles: Sequence[BattleRecord],
    features: Sequence[Sequence[float]] | np.ndarray,
    config: BTConfig = BTConfig(),
) -> BTFitResult:
    """Joint fit of model strengths and style coefficients.

    ``features`` holds one ``feature_difference(a, b)`` vector per battle,
    index-aligned. Reported coefficients are in natural-log-odds units per
    unit of normalized feature difference. A feature column that never
    varies is dropped from the design and reported as 0.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[0] != len(battles):
        raise FitError("features must be one vector per battle")
    n_cols = x.shape[1]
    # Constancy, not fp variance: a column with no variation carries no signal.
    live = (x.max(axis=0) - x.min(axis=0)) > 0.0 if len(battles) else np.zeros(n_cols, bool)
    if not live.all():
        dead = [i for i in range(n_cols) if not live[i]]
        names = [FEATURE_NAMES[i] if i < len(FEATURE_NAMES) else str(i) for i in dead]
        warnings.warn(
            f"style features with zero variance reported as 0: {', '.join(names)}",
            DegenerateDataWarning,
            stacklevel=2,
        )
    # With no informative columns the problem is exactly the plain fit; use
    # the aggregated path so the ratings agree with bt_fit bit for bit.
    live_features = x[:, live] if live.any() else None
    problem, models = bt_problem(battles, config, features=live_features)
    _check_connectivity(problem, models)
    theta, converged, iterations, grad_norm = _maximize(problem, config)
    ratings = _transform_to_elo(theta[: len(models)], models, config)
    beta = np.zeros(n_cols)
    if live.any():
        beta[live] = theta[len(models) :]
    return BTFitResult(
        ratings={m: Rating(m, elo) for m, elo in ratings.items()},
        style_coefficients=beta,
        converged=converged,
        iterations=iterations,
        final_gradient_norm=grad_norm,
    )


class BootstrapIntervals(Mapping):
    """Per-model percentile intervals plus each model's resample count."""

    def __init__(
        self,
        intervals: dict[ModelId, tuple[float, float]],
        appearance_counts: dict[ModelId, int],
    ):
        self.intervals = intervals
        self.appearance_counts = appearance_counts

    def __getitem__(self, model: ModelId) -> tuple[float, float]:
        return self.intervals[model]

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self) -> int:
        return len(self.intervals)


def bootstrap_ci(
    battles: Sequence[BattleRecord],
    config: BTConfig = BTConfig(),
    rounds: int = 100,
    confidence: float = 0.95,
    seed: int = 0,
) -> BootstrapIntervals:
    """Percentile bootstrap over battle resamples, deterministic given seed.

    Each round draws len(battles) battles with replacement and refits. The
    per-round RNG stream is derived from (seed, round) so rounds could run
    in parallel and still reproduce the sequential result. Models missing
    from some resamples get intervals over the rounds where they appear.
    """
    if not battles:
        raise FitError("at least one battle is required")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    if rounds < 1:
        raise ValueError("rounds must be positive")
    n = len(battles)
    samples: dict[ModelId, list[float]] = {}
    for r in range(rounds):
        rng = np.random.default_rng([seed, r])
        idx = rng.integers(0, n, size=n)
        resample = [battles[i] for i in idx]
        result = bt_fit(resample, config)
        for model, rating in result.ratings.items():
            samples.setdefault(model, []).append(rating.elo)
    lo_q, hi_q = (1.0 - confidence) / 2.0, 1.0 - (1.0 - confidence) / 2.0
    intervals: dict[ModelId, tuple[float, float]] = {}
    counts: dict[ModelId, int] = {}
    for model, values in samples.items():
        arr = np.array(values)
        intervals[model] = (float(np.quantile(arr, lo_q)), float(np.quantile(arr, hi_q)))
        counts[model] = len(values)
    short = {m: c for m, c in counts.items() if c < rounds}
    if short:
        summary = ", ".join(f"{m}: {c}/{rounds}" for m, c in sorted(short.items(), key=lambda kv: str(kv[0])))
        warnings.warn(
            f"models absent from some resamples ({summary})",
            DegenerateDataWarning,
            stacklevel=2,
        )
    return BootstrapIntervals(intervals, counts)


def leaderboard(
    battles: Sequence[BattleRecord],
    config: BTConfig = BTConfig(),
    rounds: int = 100,
    seed: int = 0,
    confidence: float = 0.95,
) -> list[Rating]:
    """BT fit plus bootstrap intervals, sorted by rating descending.

    Rank is the 0-based position in the returned list; ties in rating order
    break on the canonical model id.
    """
    models = {m for r in battles for m in r.models()}
    if len(models) < 2:
        raise FitError("leaderboard requires battles between at least 2 models")
    fit = bt_fit(battles, config)
    intervals = bootstrap_ci(battles, config, rounds=rounds, confidence=confidence, seed=seed)
    rows = []
    for model, rating in fit.ratings.items():
        lo, hi = intervals.intervals.get(model, (None, None))
        rows.append(Rating(model, rating.elo, lo, hi))
    rows.sort(key=lambda r: (-r.elo, r.model.canonical))
    return rows


def leaderboard_to_dicts(
    ratings: Sequence[Rating],
    battle_counts: Mapping[ModelId, int] | None = None,
    unrated: Iterable[ModelId] = (),
) -> list[dict]:
    """JSON-ready leaderboard rows; unrated roster models trail with null elo."""
    rows = []
    for rank, rating in enumerate(ratings):
        row = {
            "rank": rank,
            "model": rating.model.canonical,
            "elo": rating.elo,
            "ci_lower": rating.ci_lower,
            "ci_upper": rating.ci_upper,
        }
        if battle_counts is not None:
            row["battles"] = battle_counts.get(rating.model, 0)
        rows.append(row)
    for model in sorted(unrated):
        row = {
            "rank": None,
            "model": model.canonical,
            "elo": None,
            "ci_lower": None,
            "ci_upper": None,
        }
        if battle_counts is not None:
            row["battles"] = battle_counts.get(model, 0)
        rows.append(row)
    return rows


def leaderboard_table(ratings: Sequence[Rating]) -> str:
    """Plain-text leaderboard in rank / model / rating / CI column order."""
    header = ["Ranking", "Model", "ELO Rating", "95% CI lower", "95% CI upper"]
    rows = [header]
    for rank, r in enumerate(ratings):
        rows.append(
            [
                str(rank),
                r.model.canonical,
                f"{r.elo:.1f}",
                "-" if r.ci_lower is None else f"{r.ci_lower:.1f}",
                "-" if r.ci_upper is None else f"{r.ci_upper:.1f}",
            ]
        )
    widths = [max(len(row[c]) for row in rows) for c in range(len(header))]
    lines = []
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip())
    return "\n".join(lines)


def style_coefficients_to_dict(beta: np.ndarray) -> dict[str, float]:
    """Style coefficients keyed by feature name, in the standard order."""
    return {name: float(beta[i]) for i, name in enumerate(FEATURE_NAMES)}
