"""Synthetic battle generation with known ground truth.

The simulator draws outcomes from the same logistic law the estimators
assume, which makes it an oracle: rating recovery, bootstrap coverage, and
style-confounder correction can all be validated against the configured
truth. Response text is synthesized so that re-extracting style features
reproduces the drawn values exactly.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone, timedelta

import numpy as np

from .core import BattleRecord, ImageRef, ModelId, Outcome
from .rating import BTConfig, bt_fit, bt_fit_style
from .style import StyleFeatures, extract_features, feature_difference

LN10 = math.log(10.0)

_FILLER = (
    "photo scene view terrain street skyline coast hillside rooftop market "
    "signage foliage shoreline pavement facade bridge harbor valley plaza alley"
).split()

_PLACEHOLDER_SHA = hashlib.sha256(b"synthetic placeholder image").hexdigest()
PLACEHOLDER_IMAGE_REF = ImageRef(sha256=_PLACEHOLDER_SHA, filename=_PLACEHOLDER_SHA[:16] + ".png")

_SIM_PROMPT = "Identify where this photo was taken and explain the visual evidence."


@dataclass(frozen=True)
class StyleProfile:
    """Mean style-feature levels for one synthetic model, with a shared
    relative dispersion applied to every count."""

    length: float = 120.0
    lists: float = 1.0
    headers: float = 0.5
    emphasis: float = 1.0
    gps_rate: float = 0.3
    dispersion: float = 0.35

    def __post_init__(self) -> None:
        if not 0.0 <= self.gps_rate <= 1.0:
            raise ValueError("gps_rate must be in [0, 1]")
        if self.dispersion < 0:
            raise ValueError("dispersion must be non-negative")


@dataclass(frozen=True)
class SimModel:
    model: ModelId
    true_elo: float
    style: StyleProfile = StyleProfile()


@dataclass(frozen=True)
class SyntheticWorld:
    """Ground truth for a simulated arena: strengths, styles, voter bias."""

    models: tuple[SimModel, ...]
    voter_style_bias: tuple[float, float, float, float, float] = (0.0,) * 5
    tie_probability: float = 0.0
    seed: int = 0
    alpha: float = 400.0

    def __post_init__(self) -> None:
        if len(self.models) < 2:
            raise ValueError("a synthetic world needs at least 2 models")
        if not 0.0 <= self.tie_probability < 1.0:
            raise ValueError("tie_probability must be in [0, 1)")
        ids = [m.model for m in self.models]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate model ids in synthetic world")

    def true_elos(self) -> dict[ModelId, float]:
        return {m.model: m.true_elo for m in self.models}


def min_words(f: StyleFeatures) -> int:
    """Smallest word count the renderer can realize for these markers."""
    return (
        2 * f.headers_count
        + 2 * f.lists_count
        + f.emphasis_count
        + (2 if f.has_gps_output else 0)
    )


def render_response(f: StyleFeatures) -> str:
    """Synthesize text whose extracted features equal ``f`` exactly.

    Requires ``f.response_length >= min_words(f)``; the output is plain
    filler vocabulary, so no feature fires accidentally.
    """
    if f.response_length < min_words(f):
        raise ValueError("response_length below the minimum for these markers")
    lines: list[str] = []
    for k in range(f.headers_count):
        lines.append(f"## {_FILLER[k % len(_FILLER)]}")
    for k in range(f.lists_count):
        lines.append(f"- {_FILLER[(k + 3) % len(_FILLER)]}")
    filler_budget = f.response_length - min_words(f)
    paragraph = [_FILLER[k % len(_FILLER)] for k in range(filler_budget)]
    paragraph += [f"**{_FILLER[(k + 7) % len(_FILLER)]}**" for k in range(f.emphasis_count)]
    if paragraph:
        lines.append(" ".join(paragraph))
    if f.has_gps_output:
        lines.append("(48.8566, 2.3522)")
    return "\n".join(lines)


def _draw_features(profile: StyleProfile, rng: np.random.Generator) -> StyleFeatures:
    def draw_count(mean: float) -> int:
        value = rng.normal(mean, profile.dispersion * max(mean, 1.0))
        return max(0, int(round(value)))

    gps = bool(rng.random() < profile.gps_rate)
    lists = draw_count(profile.lists)
    headers = draw_count(profile.headers)
    emphasis = draw_count(profile.emphasis)
    length = draw_count(profile.length)
    # floor at the markers' word budget, and at 1 word so the response is
    # never empty (battle records require non-empty responses)
    floor = max(1, 2 * headers + 2 * lists + emphasis + (2 if gps else 0))
    return StyleFeatures(
        response_length=max(length, floor),
        lists_count=lists,
        headers_count=headers,
        emphasis_count=emphasis,
        has_gps_output=gps,
    )


def simulate(world: SyntheticWorld, n_battles: int) -> list[BattleRecord]:
    """Draw ``n_battles`` synthetic battles, fully deterministic by seed.

    Pairs are uniform over ordered pairs; the A-win probability follows the
    logistic law on the true rating gap plus the voter's style bias applied
    to the realized response-feature difference.
    """
    if n_battles < 1:
        raise ValueError("n_battles must be positive")
    rng = np.random.default_rng(world.seed)
    beta = np.asarray(world.voter_style_bias, dtype=float)
    base_time = datetime(2025, 6, 1, tzinfo=timezone.utc)
    records: list[BattleRecord] = []
    for i in range(n_battles):
        ia, ib = rng.choice(len(world.models), size=2, replace=False)
        side_a, side_b = world.models[int(ia)], world.models[int(ib)]
        feat_a = _draw_features(side_a.style, rng)
        feat_b = _draw_features(side_b.style, rng)
        x = feature_difference(feat_a, feat_b)
        if rng.random() < world.tie_probability:
            outcome = Outcome.TIE
        else:
            margin = (side_a.true_elo - side_b.true_elo) * LN10 / world.alpha
            margin += float(beta @ x)
            p_win_a = 1.0 / (1.0 + math.exp(-margin))
            outcome = Outcome.WIN_A if rng.random() < p_win_a else Outcome.WIN_B
        records.append(
            BattleRecord(
                battle_id=f"sim-{world.seed}-{i:06d}",
                timestamp=base_time + timedelta(seconds=i),
                model_a=side_a.model,
                model_b=side_b.model,
                prompt=_SIM_PROMPT,
                image_ref=PLACEHOLDER_IMAGE_REF,
                response_a=render_response(feat_a),
                response_b=render_response(feat_b),
                outcome=outcome,
            )
        )
    return records


def _aligned_truth(world: SyntheticWorld, fitted: dict[ModelId, float], config: BTConfig) -> dict[ModelId, float]:
    """Shift true elos onto the fit's normalization (anchor or mean)."""
    truth = world.true_elos()
    anchor = config.anchor_model
    if anchor is not None and anchor in truth:
        shift = truth[anchor] - config.init_rating
    else:
        models = list(fitted)
        shift = sum(truth[m] for m in models) / len(models) - config.init_rating
    return {m: truth[m] - shift for m in truth}


@dataclass
class RecoveryReport:
    """Estimator error relative to the generating truth for one synthetic log."""

    n_battles: int
    true_elo: dict[ModelId, float]
    fitted_elo: dict[ModelId, float]
    rating_errors: dict[ModelId, float]
    max_rating_error: float
    mean_rating_error: float
    true_style_bias: np.ndarray
    style_fitted_elo: dict[ModelId, float] | None = None
    style_rating_errors: dict[ModelId, float] | None = None
    style_mean_rating_error: float | None = None
    fitted_style_bias: np.ndarray | None = None
    style_bias_error: np.ndarray | None = None


def recovery_report(
    world: SyntheticWorld, n_battles: int, bt_config: BTConfig = BTConfig()
) -> RecoveryReport:
    """Simulate, fit, and compare against truth.

    The style-controlled fit runs only when the world actually has voter
    style bias; features are re-extracted from the synthesized responses so
    the full extraction path is exercised.
    """
    battles = simulate(world, n_battles)
    fit = bt_fit(battles, bt_config)
    fitted = {m: r.elo for m, r in fit.ratings.items()}
    truth = _aligned_truth(world, fitted, bt_config)
    errors = {m: abs(fitted[m] - truth[m]) for m in fitted}
    report = RecoveryReport(
        n_battles=n_battles,
        true_elo=truth,
        fitted_elo=fitted,
        rating_errors=errors,
        max_rating_error=max(errors.values()),
        mean_rating_error=sum(errors.values()) / len(errors),
        true_style_bias=np.asarray(world.voter_style_bias, dtype=float),
    )
    if any(b != 0.0 for b in world.voter_style_bias):
        features = np.array(
            [
                feature_difference(
                    extract_features(r.response_a), extract_features(r.response_b)
                )
                for r in battles
            ]
        )
        style_fit = bt_fit_style(battles, features, bt_config)
        style_elo = {m: r.elo for m, r in style_fit.ratings.items()}
        style_errors = {m: abs(style_elo[m] - truth[m]) for m in style_elo}
        report.style_fitted_elo = style_elo
        report.style_rating_errors = style_errors
        report.style_mean_rating_error = sum(style_errors.values()) / len(style_errors)
        report.fitted_style_bias = style_fit.style_coefficients
        report.style_bias_error = np.abs(
            style_fit.style_coefficients - report.true_style_bias
        )
    return report
