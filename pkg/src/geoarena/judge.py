"""Model-as-judge harness and image attribute annotation.

A judge model is shown a battle's prompt, image, and both responses, and
must answer with a single word naming the better side. Parsing is strict:
prose without a bare label is marked INVALID rather than guessed, since
guessing would bias the agreement accuracy.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .analysis import agreement_accuracy
from .core import BattleRecord, ImageRef, ModelId, Outcome
from .providers import GenerationRequest, ProviderPool, ProviderStatus

# 1x1 white PNG used when a log references an image we no longer have
# (synthetic logs use a placeholder ref on purpose).
FALLBACK_IMAGE = bytes.fromhex(
    "89504e470d0a1a0a0000000d494844520000000100000001080200000090"
    "7753de0000000c4944415408d763f8ffff3f0005fe02fea35981840000000049454e44ae426082"
)


class JudgeError(RuntimeError):
    """Judge or annotator call failed after retries."""


class JudgeLabel(Enum):
    WIN = "win"  # Response A judged better
    LOSS = "loss"
    TIE = "tie"
    INVALID = "invalid"


_LABELS = {"win": JudgeLabel.WIN, "loss": JudgeLabel.LOSS, "tie": JudgeLabel.TIE}

_OUTCOME_TO_LABEL = {
    Outcome.WIN_A: JudgeLabel.WIN,
    Outcome.WIN_B: JudgeLabel.LOSS,
    Outcome.TIE: JudgeLabel.TIE,
}

_LABEL_TO_OUTCOME = {
    JudgeLabel.WIN: Outcome.WIN_A,
    JudgeLabel.LOSS: Outcome.WIN_B,
    JudgeLabel.TIE: Outcome.TIE,
}

JUDGE_PROMPT_TEMPLATE = """You are an expert evaluator of image geolocation answers.
Two models answered the same geolocation request for the attached image.

Request: {prompt}

Response A:
{response_a}

Response B:
{response_b}

Decide which response is better based on:
1. Accuracy of the predicted location
2. Strength of reasoning and evidence
3. Clarity and specificity

Output only one word:
- "win" if Response A is better
- "loss" if Response B is better
- "tie" if both are equally good
"""

ANNOTATION_PROMPT = """Look at the attached image and answer with JSON only, exactly this shape:
{"indoor": true or false, "has_text": true or false, "has_landmark": true or false}

- "indoor": the photo shows an indoor setting
- "has_text": the photo contains prominent, recognizable text
- "has_landmark": the photo features a landmark such as a historical site or natural icon
"""


@dataclass(frozen=True)
class JudgeVerdict:
    battle_id: str
    label: JudgeLabel
    raw_text: str

    def to_dict(self, judge_model: ModelId | None = None) -> dict:
        row = {
            "battle_id": self.battle_id,
            "label": self.label.value,
            "raw_text": self.raw_text,
        }
        if judge_model is not None:
            row["judge_model"] = judge_model.canonical
        return row


@dataclass(frozen=True)
class ImageAnnotation:
    image_ref: ImageRef
    indoor: bool
    has_text: bool
    has_landmark: bool


def parse_verdict_label(text: str) -> JudgeLabel:
    """Bare-token parse: the whole output or its first line, trimmed of
    punctuation and case; anything else is INVALID."""
    candidates = [text]
    for line in text.splitlines():
        if line.strip():
            candidates.append(line)
            break
    for candidate in candidates:
        token = candidate.strip().strip(".,!?:;\"'`*_()[]").lower()
        if token in _LABELS:
            return _LABELS[token]
    return JudgeLabel.INVALID


def render_judge_prompt(record: BattleRecord) -> str:
    return JUDGE_PROMPT_TEMPLATE.format(
        prompt=record.prompt,
        response_a=record.response_a,
        response_b=record.response_b,
    )


def _image_bytes(record_ref: ImageRef, image_store) -> tuple[bytes, str]:
    if image_store is not None and image_store.exists(record_ref):
        data = image_store.get(record_ref)
        ext = record_ref.filename.rsplit(".", 1)[-1]
        media = {"jpg": "image/jpeg", "png": "image/png", "webp": "image/webp"}.get(
            ext, "image/png"
        )
        return data, media
    return FALLBACK_IMAGE, "image/png"


def judge_pair(
    record: BattleRecord,
    judge_model: ModelId,
    pool: ProviderPool,
    image_store=None,
) -> JudgeVerdict:
    """One judged comparison; the judge sees the image itself."""
    image, media = _image_bytes(record.image_ref, image_store)
    result = pool.generate(
        GenerationRequest(
            model=judge_model,
            prompt=render_judge_prompt(record),
            image=image,
            media_type=media,
        )
    )
    if result.provider_status is not ProviderStatus.OK:
        raise JudgeError(f"judge call failed: {result.provider_status.value}")
    return JudgeVerdict(
        battle_id=record.battle_id,
        label=parse_verdict_label(result.response_text),
        raw_text=result.response_text,
    )


@dataclass
class AlignmentReport:
    """Agreement between judge verdicts and the human votes on a sample."""

    judge_model: ModelId | None
    sample_size: int
    valid_count: int
    invalid_count: int
    accuracy: float | None  # over valid verdicts only
    confusion: dict[str, dict[str, int]]
    verdicts: list[JudgeVerdict]

    def to_dict(self) -> dict:
        return {
            "judge_model": self.judge_model.canonical if self.judge_model else None,
            "sample_size": self.sample_size,
            "valid_count": self.valid_count,
            "invalid_count": self.invalid_count,
            "accuracy": self.accuracy,
            "confusion": self.confusion,
        }


def sample_indices(n_records: int, sample_size: int, seed: int) -> list[int]:
    """Deterministic sample without replacement; same inputs, same indices."""
    rng = np.random.default_rng(seed)
    return sorted(int(i) for i in rng.choice(n_records, size=sample_size, replace=False))


def alignment_study(
    battles: Sequence[BattleRecord],
    judge_model: ModelId | None = None,
    pool: ProviderPool | None = None,
    sample_size: int = 100,
    seed: int = 0,
    judge_fn: Callable[[BattleRecord], JudgeVerdict] | None = None,
    image_store=None,
) -> AlignmentReport:
    """Judge a deterministic sample and score agreement with the human votes.

    Accuracy counts exact three-way matches and is computed over valid
    verdicts only; invalid verdicts are reported separately. A custom
    ``judge_fn`` replaces the provider-backed judge (used by scripted mocks).
    """
    if sample_size < 1:
        raise ValueError("sample_size must be positive")
    if len(battles) < sample_size:
        raise ValueError(
            f"need at least {sample_size} battles, have {len(battles)}"
        )
    if judge_fn is None:
        if judge_model is None or pool is None:
            raise ValueError("either judge_fn or (judge_model, pool) is required")
        judge_fn = lambda record: judge_pair(record, judge_model, pool, image_store)
    sample = [battles[i] for i in sample_indices(len(battles), sample_size, seed)]
    verdicts = [judge_fn(record) for record in sample]

    labels = [l.value for l in (JudgeLabel.WIN, JudgeLabel.LOSS, JudgeLabel.TIE)]
    confusion: dict[str, dict[str, int]] = {
        h: {j: 0 for j in labels + [JudgeLabel.INVALID.value]} for h in labels
    }
    human_valid: list[Outcome] = []
    judge_valid: list[Outcome] = []
    for record, verdict in zip(sample, verdicts):
        human_label = _OUTCOME_TO_LABEL[record.outcome]
        confusion[human_label.value][verdict.label.value] += 1
        if verdict.label is not JudgeLabel.INVALID:
            human_valid.append(record.outcome)
            judge_valid.append(_LABEL_TO_OUTCOME[verdict.label])
    valid = len(human_valid)
    return AlignmentReport(
        judge_model=judge_model,
        sample_size=sample_size,
        valid_count=valid,
        invalid_count=sample_size - valid,
        accuracy=agreement_accuracy(human_valid, judge_valid) if valid else None,
        confusion=confusion,
        verdicts=verdicts,
    )


def _parse_annotation_json(text: str) -> dict | None:
    payload = text.strip()
    fence = re.search(r"```(?:json)?\s*(.*?)```", payload, re.DOTALL)
    if fence:
        payload = fence.group(1).strip()
    try:
        data = json.loads(payload)
    except json.JSONDecodeError:
        return None
    if not isinstance(data, dict):
        return None
    required = {"indoor", "has_text", "has_landmark"}
    if set(data) < required:
        return None
    if not all(isinstance(data[k], bool) for k in required):
        return None
    return {k: data[k] for k in required}


def annotate_image(
    image_ref: ImageRef,
    annotator_model: ModelId,
    pool: ProviderPool,
    image_store,
    retries: int = 1,
) -> ImageAnnotation:
    """One structured annotation query; malformed output is retried once."""
    image, media = _image_bytes(image_ref, image_store)
    last_error = "no attempt made"
    for _ in range(retries + 1):
        result = pool.generate(
            GenerationRequest(
                model=annotator_model,
                prompt=ANNOTATION_PROMPT,
                image=image,
                media_type=media,
            )
        )
        if result.provider_status is not ProviderStatus.OK:
            last_error = f"provider status {result.provider_status.value}"
            continue
        parsed = _parse_annotation_json(result.response_text)
        if parsed is None:
            last_error = f"malformed annotation output: {result.response_text[:120]!r}"
            continue
        return ImageAnnotation(image_ref=image_ref, **parsed)
    raise JudgeError(f"annotation rejected: {last_error}")
