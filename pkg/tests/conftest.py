"""Shared fixtures: record factories, tiny images, mock-backed services."""

from __future__ import annotations

import io
import random
from datetime import datetime, timedelta, timezone

import pytest
from PIL import Image

from geoarena.core import BattleRecord, ImageRef, ModelId, Outcome

BASE_TIME = datetime(2025, 6, 1, 12, 0, 0, tzinfo=timezone.utc)
PLACEHOLDER_REF = ImageRef(sha256="0" * 64, filename="placeholder.png")

ALPHA = ModelId.parse("sim/alpha")
BETA = ModelId.parse("sim/beta")
GAMMA = ModelId.parse("sim/gamma")
DELTA = ModelId.parse("sim/delta")


def make_record(
    i: int,
    model_a: ModelId = ALPHA,
    model_b: ModelId = BETA,
    outcome: Outcome = Outcome.WIN_A,
    timestamp: datetime | None = None,
    response_a: str = "somewhere on a coast",
    response_b: str = "an inland market town",
    prompt: str = "where is this?",
    image_ref: ImageRef = PLACEHOLDER_REF,
) -> BattleRecord:
    return BattleRecord(
        battle_id=f"battle-{i:05d}",
        timestamp=timestamp or (BASE_TIME + timedelta(seconds=i)),
        model_a=model_a,
        model_b=model_b,
        prompt=prompt,
        image_ref=image_ref,
        response_a=response_a,
        response_b=response_b,
        outcome=outcome,
    )


def random_battles(
    n: int, models: list[ModelId], seed: int = 0, tie_rate: float = 0.2
) -> list[BattleRecord]:
    rng = random.Random(seed)
    records = []
    for i in range(n):
        a, b = rng.sample(models, 2)
        roll = rng.random()
        if roll < tie_rate:
            outcome = Outcome.TIE
        elif roll < tie_rate + (1 - tie_rate) / 2:
            outcome = Outcome.WIN_A
        else:
            outcome = Outcome.WIN_B
        records.append(make_record(i, a, b, outcome))
    return records


def png_bytes(size: int = 8, color=(30, 60, 90)) -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", (size, size), color).save(buf, format="PNG")
    return buf.getvalue()


def jpeg_with_exif(size: int = 16) -> bytes:
    buf = io.BytesIO()
    exif = Image.Exif()
    exif[0x0110] = "UnitTestCam"  # camera model tag
    exif[0x9003] = "2024:01:01 00:00:00"  # original capture time
    Image.new("RGB", (size, size), (200, 10, 10)).save(buf, format="JPEG", exif=exif)
    return buf.getvalue()


@pytest.fixture
def tiny_png() -> bytes:
    return png_bytes()
