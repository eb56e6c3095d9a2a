"""Domain types shared by every module, plus append-only battle-log persistence.

The battle log is the single source of truth for all downstream statistics:
one JSON object per line, UTF-8, never mutated after being written. Uploaded
images live in a content-addressed directory next to the log; records hold
only a hash reference.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import os
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from PIL import Image

logger = logging.getLogger(__name__)

_MODEL_ID_PART = re.compile(r"^[a-z0-9][a-z0-9._-]*$")

MEDIA_TYPES = {"image/jpeg", "image/png", "image/webp"}

_MEDIA_EXT = {"image/jpeg": ".jpg", "image/png": ".png", "image/webp": ".webp"}


class RecordError(ValueError):
    """A record violates an invariant and was rejected."""


class DuplicateBattleError(RecordError):
    """A battle_id was appended twice."""


@dataclass(frozen=True, order=True)
class ModelId:
    """Identity of a benchmarked model, canonically ``provider/name``.

    Both parts are lowercase and non-empty; two ids are equal exactly when
    their canonical strings are byte-equal.
    """

    provider: str
    name: str

    def __post_init__(self) -> None:
        for part in (self.provider, self.name):
            if not _MODEL_ID_PART.match(part):
                raise ValueError(
                    f"model id parts must be lowercase [a-z0-9._-], got {part!r}"
                )

    @classmethod
    def parse(cls, canonical: str) -> "ModelId":
        if canonical.count("/") != 1:
            raise ValueError(f"model id must contain exactly one '/': {canonical!r}")
        provider, name = canonical.split("/")
        return cls(provider, name)

    @property
    def canonical(self) -> str:
        return f"{self.provider}/{self.name}"

    def __str__(self) -> str:
        return self.canonical


class Outcome(Enum):
    """Three-way result of a battle, recorded over (model_a, model_b)."""

    WIN_A = "model_a"
    WIN_B = "model_b"
    TIE = "tie"

    @property
    def score_for_a(self) -> float:
        """Score S for model_a: 1.0 win, 0.5 tie, 0.0 loss."""
        if self is Outcome.WIN_A:
            return 1.0
        if self is Outcome.TIE:
            return 0.5
        return 0.0


@dataclass(frozen=True)
class ImageRef:
    """Content hash plus the filename it is stored under."""

    sha256: str
    filename: str

    def to_dict(self) -> dict:
        return {"sha256": self.sha256, "filename": self.filename}

    @classmethod
    def from_dict(cls, d: dict) -> "ImageRef":
        return cls(sha256=d["sha256"], filename=d["filename"])


def utc_now() -> datetime:
    """Current UTC time truncated to whole seconds."""
    return datetime.now(timezone.utc).replace(microsecond=0)


def format_timestamp(ts: datetime) -> str:
    if ts.tzinfo is None:
        raise ValueError("timestamps must be timezone-aware")
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(raw: str) -> datetime:
    ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


@dataclass(frozen=True)
class BattleRecord:
    """One completed comparison: two models, the stimulus, both responses, the vote."""

    battle_id: str
    timestamp: datetime
    model_a: ModelId
    model_b: ModelId
    prompt: str
    image_ref: ImageRef
    response_a: str
    response_b: str
    outcome: Outcome

    def __post_init__(self) -> None:
        if not self.battle_id:
            raise RecordError("battle_id must be non-empty")
        if self.model_a == self.model_b:
            raise RecordError("model_a and model_b must differ")
        if not self.response_a or not self.response_b:
            raise RecordError("responses must be non-empty")
        if self.timestamp.tzinfo is None:
            raise RecordError("timestamp must be timezone-aware")

    def models(self) -> tuple[ModelId, ModelId]:
        return (self.model_a, self.model_b)

    def to_dict(self) -> dict:
        return {
            "battle_id": self.battle_id,
            "timestamp": format_timestamp(self.timestamp),
            "model_a": self.model_a.canonical,
            "model_b": self.model_b.canonical,
            "winner": self.outcome.value,
            "prompt": self.prompt,
            "image_ref": self.image_ref.to_dict(),
            "response_a": self.response_a,
            "response_b": self.response_b,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BattleRecord":
        return cls(
            battle_id=d["battle_id"],
            timestamp=parse_timestamp(d["timestamp"]),
            model_a=ModelId.parse(d["model_a"]),
            model_b=ModelId.parse(d["model_b"]),
            prompt=d["prompt"],
            image_ref=ImageRef.from_dict(d["image_ref"]),
            response_a=d["response_a"],
            response_b=d["response_b"],
            outcome=Outcome(d["winner"]),
        )


@dataclass(frozen=True)
class RegistryEntry:
    model: ModelId
    display_name: str
    open_source: bool = False
    active: bool = True


@dataclass
class ModelRegistry:
    """The roster of benchmarked models; ids must be unique."""

    entries: list[RegistryEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        ids = [e.model for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("registry contains duplicate model ids")

    def active_models(self) -> list[ModelId]:
        return [e.model for e in self.entries if e.active]

    def get(self, model: ModelId) -> RegistryEntry | None:
        for entry in self.entries:
            if entry.model == model:
                return entry
        return None

    def __contains__(self, model: ModelId) -> bool:
        return self.get(model) is not None

    def __len__(self) -> int:
        return len(self.entries)


class BattleLog:
    """Append-only JSONL battle log with a single serialized writer.

    Concurrent readers see a prefix of the log; appends go through one lock.
    Corrupt lines are skipped on read with a counted warning rather than
    failing the whole scan.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._seen_ids: set[str] | None = None
        self.last_skipped = 0

    def _load_seen_ids(self) -> set[str]:
        if self._seen_ids is None:
            self._seen_ids = {r.battle_id for r in self.read()}
        return self._seen_ids

    def append(self, record: BattleRecord) -> None:
        """Durably append one record; rejects duplicates and bad records."""
        if not isinstance(record, BattleRecord):
            raise RecordError("append expects a BattleRecord")
        with self._lock:
            seen = self._load_seen_ids()
            if record.battle_id in seen:
                raise DuplicateBattleError(
                    f"battle_id already logged: {record.battle_id}"
                )
            line = json.dumps(record.to_dict(), ensure_ascii=False)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            seen.add(record.battle_id)

    def read(
        self,
        since: datetime | None = None,
        until: datetime | None = None,
        models: Iterable[ModelId] | None = None,
    ) -> list[BattleRecord]:
        """Records in append order; filters apply conjunctively.

        A record passes the model filter when either side is in ``models``.
        """
        if not self.path.exists():
            self.last_skipped = 0
            return []
        wanted = set(models) if models is not None else None
        records: list[BattleRecord] = []
        skipped = 0
        with open(self.path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = BattleRecord.from_dict(json.loads(line))
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    skipped += 1
                    logger.warning("skipping corrupt log line %d: %s", lineno, exc)
                    continue
                if since is not None and record.timestamp < since:
                    continue
                if until is not None and record.timestamp > until:
                    continue
                if wanted is not None and not (
                    record.model_a in wanted or record.model_b in wanted
                ):
                    continue
                records.append(record)
        if skipped:
            logger.warning("battle log %s: skipped %d corrupt lines", self.path, skipped)
        self.last_skipped = skipped
        return records

    def __len__(self) -> int:
        return len(self.read())


def append_battle(record: BattleRecord, log: BattleLog) -> None:
    log.append(record)


def read_battles(
    log: BattleLog,
    since: datetime | None = None,
    until: datetime | None = None,
    models: Iterable[ModelId] | None = None,
) -> list[BattleRecord]:
    return log.read(since=since, until=until, models=models)


def strip_image_metadata(data: bytes, media_type: str) -> bytes:
    """Default privacy filter: re-encode the image, dropping EXIF and friends."""
    fmt = {"image/jpeg": "JPEG", "image/png": "PNG", "image/webp": "WEBP"}[media_type]
    img = Image.open(io.BytesIO(data))
    img.load()
    out = io.BytesIO()
    if fmt == "JPEG" and img.mode not in ("RGB", "L"):
        img = img.convert("RGB")
    img.save(out, format=fmt)
    return out.getvalue()


class ImageStore:
    """Content-addressed image directory; files are named by their SHA-256 prefix.

    Bytes pass through a pluggable privacy filter before being hashed and
    stored, so the recorded hash always matches the bytes on disk.
    """

    def __init__(
        self,
        root: str | Path,
        privacy_filter: Callable[[bytes, str], bytes] | None = strip_image_metadata,
    ):
        self.root = Path(root)
        self.privacy_filter = privacy_filter

    def put(self, data: bytes, media_type: str) -> ImageRef:
        if not data:
            raise ValueError("empty image")
        if media_type not in MEDIA_TYPES:
            raise ValueError(f"unsupported media type: {media_type}")
        if self.privacy_filter is not None:
            data = self.privacy_filter(data, media_type)
        digest = hashlib.sha256(data).hexdigest()
        filename = digest[:16] + _MEDIA_EXT[media_type]
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / filename
        if not path.exists():
            tmp = path.with_suffix(path.suffix + ".tmp")
            tmp.write_bytes(data)
            tmp.rename(path)
        return ImageRef(sha256=digest, filename=filename)

    def get(self, ref: ImageRef) -> bytes:
        data = (self.root / ref.filename).read_bytes()
        actual = hashlib.sha256(data).hexdigest()
        if actual != ref.sha256:
            raise ValueError(f"image {ref.filename} does not match its recorded hash")
        return data

    def exists(self, ref: ImageRef) -> bool:
        return (self.root / ref.filename).exists()
