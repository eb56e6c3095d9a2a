"""Live battle orchestration: submit image, sample two anonymous models,
collect one vote, reveal identities, persist the record.

Model identities never appear in any payload while a session is awaiting
its vote; the client only ever sees opaque left/right sides until the vote
is recorded. The battle log is the single source of truth — the leaderboard
is always recomputable by replay.
"""

from __future__ import annotations

import logging
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from random import Random

from fastapi import FastAPI, File, Form, HTTPException, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import rating
from .analysis import pairwise_matrix
from .config import ArenaConfig
from .core import (
    BattleLog,
    BattleRecord,
    ImageRef,
    ImageStore,
    MEDIA_TYPES,
    ModelId,
    ModelRegistry,
    Outcome,
    utc_now,
)
from .providers import (
    GenerationRequest,
    GenerationResult,
    ProviderPool,
    ProviderStatus,
    default_prompt,
)

logger = logging.getLogger(__name__)


class SessionState(Enum):
    AWAITING_VOTE = "awaiting_vote"
    COMPLETED = "completed"
    EXPIRED = "expired"


class ArenaError(Exception):
    pass


class SessionNotFound(ArenaError):
    pass


class SessionExpired(ArenaError):
    pass


class VoteConflict(ArenaError):
    def __init__(self, reveal: dict):
        super().__init__("vote already recorded")
        self.reveal = reveal


class BattleAborted(ArenaError):
    """A provider failed after retries; nothing was logged. Retriable."""


class RateLimited(ArenaError):
    pass


class ImageRejected(ArenaError):
    pass


@dataclass
class BattleSession:
    """Server-side state of one in-flight battle. Identities stay here."""

    battle_id: str
    created_at: datetime
    model_a: ModelId
    model_b: ModelId
    prompt: str
    image_ref: ImageRef
    response_a: str
    response_b: str
    left_is_a: bool
    expiry: datetime
    state: SessionState = SessionState.AWAITING_VOTE
    recorded_outcome: Outcome | None = None


class TokenBucket:
    """Per-client battle quota: ``limit`` tokens refilled over an hour."""

    def __init__(self, limit: int, clock=time.monotonic):
        self.limit = limit
        self.clock = clock
        self._buckets: dict[str, tuple[float, float]] = {}
        self._lock = threading.Lock()

    def allow(self, client_id: str) -> bool:
        if self.limit <= 0:
            return True
        now = self.clock()
        with self._lock:
            tokens, last = self._buckets.get(client_id, (float(self.limit), now))
            tokens = min(float(self.limit), tokens + (now - last) * self.limit / 3600.0)
            if tokens < 1.0:
                self._buckets[client_id] = (tokens, now)
                return False
            self._buckets[client_id] = (tokens - 1.0, now)
            return True


class ArenaService:
    """Battle lifecycle plus cached leaderboard reads over one battle log."""

    def __init__(
        self,
        config: ArenaConfig,
        pool: ProviderPool,
        log: BattleLog,
        image_store: ImageStore,
    ):
        self.config = config
        self.registry: ModelRegistry = config.registry
        self.pool = pool
        self.log = log
        self.image_store = image_store
        self._rng = Random(config.service.sampling_seed)
        self._sessions: dict[str, BattleSession] = {}
        self._session_lock = threading.Lock()
        self._rate_limiter = TokenBucket(config.service.rate_limit_battles_per_hour)
        self._lb_lock = threading.Lock()
        self._lb_cache: dict | None = None
        self._lb_computed_at: float = 0.0

    # -- battle lifecycle ----------------------------------------------------

    def sample_pair(self) -> tuple[ModelId, ModelId]:
        """Two distinct models, uniform over unordered pairs, random order."""
        active = self.registry.active_models()
        if len(active) < 2:
            raise ArenaError("need at least 2 active models to run battles")
        pair = self._rng.sample(active, 2)
        return pair[0], pair[1]

    def create_battle(
        self,
        image: bytes,
        media_type: str,
        prompt: str | None = None,
        client_id: str | None = None,
    ) -> dict:
        """Run one anonymous battle up to the voting stage.

        Nothing is appended to the log here; the record is written only when
        a vote arrives. The returned view carries no model identities.
        """
        if client_id is not None and not self._rate_limiter.allow(client_id):
            raise RateLimited("battle quota exceeded, try again later")
        if not image:
            raise ImageRejected("empty image upload")
        if len(image) > self.config.service.max_image_bytes:
            raise ImageRejected(
                f"image exceeds {self.config.service.max_image_bytes} bytes"
            )
        if media_type not in MEDIA_TYPES:
            raise ImageRejected(f"unsupported media type {media_type!r}")
        model_a, model_b = self.sample_pair()
        effective_prompt = (
            prompt if prompt else default_prompt(self.config.providers.default_prompt)
        )

        def ask(model: ModelId) -> GenerationResult:
            return self.pool.generate(
                GenerationRequest(
                    model=model,
                    prompt=effective_prompt,
                    image=image,
                    media_type=media_type,
                )
            )

        with ThreadPoolExecutor(max_workers=2) as executor:
            future_a = executor.submit(ask, model_a)
            future_b = executor.submit(ask, model_b)
            result_a, result_b = future_a.result(), future_b.result()
        for result in (result_a, result_b):
            if result.provider_status is not ProviderStatus.OK:
                raise BattleAborted(
                    f"provider failure ({result.provider_status.value}); please retry"
                )
        image_ref = self.image_store.put(image, media_type)
        now = utc_now()
        session = BattleSession(
            battle_id=uuid.uuid4().hex,
            created_at=now,
            model_a=model_a,
            model_b=model_b,
            prompt=effective_prompt,
            image_ref=image_ref,
            response_a=result_a.response_text,
            response_b=result_b.response_text,
            left_is_a=self._rng.random() < 0.5,
            expiry=now + timedelta(minutes=self.config.service.session_expiry_minutes),
        )
        with self._session_lock:
            self._sessions[session.battle_id] = session
        return {
            "battle_id": session.battle_id,
            "response_left": session.response_a if session.left_is_a else session.response_b,
            "response_right": session.response_b if session.left_is_a else session.response_a,
        }

    def _reveal(self, session: BattleSession, outcome: Outcome) -> dict:
        model_left = session.model_a if session.left_is_a else session.model_b
        model_right = session.model_b if session.left_is_a else session.model_a
        return {
            "model_left": model_left.canonical,
            "model_right": model_right.canonical,
            "outcome": outcome.value,
        }

    def submit_vote(self, battle_id: str, choice: str) -> dict:
        """Record the vote, append exactly one record, reveal identities."""
        if choice not in ("left", "right", "tie"):
            raise ValueError(f"choice must be left, right or tie, got {choice!r}")
        with self._session_lock:
            session = self._sessions.get(battle_id)
            if session is None:
                raise SessionNotFound(battle_id)
            if session.state is SessionState.COMPLETED:
                raise VoteConflict(self._reveal(session, session.recorded_outcome))
            if session.state is SessionState.EXPIRED or utc_now() >= session.expiry:
                session.state = SessionState.EXPIRED
                raise SessionExpired(battle_id)
            if choice == "tie":
                outcome = Outcome.TIE
            elif (choice == "left") == session.left_is_a:
                outcome = Outcome.WIN_A
            else:
                outcome = Outcome.WIN_B
            record = BattleRecord(
                battle_id=session.battle_id,
                timestamp=utc_now(),
                model_a=session.model_a,
                model_b=session.model_b,
                prompt=session.prompt,
                image_ref=session.image_ref,
                response_a=session.response_a,
                response_b=session.response_b,
                outcome=outcome,
            )
            self.log.append(record)
            session.state = SessionState.COMPLETED
            session.recorded_outcome = outcome
            return self._reveal(session, outcome)

    def sweep_expired(self) -> int:
        """Mark and drop sessions past their expiry; returns how many."""
        now = utc_now()
        dropped = 0
        with self._session_lock:
            for battle_id in list(self._sessions):
                session = self._sessions[battle_id]
                if session.state is SessionState.AWAITING_VOTE and now >= session.expiry:
                    session.state = SessionState.EXPIRED
                if session.state in (SessionState.EXPIRED, SessionState.COMPLETED):
                    del self._sessions[battle_id]
                    dropped += 1
        return dropped

    def start_sweeper(self, interval_seconds: float = 60.0) -> threading.Event:
        """Sweep expired sessions on a daemon thread; set the event to stop."""
        stop = threading.Event()

        def loop():
            while not stop.wait(interval_seconds):
                try:
                    self.sweep_expired()
                except Exception:
                    logger.exception("session sweep failed")

        threading.Thread(target=loop, name="session-sweeper", daemon=True).start()
        return stop

    # -- read side -----------------------------------------------------------

    def _battle_counts(self, battles) -> dict[ModelId, int]:
        counts: dict[ModelId, int] = {}
        for record in battles:
            for model in record.models():
                counts[model] = counts.get(model, 0) + 1
        return counts

    def _compute_leaderboard(self) -> dict:
        battles = self.log.read()
        active = set(self.registry.active_models())
        if not battles or len({m for r in battles for m in r.models()}) < 2:
            return {
                "status": "insufficient data",
                "battle_count": len(battles),
                "leaderboard": rating.leaderboard_to_dicts(
                    [], self._battle_counts(battles), unrated=sorted(active)
                ),
            }
        ratings = rating.leaderboard(
            battles,
            self.config.bt,
            rounds=self.config.service.bootstrap_rounds,
            seed=self.config.service.bootstrap_seed,
        )
        rated = {r.model for r in ratings}
        return {
            "status": "ok",
            "battle_count": len(battles),
            "leaderboard": rating.leaderboard_to_dicts(
                ratings,
                self._battle_counts(battles),
                unrated=sorted(active - rated),
            ),
        }

    def get_leaderboard(self, force: bool = False) -> dict:
        """Cached snapshot; recomputed at most once per refresh interval."""
        with self._lb_lock:
            age = time.monotonic() - self._lb_computed_at
            if (
                force
                or self._lb_cache is None
                or age >= self.config.service.leaderboard_refresh_seconds
            ):
                self._lb_cache = self._compute_leaderboard()
                self._lb_computed_at = time.monotonic()
            return self._lb_cache

    def pairwise_stats(self) -> dict:
        return pairwise_matrix(self.log.read()).to_dict()

    def models_view(self) -> list[dict]:
        return [
            {
                "model": e.model.canonical,
                "display_name": e.display_name,
                "open_source": e.open_source,
            }
            for e in self.registry.entries
            if e.active
        ]


class VoteBody(BaseModel):
    choice: str


def create_app(service: ArenaService) -> FastAPI:
    """FastAPI wiring over an ArenaService."""
    app = FastAPI(title="geoarena", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.post("/api/battles", status_code=201)
    async def create_battle(
        request: Request,
        image: UploadFile = File(...),
        prompt: str | None = Form(None),
    ):
        data = await image.read()
        client_id = request.client.host if request.client else None
        try:
            return service.create_battle(
                data,
                image.content_type or "application/octet-stream",
                prompt=prompt,
                client_id=client_id,
            )
        except RateLimited as exc:
            raise HTTPException(429, str(exc))
        except ImageRejected as exc:
            status = 413 if "exceeds" in str(exc) else 400
            raise HTTPException(status, str(exc))
        except BattleAborted as exc:
            raise HTTPException(503, str(exc))

    @app.post("/api/battles/{battle_id}/vote")
    def vote(battle_id: str, body: VoteBody):
        try:
            return service.submit_vote(battle_id, body.choice)
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        except SessionNotFound:
            raise HTTPException(404, "unknown battle")
        except VoteConflict as exc:
            raise HTTPException(409, detail={"message": "already voted", "reveal": exc.reveal})
        except SessionExpired:
            raise HTTPException(410, "battle session expired")

    @app.get("/api/leaderboard")
    def leaderboard():
        snapshot = service.get_leaderboard()
        return snapshot["leaderboard"] if snapshot["status"] == "ok" else snapshot

    @app.get("/api/stats/pairwise")
    def pairwise():
        return service.pairwise_stats()

    @app.get("/api/models")
    def models():
        return service.models_view()

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    return app
