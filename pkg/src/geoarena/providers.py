"""Uniform client layer over vision-language model APIs.

One generic JSON-over-HTTP adapter covers the OpenAI-compatible provider
families; a deterministic mock provider supports offline tests and the
simulator. Provider failures surface as result statuses, never exceptions.
"""

from __future__ import annotations

import base64
import hashlib
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping

import httpx

from .core import MEDIA_TYPES, ModelId, ModelRegistry

logger = logging.getLogger(__name__)

DEFAULT_PROMPT = (
    "Where was this photo taken? Identify the location as precisely as you "
    "can (country, region, city, and landmark or coordinates if possible) "
    "and explain the visual clues that support your answer."
)

MAX_RETRIES = 2
BACKOFF_SECONDS = 0.5


class ProviderStatus(Enum):
    OK = "ok"
    TIMEOUT = "timeout"
    RATE_LIMITED = "rate_limited"
    PROVIDER_ERROR = "provider_error"


@dataclass(frozen=True)
class GenerationRequest:
    model: ModelId
    prompt: str
    image: bytes
    media_type: str
    timeout: float = 60.0
    max_output_tokens: int | None = None

    def __post_init__(self) -> None:
        if not self.image:
            raise ValueError("image must be non-empty")
        if self.media_type not in MEDIA_TYPES:
            raise ValueError(f"unsupported media type: {self.media_type}")


@dataclass(frozen=True)
class GenerationResult:
    model: ModelId
    response_text: str
    latency: float
    provider_status: ProviderStatus

    def __post_init__(self) -> None:
        ok = self.provider_status is ProviderStatus.OK
        if ok != bool(self.response_text):
            raise ValueError("response_text must be non-empty exactly when status is OK")


def default_prompt(override: str | None = None) -> str:
    """The default geolocation instruction; configuration wins when present."""
    return override if override else DEFAULT_PROMPT


_MOCK_CITIES = [
    ("Lisbon, Portugal", 38.7223, -9.1393),
    ("Kyoto, Japan", 35.0116, 135.7681),
    ("Cusco, Peru", -13.5320, -71.9675),
    ("Marrakesh, Morocco", 31.6295, -7.9811),
    ("Reykjavik, Iceland", 64.1466, -21.9426),
    ("Hobart, Australia", -42.8821, 147.3272),
    ("Tbilisi, Georgia", 41.7151, 44.8271),
    ("Valparaiso, Chile", -33.0472, -71.6127),
    ("Luang Prabang, Laos", 19.8563, 102.1347),
    ("Bergen, Norway", 60.3913, 5.3221),
]

_MOCK_CLUES = [
    "the roof tiles and narrow stairways",
    "the coastal light and harbor cranes",
    "the street signage typography",
    "the vegetation along the roadside",
    "the architectural style of the facades",
    "the mountain profile on the horizon",
    "the paving stones and curb markings",
    "the vehicle plates and road markings",
]


class MockProvider:
    """Deterministic offline provider.

    The response is a pure function of (model, prompt, image hash), so
    repeated identical requests are bit-identical and no two models collide
    on the same input. The text never mentions the model's identity.
    """

    def generate(self, request: GenerationRequest) -> GenerationResult:
        digest = hashlib.sha256(
            request.model.canonical.encode()
            + b"\x00"
            + request.prompt.encode()
            + b"\x00"
            + hashlib.sha256(request.image).digest()
        ).digest()
        rng = random.Random(int.from_bytes(digest[:8], "big"))
        city, lat, lon = _MOCK_CITIES[rng.randrange(len(_MOCK_CITIES))]
        clue_a, clue_b = rng.sample(_MOCK_CLUES, 2)
        parts = []
        if rng.random() < 0.4:
            parts.append(f"## Location estimate")
        parts.append(f"This photo was most likely taken in **{city}**.")
        if rng.random() < 0.5:
            parts.append(f"- Key clue: {clue_a}\n- Supporting clue: {clue_b}")
        else:
            parts.append(f"The main evidence is {clue_a}, together with {clue_b}.")
        if rng.random() < 0.5:
            jitter = rng.uniform(-0.01, 0.01)
            parts.append(f"Approximate coordinates: ({lat + jitter:.4f}, {lon:.4f})")
        return GenerationResult(
            model=request.model,
            response_text="\n".join(parts),
            latency=0.0,
            provider_status=ProviderStatus.OK,
        )


@dataclass
class ProviderEndpoint:
    """How to reach one provider family: base URL plus model-name mapping."""

    base_url: str
    model_map: dict[str, str] = field(default_factory=dict)
    api_key_env: str | None = None


class HttpProvider:
    """OpenAI-style chat-completions adapter used for every remote family.

    Credentials come from ``GEOARENA_<PROVIDER>_API_KEY`` unless the
    endpoint overrides the variable name.
    """

    def __init__(self, provider: str, endpoint: ProviderEndpoint, client: httpx.Client | None = None):
        self.provider = provider
        self.endpoint = endpoint
        self._client = client or httpx.Client()

    def _api_key(self) -> str | None:
        env = self.endpoint.api_key_env or f"GEOARENA_{self.provider.upper()}_API_KEY"
        return os.environ.get(env)

    def generate(self, request: GenerationRequest) -> GenerationResult:
        start = time.monotonic()
        image_url = (
            f"data:{request.media_type};base64,"
            + base64.b64encode(request.image).decode()
        )
        payload: dict = {
            "model": self.endpoint.model_map.get(request.model.name, request.model.name),
            "messages": [
                {
                    "role": "user",
                    "content": [
                        {"type": "text", "text": request.prompt},
                        {"type": "image_url", "image_url": {"url": image_url}},
                    ],
                }
            ],
        }
        if request.max_output_tokens is not None:
            payload["max_tokens"] = request.max_output_tokens
        headers = {}
        key = self._api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            response = self._client.post(
                self.endpoint.base_url.rstrip("/") + "/chat/completions",
                json=payload,
                headers=headers,
                timeout=request.timeout,
            )
        except httpx.TimeoutException:
            return _failure(request.model, ProviderStatus.TIMEOUT, start)
        except httpx.HTTPError as exc:
            logger.warning("%s request failed: %s", self.provider, exc)
            return _failure(request.model, ProviderStatus.PROVIDER_ERROR, start)
        if response.status_code == 429:
            return _failure(request.model, ProviderStatus.RATE_LIMITED, start)
        if response.status_code >= 400:
            logger.warning(
                "%s returned HTTP %d: %s", self.provider, response.status_code, response.text[:200]
            )
            return _failure(request.model, ProviderStatus.PROVIDER_ERROR, start)
        try:
            text = response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError):
            return _failure(request.model, ProviderStatus.PROVIDER_ERROR, start)
        if not text:
            return _failure(request.model, ProviderStatus.PROVIDER_ERROR, start)
        return GenerationResult(
            model=request.model,
            response_text=text,
            latency=time.monotonic() - start,
            provider_status=ProviderStatus.OK,
        )


def _failure(model: ModelId, status: ProviderStatus, start: float) -> GenerationResult:
    return GenerationResult(
        model=model,
        response_text="",
        latency=time.monotonic() - start,
        provider_status=status,
    )


_RETRIABLE = {ProviderStatus.TIMEOUT, ProviderStatus.RATE_LIMITED, ProviderStatus.PROVIDER_ERROR}


class ProviderPool:
    """Registry-aware dispatch with retries and per-provider concurrency caps."""

    def __init__(
        self,
        registry: ModelRegistry,
        clients: Mapping[str, object] | None = None,
        default_client: object | None = None,
        max_concurrency: int = 4,
        max_retries: int = MAX_RETRIES,
        backoff_seconds: float = BACKOFF_SECONDS,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.registry = registry
        self.clients = dict(clients or {})
        self.default_client = default_client
        self.max_retries = max_retries
        self.backoff_seconds = backoff_seconds
        self._sleep = sleep
        self._semaphores: dict[str, threading.Semaphore] = {}
        self._max_concurrency = max_concurrency
        self._lock = threading.Lock()

    @classmethod
    def mock(cls, registry: ModelRegistry) -> "ProviderPool":
        return cls(registry, default_client=MockProvider(), backoff_seconds=0.0)

    def _client_for(self, provider: str):
        client = self.clients.get(provider, self.default_client)
        if client is None:
            raise ValueError(f"no client configured for provider {provider!r}")
        return client

    def _semaphore(self, provider: str) -> threading.Semaphore:
        with self._lock:
            if provider not in self._semaphores:
                self._semaphores[provider] = threading.Semaphore(self._max_concurrency)
            return self._semaphores[provider]

    def generate(self, request: GenerationRequest) -> GenerationResult:
        """Dispatch with up to ``max_retries`` retries on transient failures."""
        entry = self.registry.get(request.model)
        if entry is None:
            raise ValueError(f"model not registered: {request.model}")
        if not entry.active:
            raise ValueError(f"model not active: {request.model}")
        client = self._client_for(request.model.provider)
        semaphore = self._semaphore(request.model.provider)
        result: GenerationResult | None = None
        for attempt in range(self.max_retries + 1):
            if attempt and self.backoff_seconds:
                self._sleep(self.backoff_seconds * (2 ** (attempt - 1)))
            start = time.monotonic()
            with semaphore:
                try:
                    result = client.generate(request)
                except Exception as exc:  # client bug or transport explosion
                    logger.warning("provider %s raised: %s", request.model.provider, exc)
                    result = _failure(request.model, ProviderStatus.PROVIDER_ERROR, start)
            if result.provider_status not in _RETRIABLE:
                return result
        assert result is not None
        return result
