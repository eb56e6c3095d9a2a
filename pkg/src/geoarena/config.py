"""Configuration loading shared by the service and the CLI.

One JSON file configures storage paths, the model roster, provider
endpoints, rating parameters, and service limits. Credentials never live in
the file; they come from ``GEOARENA_<PROVIDER>_API_KEY`` environment
variables. Precedence is flags > environment > config file > defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .core import ModelId, ModelRegistry, RegistryEntry
from .providers import ProviderEndpoint
from .rating import BTConfig, EloConfig

# The benchmarked roster: id, display name, open-source flag.
_DEFAULT_ROSTER = [
    ("openai/gpt-4o", "GPT-4o", False),
    ("openai/gpt-4o-mini", "GPT-4o mini", False),
    ("openai/gpt-4.1", "GPT-4.1", False),
    ("openai/gpt-4.1-mini", "GPT-4.1 mini", False),
    ("openai/gpt-4.1-nano", "GPT-4.1 nano", False),
    ("google/gemini-2.5-flash", "Gemini 2.5 Flash", False),
    ("google/gemini-2.5-pro", "Gemini 2.5 Pro", False),
    ("anthropic/claude-sonnet-4", "Claude Sonnet 4", False),
    ("anthropic/claude-opus-4", "Claude Opus 4", False),
    ("meta-llama/llama-4-maverick", "Llama 4 Maverick", True),
    ("meta-llama/llama-4-scout", "Llama 4 Scout", True),
    ("google/gemma-3-27b-it", "Gemma 3 27B", True),
    ("google/gemma-3-12b-it", "Gemma 3 12B", True),
    ("google/gemma-3-4b-it", "Gemma 3 4B", True),
    ("qwen/qwen2.5-vl-72b-instruct", "Qwen 2.5-VL 72B", True),
    ("qwen/qwen2.5-vl-32b-instruct", "Qwen 2.5-VL 32B", True),
    ("qwen/qwen-2.5-vl-7b-instruct", "Qwen 2.5-VL 7B", True),
]

DEFAULT_ANCHOR = "openai/gpt-4o"


def default_registry() -> ModelRegistry:
    return ModelRegistry(
        entries=[
            RegistryEntry(ModelId.parse(mid), display, open_source)
            for mid, display, open_source in _DEFAULT_ROSTER
        ]
    )


@dataclass
class StorageConfig:
    battle_log: Path = Path("data/battles.jsonl")
    image_dir: Path = Path("data/images")


@dataclass
class ProvidersConfig:
    mock: bool = False
    endpoints: dict[str, ProviderEndpoint] = field(default_factory=dict)
    max_concurrency: int = 4
    default_prompt: str | None = None


@dataclass
class ServiceConfig:
    rate_limit_battles_per_hour: int = 10  # 0 disables the limiter
    leaderboard_refresh_seconds: float = 300.0
    session_expiry_minutes: float = 30.0
    max_image_bytes: int = 10 * 1024 * 1024
    sampling_seed: int | None = None
    bootstrap_rounds: int = 100
    bootstrap_seed: int = 0


@dataclass
class ArenaConfig:
    storage: StorageConfig = field(default_factory=StorageConfig)
    registry: ModelRegistry = field(default_factory=default_registry)
    providers: ProvidersConfig = field(default_factory=ProvidersConfig)
    bt: BTConfig = field(
        default_factory=lambda: BTConfig(
            anchor_model=ModelId.parse(DEFAULT_ANCHOR), l2_penalty=1e-6
        )
    )
    elo: EloConfig = field(default_factory=EloConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)


class ConfigError(ValueError):
    """The configuration file is malformed."""


def _registry_from_json(entries: list) -> ModelRegistry:
    parsed = []
    for entry in entries:
        try:
            parsed.append(
                RegistryEntry(
                    model=ModelId.parse(entry["model"]),
                    display_name=entry.get("display_name", entry["model"]),
                    open_source=bool(entry.get("open_source", False)),
                    active=bool(entry.get("active", True)),
                )
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad registry entry {entry!r}: {exc}") from exc
    return ModelRegistry(entries=parsed)


def _bt_from_json(raw: dict) -> BTConfig:
    anchor = raw.get("anchor_model", DEFAULT_ANCHOR)
    try:
        return BTConfig(
            alpha=float(raw.get("alpha", 400.0)),
            scale=float(raw.get("scale", 400.0)),
            init_rating=float(raw.get("init_rating", 1000.0)),
            anchor_model=ModelId.parse(anchor) if anchor else None,
            tie_weight=float(raw.get("tie_weight", 0.5)),
            max_iterations=int(raw.get("max_iterations", 1000)),
            tolerance=float(raw.get("tolerance", 1e-8)),
            l2_penalty=float(raw.get("l2_penalty", 1e-6)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad rating config: {exc}") from exc


def load_config(path: str | Path | None = None) -> ArenaConfig:
    """Read a config file; missing sections fall back to defaults."""
    config = ArenaConfig()
    if path is None:
        return config
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc

    storage = raw.get("storage", {})
    config.storage = StorageConfig(
        battle_log=Path(storage.get("battle_log", config.storage.battle_log)),
        image_dir=Path(storage.get("image_dir", config.storage.image_dir)),
    )
    if "registry" in raw:
        config.registry = _registry_from_json(raw["registry"])
    providers = raw.get("providers", {})
    endpoints = {}
    for name, spec in providers.get("endpoints", {}).items():
        try:
            endpoints[name] = ProviderEndpoint(
                base_url=spec["base_url"],
                model_map=dict(spec.get("model_map", {})),
                api_key_env=spec.get("api_key_env"),
            )
        except KeyError as exc:
            raise ConfigError(f"provider endpoint {name!r} missing {exc}") from exc
    config.providers = ProvidersConfig(
        mock=bool(providers.get("mock", False)),
        endpoints=endpoints,
        max_concurrency=int(providers.get("max_concurrency", 4)),
        default_prompt=providers.get("default_prompt"),
    )
    if "rating" in raw:
        config.bt = _bt_from_json(raw["rating"])
    service = raw.get("service", {})
    defaults = ServiceConfig()
    config.service = ServiceConfig(
        rate_limit_battles_per_hour=int(
            service.get("rate_limit_battles_per_hour", defaults.rate_limit_battles_per_hour)
        ),
        leaderboard_refresh_seconds=float(
            service.get("leaderboard_refresh_seconds", defaults.leaderboard_refresh_seconds)
        ),
        session_expiry_minutes=float(
            service.get("session_expiry_minutes", defaults.session_expiry_minutes)
        ),
        max_image_bytes=int(service.get("max_image_bytes", defaults.max_image_bytes)),
        sampling_seed=service.get("sampling_seed"),
        bootstrap_rounds=int(service.get("bootstrap_rounds", defaults.bootstrap_rounds)),
        bootstrap_seed=int(service.get("bootstrap_seed", defaults.bootstrap_seed)),
    )
    return config
