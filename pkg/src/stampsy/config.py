"""TOML configuration loading and engine construction.

One config file drives the CLI REPL and the HTTP service: engine knobs,
backend endpoints (or offline mocks), knowledge files, and service
settings. Unknown keys are rejected early so typos don't silently fall
back to defaults.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - version-dependent import
    import tomli as tomllib

from . import backends as be
from . import kstore
from .engine import BackendBundle, EngineConfig, SessionEngine
from .skills import KeywordSkillClassifier, load_instruction_templates
from .stsp import load_rules


class ConfigError(ValueError):
    pass


@dataclass
class ServiceSettings:
    host: str = "127.0.0.1"
    port: int = 8000
    storage_dir: str | None = None
    api_token: str | None = None
    cors_origins: tuple[str, ...] = ("*",)
    corpus_path: str | None = None
    ui_dir: str | None = None


@dataclass
class AppConfig:
    engine: EngineConfig = field(default_factory=EngineConfig)
    service: ServiceSettings = field(default_factory=ServiceSettings)
    chat_backend: dict = field(default_factory=lambda: {"kind": "mock", "seed": 0})
    classifier_backend: dict = field(default_factory=lambda: {"kind": "keyword"})
    embedding_backend: dict = field(default_factory=lambda: {"kind": "mock", "dimension": 64})
    quads_path: str | None = None
    rules_path: str | None = None
    instruction_templates_path: str | None = None
    clock: str = "wall"
    tick_start: float = 1_700_000_000.0
    tick_step: float = 1.0
    seed: int = 0


_ENGINE_KEYS = {
    "max_turns", "warn_margin", "retrieval_k", "use_context_classification",
    "preamble", "opening_template", "closing_template", "end_on_farewell",
    "farewell_patterns", "max_seconds", "warn_seconds",
    "include_recording_in_preamble", "prompt_budget",
    "clock", "tick_start", "tick_step", "seed",
}


def load_config(path: str | Path | None = None) -> AppConfig:
    """Parse a TOML config file into an AppConfig; None yields defaults."""
    cfg = AppConfig()
    if path is None:
        return cfg
    with Path(path).open("rb") as fh:
        data = tomllib.load(fh)

    engine_raw = dict(data.get("engine", {}))
    unknown = set(engine_raw) - _ENGINE_KEYS
    if unknown:
        raise ConfigError(f"unknown [engine] keys: {sorted(unknown)}")
    cfg.clock = engine_raw.pop("clock", cfg.clock)
    cfg.tick_start = float(engine_raw.pop("tick_start", cfg.tick_start))
    cfg.tick_step = float(engine_raw.pop("tick_step", cfg.tick_step))
    cfg.seed = int(engine_raw.pop("seed", cfg.seed))
    if "farewell_patterns" in engine_raw:
        engine_raw["farewell_patterns"] = tuple(engine_raw["farewell_patterns"])
    try:
        cfg.engine = EngineConfig(**engine_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [engine] section: {exc}") from exc

    backends_raw = data.get("backends", {})
    cfg.chat_backend = dict(backends_raw.get("chat", cfg.chat_backend))
    cfg.classifier_backend = dict(backends_raw.get("classifier", cfg.classifier_backend))
    cfg.embedding_backend = dict(backends_raw.get("embedding", cfg.embedding_backend))

    knowledge_raw = data.get("knowledge", {})
    cfg.quads_path = knowledge_raw.get("quads_path")
    cfg.rules_path = knowledge_raw.get("rules_path")
    cfg.instruction_templates_path = knowledge_raw.get("instruction_templates_path")

    service_raw = dict(data.get("service", {}))
    if "cors_origins" in service_raw:
        service_raw["cors_origins"] = tuple(service_raw["cors_origins"])
    try:
        cfg.service = ServiceSettings(**service_raw)
    except TypeError as exc:
        raise ConfigError(f"bad [service] section: {exc}") from exc
    return cfg


class TickClock:
    """Deterministic clock for replays: start + step per call."""

    def __init__(self, start: float = 1_700_000_000.0, step: float = 1.0) -> None:
        self._next = start
        self._step = step

    def __call__(self) -> float:
        value = self._next
        self._next += self._step
        return value


def _build_chat(cfg: AppConfig, seed: int | None):
    raw = cfg.chat_backend
    kind = raw.get("kind", "mock")
    if kind == "mock":
        return be.MockChatBackend(seed=int(raw.get("seed", seed if seed is not None else cfg.seed)))
    if kind == "http":
        spec = be.ChatBackendSpec(
            endpoint=raw["endpoint"],
            model_name=raw.get("model_name", "default"),
            max_input_tokens=int(raw.get("max_input_tokens", 4096)),
            timeout=float(raw.get("timeout", 30.0)),
            retry_policy=be.RetryPolicy(
                max_retries=int(raw.get("max_retries", 2)),
                backoff_seconds=float(raw.get("backoff_seconds", 0.2)),
            ),
            api_key_env=raw.get("api_key_env"),
        )
        return be.HttpChatBackend(spec)
    raise ConfigError(f"unknown chat backend kind {kind!r}")


def _build_classifier(cfg: AppConfig):
    raw = cfg.classifier_backend
    kind = raw.get("kind", "keyword")
    if kind == "keyword":
        return KeywordSkillClassifier()
    if kind == "http":
        return be.RemoteSkillClassifier(
            endpoint=raw["endpoint"],
            model_name=raw.get("model_name", "encoder"),
            input_budget=int(raw.get("input_budget", 8192)),
            training_config=raw.get("training_config"),
        )
    raise ConfigError(f"unknown classifier backend kind {kind!r}")


def _build_embedder(cfg: AppConfig, seed: int | None):
    raw = cfg.embedding_backend
    kind = raw.get("kind", "mock")
    if kind == "mock":
        return be.MockEmbeddingBackend(
            dimension=int(raw.get("dimension", 64)),
            seed=int(raw.get("seed", seed if seed is not None else cfg.seed)),
        )
    if kind == "http":
        spec = be.EmbeddingBackendSpec(
            endpoint=raw["endpoint"],
            model_name=raw.get("model_name", "default"),
            dimension=int(raw["dimension"]),
            api_key_env=raw.get("api_key_env"),
        )
        return be.HttpEmbeddingBackend(spec)
    raise ConfigError(f"unknown embedding backend kind {kind!r}")


def build_engine(cfg: AppConfig, seed: int | None = None, storage_dir: str | None = None) -> SessionEngine:
    """Construct a SessionEngine (backends, store, rules, clock) from config."""
    bundle = BackendBundle(
        chat=_build_chat(cfg, seed),
        classifier=_build_classifier(cfg),
        fallback_classifier=KeywordSkillClassifier(),
        embedder=_build_embedder(cfg, seed),
    )
    store = kstore.KnowledgeStore()
    if cfg.quads_path:
        store.ingest(kstore.load_quads(cfg.quads_path))
    rules = load_rules(cfg.rules_path) if cfg.rules_path else None
    templates = (
        load_instruction_templates(cfg.instruction_templates_path)
        if cfg.instruction_templates_path
        else None
    )
    if cfg.clock == "tick":
        clock = TickClock(cfg.tick_start, cfg.tick_step)
    elif cfg.clock == "wall":
        import time

        clock = time.time
    else:
        raise ConfigError(f"unknown clock kind {cfg.clock!r}")
    return SessionEngine(
        config=cfg.engine,
        backends=bundle,
        store=store,
        rules=rules,
        instruction_templates=templates,
        clock=clock,
        storage_dir=storage_dir or cfg.service.storage_dir,
    )
