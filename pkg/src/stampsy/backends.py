"""Contracts and clients for external model services (chat completion,
text embedding, trainable skill classifier) plus deterministic offline
mocks.

The wire format mirrors the de-facto chat-completion shape (a messages
array of role/content objects) so hosted and self-hosted models are
interchangeable. The mocks are pure functions of (seed, input) so engine
replays and golden-file tests are byte-stable.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import httpx
import numpy as np

from .corpus import HelpingSkill, count_tokens


class BackendError(Exception):
    """Base class for typed backend failures; carries the backend name."""

    def __init__(self, backend: str, message: str):
        super().__init__(f"[{backend}] {message}")
        self.backend = backend


class BackendTimeout(BackendError):
    pass


class BackendOverBudget(BackendError):
    pass


class BackendUnavailable(BackendError):
    pass


class BackendProtocolError(BackendError):
    pass


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 2
    backoff_seconds: float = 0.2

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class ChatBackendSpec:
    endpoint: str
    model_name: str
    max_input_tokens: int = 4096
    timeout: float = 30.0
    retry_policy: RetryPolicy = field(default_factory=RetryPolicy)
    api_key_env: str | None = None

    def __post_init__(self) -> None:
        if self.max_input_tokens < 512:
            raise ValueError("max_input_tokens must be >= 512")


@dataclass(frozen=True)
class EmbeddingBackendSpec:
    endpoint: str
    model_name: str
    dimension: int
    api_key_env: str | None = None

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError("dimension must be positive")


def _auth_headers(api_key_env: str | None) -> dict[str, str]:
    """API keys come from the environment, never from config files."""
    if not api_key_env:
        return {}
    key = os.environ.get(api_key_env)
    return {"Authorization": f"Bearer {key}"} if key else {}


Messages = Sequence[Mapping[str, str]]


def _estimate_tokens(messages: Messages) -> int:
    return sum(count_tokens(m.get("content", "")) for m in messages)


class HttpChatBackend:
    """Chat-completion client: POST {messages: [...]} -> {content}.

    Retries transient failures (timeouts, 5xx) per the retry policy;
    permanent errors surface immediately. The prompt budget is checked
    before any network call.
    """

    def __init__(
        self,
        spec: ChatBackendSpec,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.spec = spec
        self.name = f"chat:{spec.model_name}"
        self._client = client or httpx.Client(timeout=spec.timeout)
        self._sleep = sleep

    @property
    def max_input_tokens(self) -> int:
        return self.spec.max_input_tokens

    def complete(self, messages: Messages) -> str:
        if _estimate_tokens(messages) > self.spec.max_input_tokens:
            raise BackendOverBudget(self.name, "prompt exceeds max_input_tokens")
        payload = {"model": self.spec.model_name, "messages": list(messages)}
        headers = _auth_headers(self.spec.api_key_env)
        attempts = self.spec.retry_policy.max_retries + 1
        last_error: BackendError | None = None
        for attempt in range(attempts):
            try:
                response = self._client.post(self.spec.endpoint, json=payload, headers=headers)
            except httpx.TimeoutException:
                last_error = BackendTimeout(self.name, "request timed out")
            except httpx.HTTPError as exc:
                last_error = BackendUnavailable(self.name, f"transport error: {exc}")
            else:
                if response.status_code >= 500:
                    last_error = BackendUnavailable(self.name, f"server error {response.status_code}")
                elif response.status_code >= 400:
                    raise BackendUnavailable(self.name, f"client error {response.status_code}")
                else:
                    try:
                        content = response.json()["content"]
                    except (KeyError, ValueError) as exc:
                        raise BackendProtocolError(self.name, f"bad response body: {exc}")
                    if not isinstance(content, str) or not content:
                        raise BackendProtocolError(self.name, "empty completion")
                    return content
            if attempt < attempts - 1:
                self._sleep(self.spec.retry_policy.backoff_seconds * (attempt + 1))
        assert last_error is not None
        raise last_error


def chat_complete(backend, messages: Messages) -> str:
    """Uniform entry point over any chat backend object."""
    return backend.complete(messages)


class HttpEmbeddingBackend:
    """Embedding client: POST {texts: [...]} -> {vectors: [[...]]}.

    Vectors are validated against the spec dimension and L2-normalized
    before being returned.
    """

    def __init__(self, spec: EmbeddingBackendSpec, client: httpx.Client | None = None) -> None:
        self.spec = spec
        self.name = f"embed:{spec.model_name}"
        self._client = client or httpx.Client()
        self.dimension = spec.dimension

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("texts must be non-empty")
        try:
            response = self._client.post(
                self.spec.endpoint,
                json={"texts": list(texts)},
                headers=_auth_headers(self.spec.api_key_env),
            )
        except httpx.HTTPError as exc:
            raise BackendUnavailable(self.name, f"transport error: {exc}")
        if response.status_code >= 400:
            raise BackendUnavailable(self.name, f"service error {response.status_code}")
        try:
            vectors = response.json()["vectors"]
        except (KeyError, ValueError) as exc:
            raise BackendProtocolError(self.name, f"bad response body: {exc}")
        if len(vectors) != len(texts):
            raise BackendProtocolError(self.name, "vector count mismatch")
        out = []
        for vec in vectors:
            arr = np.asarray(vec, dtype=float)
            if arr.shape != (self.spec.dimension,):
                raise BackendProtocolError(
                    self.name,
                    f"dimension mismatch: got {arr.shape}, expected ({self.spec.dimension},)",
                )
            norm = np.linalg.norm(arr)
            if norm == 0:
                raise BackendProtocolError(self.name, "zero vector from service")
            out.append(arr / norm)
        return out


def embed(backend, texts: Sequence[str]) -> list[np.ndarray]:
    return backend.embed(texts)


class RemoteSkillClassifier:
    """Trainable-encoder classifier client.

    Wire contract: POST {"segments": [...]} -> {"probabilities": {skill: p}}.
    An optional training config rides along so the remote side can identify
    the fine-tuned head to serve.
    """

    def __init__(
        self,
        endpoint: str,
        model_name: str = "encoder",
        input_budget: int = 8192,
        training_config: Mapping | None = None,
        client: httpx.Client | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.name = f"classifier:{model_name}"
        self.input_budget = input_budget
        self.training_config = dict(training_config) if training_config else None
        self._client = client or httpx.Client()

    def classify(self, segments: Sequence[str]) -> dict[HelpingSkill, float]:
        payload: dict = {"segments": list(segments)}
        if self.training_config:
            payload["training_config"] = self.training_config
        try:
            response = self._client.post(self.endpoint, json=payload)
        except httpx.HTTPError as exc:
            raise BackendUnavailable(self.name, f"transport error: {exc}")
        if response.status_code >= 400:
            raise BackendUnavailable(self.name, f"service error {response.status_code}")
        try:
            probabilities = response.json()["probabilities"]
        except (KeyError, ValueError) as exc:
            raise BackendProtocolError(self.name, f"bad response body: {exc}")
        out: dict[HelpingSkill, float] = {}
        for key, value in probabilities.items():
            try:
                out[HelpingSkill(key)] = float(value)
            except ValueError:
                raise BackendProtocolError(self.name, f"unknown skill key {key!r}")
        if not out:
            raise BackendProtocolError(self.name, "empty probability map")
        return out


# ---------------------------------------------------------------------------
# Deterministic mocks
# ---------------------------------------------------------------------------


def _digest(seed: int, payload: str) -> str:
    return hashlib.sha256(f"{seed}|{payload}".encode("utf-8")).hexdigest()


_MOCK_REPLIES = (
    "听起来这件事让你很不容易，愿意再多说一些吗？",
    "我能感受到你的情绪，这确实值得我们好好聊一聊。",
    "你刚才说的这些，对你来说意味着什么呢？",
    "谢谢你愿意分享，我们可以一步一步来看这个问题。",
    "嗯，我在听。你希望事情变成什么样子？",
    "这听起来给你带来了不小的压力，你通常会怎么应对？",
)

#: Section labels the engine's reflection prompt asks for, and the exact
#: instruction line that marks such a prompt (the mock keys on it to decide
#: it is being asked for a structured reflection).
RECORDING_SECTION_TITLES = (
    "Explicit Content",
    "Implicit Content",
    "Defense and Barriers to Change",
    "Distortion",
    "Countertransference",
    "Personal Assessment",
)

RECORDING_PROMPT_CUE = (
    "please answer the following questions as honestly as possible"
)


class MockChatBackend:
    """Offline chat backend: a pure function of (seed, messages).

    Regular prompts get a canned counselor-style reply tagged with a prompt
    hash; reflection prompts (recognized by their section titles) get six
    numbered sections so the recording parser has something to parse.
    """

    max_input_tokens = 32768

    def __init__(self, seed: int = 0) -> None:
        self.seed = seed
        self.name = f"mock-chat:{seed}"

    def complete(self, messages: Messages) -> str:
        if _estimate_tokens(messages) > self.max_input_tokens:
            raise BackendOverBudget(self.name, "prompt exceeds max_input_tokens")
        canonical = json.dumps(list(messages), ensure_ascii=False, sort_keys=True)
        digest = _digest(self.seed, canonical)
        text = " ".join(m.get("content", "") for m in messages)
        if RECORDING_PROMPT_CUE in text:
            lines = [
                f"{i}. {title}: reflection-{digest[:6]}-{i}"
                for i, title in enumerate(RECORDING_SECTION_TITLES, start=1)
            ]
            return "\n".join(lines)
        reply = _MOCK_REPLIES[int(digest, 16) % len(_MOCK_REPLIES)]
        return f"{reply} [{digest[:8]}]"


class MockEmbeddingBackend:
    """Offline embedder: hash-seeded random projection of character n-gram
    counts, L2-normalized. Equal texts embed equally; n>=2 grams keep the
    projection order-sensitive."""

    def __init__(self, dimension: int = 64, seed: int = 0) -> None:
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.seed = seed
        self.name = f"mock-embed:{seed}"
        self._gram_vectors: dict[str, np.ndarray] = {}

    def _vector_for_gram(self, gram: str) -> np.ndarray:
        cached = self._gram_vectors.get(gram)
        if cached is None:
            key = int(_digest(self.seed, gram)[:16], 16)
            rng = np.random.default_rng(key)
            cached = rng.standard_normal(self.dimension)
            self._gram_vectors[gram] = cached
        return cached

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("texts must be non-empty")
        out = []
        for text in texts:
            acc = np.zeros(self.dimension)
            for n in (1, 2):
                for i in range(max(len(text) - n + 1, 0)):
                    acc += self._vector_for_gram(text[i : i + n])
            norm = np.linalg.norm(acc)
            if norm == 0:
                acc[0] = 1.0
                norm = 1.0
            out.append(acc / norm)
        return out


class MockSkillClassifier:
    """Fixed-distribution classifier for tests (e.g. uniform ties)."""

    name = "mock-classifier"
    input_budget = 100_000

    def __init__(self, distribution: Mapping[HelpingSkill, float]):
        self._distribution = dict(distribution)

    def classify(self, segments: Sequence[str]) -> dict[HelpingSkill, float]:
        return dict(self._distribution)


class FailingClassifier:
    """Always raises; exercises the engine's fallback chain."""

    name = "failing-classifier"
    input_budget = 100_000

    def classify(self, segments: Sequence[str]) -> dict[HelpingSkill, float]:
        raise BackendUnavailable(self.name, "injected failure")
