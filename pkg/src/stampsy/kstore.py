"""Quadruple knowledge store and psychological knowledge graph with
stamp-aware adaptive retrieval.

Facts are [domain | slot | value | stamp] quadruples: a knowledge triple
extended with an optional spatiotemporal stamp. Retrieval is gated by the
predicted helping skill (only knowledge-leaning skills retrieve at all) and
filters out quads whose stamp contradicts the current conversation state —
a "drink coffee" fact stamped morning is never surfaced late at night.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .corpus import HelpingSkill
from .skills import needs_knowledge
from .stsp import FIELD_BY_VALUE, SpatioTemporalState


class Domain(str, Enum):
    PERSONAL_INFORMATION = "personal_information"
    SPATIAL_TEMPORAL_INFORMATION = "spatial_temporal_information"
    PSYCHOLOGICAL_KNOWLEDGE = "psychological_knowledge"


#: Accepted spellings for stamp values that are not literal enum values.
STAMP_ALIASES: dict[str, str] = {
    "night": "late_night",
    "midnight": "late_night",
    "noon": "afternoon",
}


def canonical_stamp(stamp: str | None) -> str | None:
    """Resolve a stamp string to a canonical state-field value."""
    if stamp is None:
        return None
    resolved = STAMP_ALIASES.get(stamp, stamp)
    if resolved not in FIELD_BY_VALUE:
        raise ValueError(f"invalid stamp value {stamp!r}")
    return resolved


@dataclass(frozen=True)
class KnowledgeQuadruple:
    domain: Domain
    slot: str
    value: str
    stamp: str | None = None

    def __post_init__(self) -> None:
        if not self.slot.strip():
            raise ValueError(f"empty slot in quad {self!r}")
        if not self.value.strip():
            raise ValueError(f"empty value in quad {self!r}")
        try:
            resolved = canonical_stamp(self.stamp)
        except ValueError as exc:
            raise ValueError(f"{exc} in quad [{self.domain.value}|{self.slot}|{self.value}|{self.stamp}]") from None
        object.__setattr__(self, "stamp", resolved)

    @property
    def stamp_field(self) -> str | None:
        return FIELD_BY_VALUE[self.stamp] if self.stamp is not None else None

    def to_dict(self) -> dict:
        return {
            "domain": self.domain.value,
            "slot": self.slot,
            "value": self.value,
            "stamp": self.stamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnowledgeQuadruple":
        return cls(
            domain=Domain(d["domain"]),
            slot=d["slot"],
            value=d["value"],
            stamp=d.get("stamp"),
        )


@dataclass(frozen=True)
class ScoredQuad:
    quad: KnowledgeQuadruple
    score: float


@dataclass(frozen=True)
class RetrievalResult:
    """Ranked retrieval output; empty with ``gated=False`` when the skill
    falls outside the knowledge gate."""

    quadruples: tuple[ScoredQuad, ...]
    gated: bool

    def __post_init__(self) -> None:
        if not self.gated and self.quadruples:
            raise ValueError("ungated retrieval must be empty")
        scores = [sq.score for sq in self.quadruples]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("scores must be non-increasing")


class KnowledgeStore:
    """Deduplicated quadruple store indexed by (domain, slot) and by stamp.

    Concurrent reads are safe once ingestion is done; ingestion itself
    assumes a single writer.
    """

    def __init__(self, quads: Iterable[KnowledgeQuadruple] = ()) -> None:
        self._quads: list[KnowledgeQuadruple] = []
        self._seen: set[KnowledgeQuadruple] = set()
        self._by_domain_slot: dict[tuple[Domain, str], list[KnowledgeQuadruple]] = {}
        self._by_stamp: dict[str | None, list[KnowledgeQuadruple]] = {}
        self.ingest(quads)

    def ingest(self, quads: Iterable[KnowledgeQuadruple]) -> "KnowledgeStore":
        for quad in quads:
            if quad in self._seen:
                continue
            self._seen.add(quad)
            self._quads.append(quad)
            self._by_domain_slot.setdefault((quad.domain, quad.slot), []).append(quad)
            self._by_stamp.setdefault(quad.stamp, []).append(quad)
        return self

    def __len__(self) -> int:
        return len(self._quads)

    @property
    def quads(self) -> tuple[KnowledgeQuadruple, ...]:
        return tuple(self._quads)

    def by_slot(self, domain: Domain, slot: str) -> tuple[KnowledgeQuadruple, ...]:
        return tuple(self._by_domain_slot.get((domain, slot), ()))

    def by_stamp(self, stamp: str | None) -> tuple[KnowledgeQuadruple, ...]:
        return tuple(self._by_stamp.get(canonical_stamp(stamp), ()))


def ingest(quads: Iterable[KnowledgeQuadruple]) -> KnowledgeStore:
    """Build a store from quads (idempotent on duplicates)."""
    return KnowledgeStore(quads)


def char_bigram_score(query: str, doc: str) -> float:
    """Dice coefficient over character-bigram sets (unigrams for texts
    shorter than two characters). Case-insensitive, whitespace collapsed."""

    def grams(text: str) -> set[str]:
        norm = " ".join(text.lower().split())
        if len(norm) < 2:
            return {norm} if norm else set()
        return {norm[i : i + 2] for i in range(len(norm) - 1)}

    a, b = grams(query), grams(doc)
    if not a or not b:
        return 0.0
    return 2 * len(a & b) / (len(a) + len(b))


def embedding_scorer(embedder) -> Callable[[str, str], float]:
    """Retrieval scorer backed by an embedding backend: cosine similarity
    between the query and the quad's slot+value text (vectors from the
    backend are unit-norm, so a dot product suffices)."""

    def score(query: str, doc: str) -> float:
        vec_q, vec_d = embedder.embed([query, doc])
        return float(sum(a * b for a, b in zip(vec_q, vec_d)))

    return score


def stamp_compatible(quad: KnowledgeQuadruple, state: SpatioTemporalState | None) -> bool:
    """A null quad stamp matches any state; a null state field matches any
    stamp; stamps only ever conflict with their own field."""
    if quad.stamp is None or state is None:
        return True
    field_value = getattr(state, quad.stamp_field)
    if field_value is None:
        return True
    return field_value.value == quad.stamp


def retrieve(
    store: KnowledgeStore,
    query_text: str,
    state: SpatioTemporalState | None,
    skill: HelpingSkill,
    k: int,
    scorer: Callable[[str, str], float] | None = None,
    overlay: KnowledgeStore | None = None,
) -> RetrievalResult:
    """Stamp-aware top-k retrieval, gated by the helping skill.

    Candidates from the per-session ``overlay`` rank before the shared
    store on ties; quads scoring zero are dropped. ``gated`` reports
    whether retrieval ran at all.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not needs_knowledge(skill):
        return RetrievalResult(quadruples=(), gated=False)
    if scorer is None:
        scorer = char_bigram_score

    candidates: list[KnowledgeQuadruple] = []
    seen: set[KnowledgeQuadruple] = set()
    for source in (overlay, store):
        if source is None:
            continue
        for quad in source.quads:
            if quad not in seen:
                seen.add(quad)
                candidates.append(quad)

    scored: list[ScoredQuad] = []
    for quad in candidates:
        if not stamp_compatible(quad, state):
            continue
        score = scorer(query_text, f"{quad.slot} {quad.value}")
        if score > 0:
            scored.append(ScoredQuad(quad=quad, score=score))
    # Stable sort keeps overlay-first insertion order on ties.
    scored.sort(key=lambda sq: -sq.score)
    return RetrievalResult(quadruples=tuple(scored[:k]), gated=True)


# ---------------------------------------------------------------------------
# Knowledge graph
# ---------------------------------------------------------------------------


class Relation(str, Enum):
    DISORDER_SYMPTOM = "disorder_symptom"
    DISORDER_THERAPY = "disorder_therapy"
    SYMPTOM_THERAPY = "symptom_therapy"
    OTHER = "other"


class UnknownEntityError(KeyError):
    pass


@dataclass(frozen=True)
class KGEdge:
    subject: str
    relation: Relation
    object: str

    def __post_init__(self) -> None:
        if self.subject == self.object:
            raise ValueError(f"self-loop edge on {self.subject!r}")

    def to_dict(self) -> dict:
        return {"s": self.subject, "r": self.relation.value, "o": self.object}


class KnowledgeGraph:
    """Entity/edge graph over disorders, symptoms, and therapies.

    Entities must be registered before edges reference them; neighbor
    queries return edges in insertion order.
    """

    def __init__(self) -> None:
        self._entities: set[str] = set()
        self._edges: list[KGEdge] = []

    def add_entity(self, entity: str) -> None:
        if not entity:
            raise ValueError("empty entity id")
        self._entities.add(entity)

    def has_entity(self, entity: str) -> bool:
        return entity in self._entities

    def add_edge(self, edge: KGEdge) -> None:
        for endpoint in (edge.subject, edge.object):
            if endpoint not in self._entities:
                raise UnknownEntityError(endpoint)
        self._edges.append(edge)

    @property
    def edges(self) -> tuple[KGEdge, ...]:
        return tuple(self._edges)

    def neighbors(self, entity: str, relation: Relation | None = None) -> list[KGEdge]:
        """All edges incident to ``entity``, optionally filtered by relation."""
        if entity not in self._entities:
            raise UnknownEntityError(entity)
        return [
            e
            for e in self._edges
            if (e.subject == entity or e.object == entity)
            and (relation is None or e.relation is relation)
        ]


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


def load_quads(path: str | Path) -> list[KnowledgeQuadruple]:
    """JSONL, one {"domain", "slot", "value", "stamp"} object per line."""
    quads = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                quads.append(KnowledgeQuadruple.from_dict(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from exc
    return quads


def save_quads(quads: Sequence[KnowledgeQuadruple], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for quad in quads:
            fh.write(json.dumps(quad.to_dict(), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def load_graph(path: str | Path) -> KnowledgeGraph:
    """JSONL edge list {"s", "r", "o"}; endpoints are registered on load."""
    graph = KnowledgeGraph()
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                graph.add_entity(d["s"])
                graph.add_entity(d["o"])
                graph.add_edge(KGEdge(subject=d["s"], relation=Relation(d["r"]), object=d["o"]))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from exc
    return graph
