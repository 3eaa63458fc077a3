"""Evaluation harness: skill-attribution benchmark, generation metrics,
slot/value scoring, inter-rater agreement, and the human-evaluation rubric
schema.

Generation metrics default to character-level tokens (the reproducible
convention for Chinese text; whitespace is dropped). Pass
``mode="mixed"`` to keep Latin runs whole words instead. All metric
functions are pure; batch evaluation can parallelize across examples
freely.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import HelpingSkill, tokenize


# ---------------------------------------------------------------------------
# Generation metrics
# ---------------------------------------------------------------------------


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_length(cand_len: int, ref_lens: Sequence[int]) -> int:
    # Ties go to the shorter reference.
    return min(ref_lens, key=lambda r: (abs(r - cand_len), r))


def bleu(candidate: str, references: Sequence[str], n: int = 2, mode: str = "char") -> float:
    """Cumulative BLEU-n: geometric mean of modified 1..n-gram precisions
    with a brevity penalty against the closest reference length."""
    if not candidate.strip():
        raise ValueError("candidate must be non-empty")
    if not references:
        raise ValueError("at least one reference required")
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = tokenize(candidate, mode)
    refs = [tokenize(r, mode) for r in references]
    log_sum = 0.0
    for k in range(1, n + 1):
        cand_grams = _ngrams(cand, k)
        total = sum(cand_grams.values())
        if total == 0:
            return 0.0
        max_ref = Counter()
        for ref in refs:
            for gram, count in _ngrams(ref, k).items():
                if count > max_ref[gram]:
                    max_ref[gram] = count
        clipped = sum(min(count, max_ref[gram]) for gram, count in cand_grams.items())
        if clipped == 0:
            return 0.0
        log_sum += math.log(clipped / total) / n
    c = len(cand)
    r = _closest_ref_length(c, [len(ref) for ref in refs])
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * math.exp(log_sum)


def corpus_bleu(
    pairs: Sequence[tuple[str, Sequence[str]]], n: int = 2, mode: str = "char"
) -> float:
    """Corpus-level BLEU: clipped counts and lengths pooled over all pairs."""
    if not pairs:
        raise ValueError("no pairs")
    clipped_total = [0] * n
    gram_total = [0] * n
    cand_len = 0
    ref_len = 0
    for candidate, references in pairs:
        cand = tokenize(candidate, mode)
        refs = [tokenize(r, mode) for r in references]
        cand_len += len(cand)
        ref_len += _closest_ref_length(len(cand), [len(r) for r in refs])
        for k in range(1, n + 1):
            cand_grams = _ngrams(cand, k)
            max_ref = Counter()
            for ref in refs:
                for gram, count in _ngrams(ref, k).items():
                    if count > max_ref[gram]:
                        max_ref[gram] = count
            gram_total[k - 1] += sum(cand_grams.values())
            clipped_total[k - 1] += sum(
                min(count, max_ref[gram]) for gram, count in cand_grams.items()
            )
    log_sum = 0.0
    for k in range(n):
        if gram_total[k] == 0 or clipped_total[k] == 0:
            return 0.0
        log_sum += math.log(clipped_total[k] / gram_total[k]) / n
    bp = 1.0 if cand_len > ref_len else math.exp(1 - ref_len / max(cand_len, 1))
    return bp * math.exp(log_sum)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str, mode: str = "char") -> float:
    """ROUGE-L F-measure (beta = 1) over the longest common subsequence."""
    if not candidate.strip() or not reference.strip():
        raise ValueError("candidate and reference must be non-empty")
    cand = tokenize(candidate, mode)
    ref = tokenize(reference, mode)
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)


def embed_sim(candidate: str, reference: str, embedder) -> float:
    """Cosine similarity of the two texts' embeddings."""
    vec_c, vec_r = embedder.embed([candidate, reference])
    return float(np.dot(vec_c, vec_r) / (np.linalg.norm(vec_c) * np.linalg.norm(vec_r)))


# ---------------------------------------------------------------------------
# Skill-attribution benchmark
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GHSCUnit:
    """One slash-delimited counselor response unit with its gold skill."""

    text: str
    gold_skill: HelpingSkill


@dataclass(frozen=True)
class GHSCExchange:
    units: tuple[GHSCUnit, ...]
    client_text: str | None = None
    unscored: tuple[str, ...] = ()


@dataclass(frozen=True)
class GHSCTranscript:
    exchanges: tuple[GHSCExchange, ...]

    def units(self) -> tuple[GHSCUnit, ...]:
        return tuple(u for ex in self.exchanges for u in ex.units)

    def gold_skills(self) -> tuple[HelpingSkill, ...]:
        return tuple(u.gold_skill for u in self.units())


_ghsc_cache: GHSCTranscript | None = None


def load_ghsc_transcript(path: str | Path | None = None) -> GHSCTranscript:
    """Load the golden skill-attribution transcript (bundled by default)."""
    global _ghsc_cache
    if path is None and _ghsc_cache is not None:
        return _ghsc_cache
    if path is None:
        raw = resources.files("stampsy.data").joinpath("ghsc_transcript.json").read_text("utf-8")
    else:
        raw = Path(path).read_text("utf-8")
    data = json.loads(raw)
    exchanges = []
    for ex in data["exchanges"]:
        exchanges.append(
            GHSCExchange(
                units=tuple(
                    GHSCUnit(text=u["text"], gold_skill=HelpingSkill(u["skill"]))
                    for u in ex["units"]
                ),
                client_text=ex.get("client"),
                unscored=tuple(ex.get("unscored", [])),
            )
        )
    transcript = GHSCTranscript(exchanges=tuple(exchanges))
    if path is None:
        _ghsc_cache = transcript
    return transcript


def score_ghsc(transcript: GHSCTranscript, predictions: Sequence[HelpingSkill]) -> float:
    """Exact-match accuracy over response units."""
    gold = transcript.gold_skills()
    if len(predictions) != len(gold):
        raise ValueError(f"expected {len(gold)} predictions, got {len(predictions)}")
    correct = sum(1 for g, p in zip(gold, predictions) if g is p)
    return correct / len(gold)


# ---------------------------------------------------------------------------
# Slot / value / stamp scoring
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SlotValueScores:
    slot_accuracy: float
    value_rouge_l: float
    stamp_accuracy: float | None

    def to_dict(self) -> dict:
        return {
            "slot_accuracy": self.slot_accuracy,
            "value_rouge_l": self.value_rouge_l,
            "stamp_accuracy": self.stamp_accuracy,
        }


def slot_value_scores(gold_quads: Sequence, predicted_quads: Sequence) -> SlotValueScores:
    """Aligned comparison of knowledge quadruples: slot exact match, mean
    ROUGE-L over values, and stamp exact match over pairs with a gold stamp
    (None when no gold stamp exists)."""
    if len(gold_quads) != len(predicted_quads):
        raise ValueError(
            f"length mismatch: {len(gold_quads)} gold vs {len(predicted_quads)} predicted"
        )
    if not gold_quads:
        raise ValueError("empty inputs")
    slot_hits = 0
    value_scores = []
    stamp_total = 0
    stamp_hits = 0
    for g, p in zip(gold_quads, predicted_quads):
        if g.slot == p.slot:
            slot_hits += 1
        value_scores.append(rouge_l(p.value, g.value))
        if g.stamp is not None:
            stamp_total += 1
            if p.stamp == g.stamp:
                stamp_hits += 1
    return SlotValueScores(
        slot_accuracy=slot_hits / len(gold_quads),
        value_rouge_l=sum(value_scores) / len(value_scores),
        stamp_accuracy=stamp_hits / stamp_total if stamp_total else None,
    )


# ---------------------------------------------------------------------------
# Agreement and rubric aggregation
# ---------------------------------------------------------------------------


def cohen_kappa(ratings_a: Sequence, ratings_b: Sequence) -> float:
    """Cohen's kappa with empirical marginals.

    Defined as 1.0 in the degenerate case where expected agreement is 1 and
    the raters agree everywhere.
    """
    if len(ratings_a) != len(ratings_b):
        raise ValueError(f"length mismatch: {len(ratings_a)} vs {len(ratings_b)}")
    if not ratings_a:
        raise ValueError("empty ratings")
    n = len(ratings_a)
    p_o = sum(1 for a, b in zip(ratings_a, ratings_b) if a == b) / n
    counts_a = Counter(ratings_a)
    counts_b = Counter(ratings_b)
    labels = set(counts_a) | set(counts_b)
    p_e = sum((counts_a[l] / n) * (counts_b[l] / n) for l in labels)
    if abs(1.0 - p_e) < 1e-12:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


RUBRIC_DIMENSIONS: tuple[str, ...] = (
    "relevance",
    "informativeness",
    "human_likeness",
    "helpfulness",
    "empathy",
)


@dataclass(frozen=True)
class RubricScore:
    """One rater's 0/1/2 judgment of one response on five dimensions."""

    relevance: int
    informativeness: int
    human_likeness: int
    helpfulness: int
    empathy: int
    rater_id: str
    item_id: str | None = None

    def __post_init__(self) -> None:
        for dim in RUBRIC_DIMENSIONS:
            value = getattr(self, dim)
            if value not in (0, 1, 2):
                raise ValueError(f"{dim} must be 0, 1, or 2 (got {value!r})")

    def as_dict(self) -> dict[str, int]:
        return {dim: getattr(self, dim) for dim in RUBRIC_DIMENSIONS}


@dataclass(frozen=True)
class RubricAggregate:
    means: dict[str, float]
    pairwise_kappa: dict[tuple[str, str], dict[str, float | None]]

    def to_dict(self) -> dict:
        return {
            "means": self.means,
            "pairwise_kappa": {
                f"{a}|{b}": dims for (a, b), dims in self.pairwise_kappa.items()
            },
        }


def aggregate_rubric(scores: Sequence[RubricScore]) -> RubricAggregate:
    """Per-dimension means plus Cohen's kappa per rater pair per dimension
    (computed over items both raters scored; needs item ids)."""
    if not scores:
        raise ValueError("no scores")
    means = {
        dim: sum(getattr(s, dim) for s in scores) / len(scores)
        for dim in RUBRIC_DIMENSIONS
    }
    by_rater: dict[str, dict[str, RubricScore]] = {}
    for s in scores:
        if s.item_id is not None:
            by_rater.setdefault(s.rater_id, {})[s.item_id] = s
    raters = sorted(by_rater)
    pairwise: dict[tuple[str, str], dict[str, float | None]] = {}
    for i, a in enumerate(raters):
        for b in raters[i + 1 :]:
            common = sorted(set(by_rater[a]) & set(by_rater[b]))
            dims: dict[str, float | None] = {}
            for dim in RUBRIC_DIMENSIONS:
                if not common:
                    dims[dim] = None
                    continue
                dims[dim] = cohen_kappa(
                    [getattr(by_rater[a][item], dim) for item in common],
                    [getattr(by_rater[b][item], dim) for item in common],
                )
            pairwise[(a, b)] = dims
    return RubricAggregate(means=means, pairwise_kappa=pairwise)


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    """Structured results across the benchmark's metric families."""

    ghsc_accuracy: float | None = None
    classification: dict | None = None
    stsp_accuracy: float | None = None
    slot_accuracy: float | None = None
    value_rouge_l: float | None = None
    stamp_accuracy: float | None = None
    bleu1: float | None = None
    bleu2: float | None = None
    rouge_l: float | None = None
    embed_sim: float | None = None
    rubric_means: dict[str, float] = field(default_factory=dict)
    kappa: float | None = None

    def __post_init__(self) -> None:
        for name in ("ghsc_accuracy", "stsp_accuracy", "slot_accuracy",
                     "value_rouge_l", "stamp_accuracy", "bleu1", "bleu2", "rouge_l"):
            value = getattr(self, name)
            if value is not None and not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} out of [0, 1]: {value}")
        for dim, value in self.rubric_means.items():
            if not (0.0 <= value <= 2.0):
                raise ValueError(f"rubric mean {dim} out of [0, 2]: {value}")

    def to_dict(self) -> dict:
        return {
            "ghsc_accuracy": self.ghsc_accuracy,
            "classification": self.classification,
            "stsp_accuracy": self.stsp_accuracy,
            "slot_accuracy": self.slot_accuracy,
            "value_rouge_l": self.value_rouge_l,
            "stamp_accuracy": self.stamp_accuracy,
            "bleu1": self.bleu1,
            "bleu2": self.bleu2,
            "rouge_l": self.rouge_l,
            "embed_sim": self.embed_sim,
            "rubric_means": self.rubric_means,
            "kappa": self.kappa,
        }

    def render_table(self) -> str:
        def fmt(x, scale=100.0):
            return "-" if x is None else f"{x * scale:.2f}"

        headers = ["GHSC", "STSP Acc.", "BLEU-1/2", "ROUGE-L", "EmbedSim",
                   "Rel.", "Info.", "Human.", "Help.", "Empa."]
        rubric = [
            "-" if dim not in self.rubric_means else f"{self.rubric_means[dim]:.2f}"
            for dim in RUBRIC_DIMENSIONS
        ]
        row = [
            fmt(self.ghsc_accuracy),
            fmt(self.stsp_accuracy),
            f"{fmt(self.bleu1)}/{fmt(self.bleu2)}",
            fmt(self.rouge_l),
            fmt(self.embed_sim),
            *rubric,
        ]
        widths = [max(len(h), len(v)) for h, v in zip(headers, row)]
        line = " | ".join(h.ljust(w) for h, w in zip(headers, widths))
        sep = "-+-".join("-" * w for w in widths)
        values = " | ".join(v.ljust(w) for v, w in zip(row, widths))
        return "\n".join([line, sep, values])
