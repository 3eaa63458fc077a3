"""Helping-skill selection, goal-to-instruction templating, and the
knowledge gate.

Skill classification is a multi-class problem delegated to a pluggable
backend; this module owns the surrounding contract (context framing,
probability normalization, deterministic tie-breaking) plus a keyword
baseline that works offline. Four skills tend to require external
knowledge and gate adaptive retrieval downstream.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Protocol, Sequence, runtime_checkable

from .corpus import GuidanceSubtype, HelpingSkill

#: Skills that tend to involve external knowledge; retrieval runs only for
#: these four.
KNOWLEDGE_SKILLS: frozenset[HelpingSkill] = frozenset(
    {
        HelpingSkill.IMMEDIACY,
        HelpingSkill.INTERPRETATIONS,
        HelpingSkill.INFORMATION_GIVING,
        HelpingSkill.DIRECT_GUIDANCE,
    }
)


def needs_knowledge(skill: HelpingSkill) -> bool:
    """True iff responses with this skill are knowledge-leaning."""
    return skill in KNOWLEDGE_SKILLS


@runtime_checkable
class ClassifierBackend(Protocol):
    """Skill classifier contract.

    ``classify`` receives ordered utterance segments (oldest first, the
    turn to classify last) and returns non-negative scores per skill;
    they need not be normalized. ``input_budget`` is the maximum total
    characters accepted per request.
    """

    name: str
    input_budget: int

    def classify(self, segments: Sequence[str]) -> Mapping[HelpingSkill, float]:
        ...


@dataclass(frozen=True)
class SkillPrediction:
    probabilities: dict[HelpingSkill, float]
    predicted: HelpingSkill
    used_context: bool
    truncated: bool = False

    def __post_init__(self) -> None:
        total = sum(self.probabilities.values())
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"probabilities sum to {total}, not 1")


@dataclass(frozen=True)
class GoalInstruction:
    """Natural-language instruction derived from a predicted skill."""

    text: str
    source_skill: HelpingSkill

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("instruction text is empty")


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters forwarded to a remote trainable-encoder backend."""

    batch_size: int = 128
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
        }


def _normalize(raw: Mapping[HelpingSkill, float]) -> dict[HelpingSkill, float]:
    scores = {skill: float(raw.get(skill, 0.0)) for skill in HelpingSkill}
    if any(v < 0 for v in scores.values()):
        raise ValueError("backend returned a negative score")
    total = sum(scores.values())
    if total <= 0:
        raise ValueError("backend returned no positive score")
    return {skill: v / total for skill, v in scores.items()}


def _argmax(probs: Mapping[HelpingSkill, float]) -> HelpingSkill:
    # Iterate in enum declaration order so exact ties resolve to the first.
    best = None
    best_p = -1.0
    for skill in HelpingSkill:
        p = probs.get(skill, 0.0)
        if p > best_p:
            best, best_p = skill, p
    assert best is not None
    return best


def classify_skill(
    context: Sequence[str],
    use_context: bool,
    backend: ClassifierBackend,
) -> SkillPrediction:
    """Predict the helping skill for the next counselor turn.

    Without context only the last utterance reaches the backend; with
    context all utterances go as separate segments (the backend applies its
    own delimiters). Inputs over the backend budget are truncated
    oldest-first and flagged.
    """
    if not context:
        raise ValueError("context must contain at least one utterance")
    segments = list(context) if use_context else [context[-1]]
    truncated = False
    budget = getattr(backend, "input_budget", 0) or 0
    if budget > 0:
        while len(segments) > 1 and sum(len(s) for s in segments) > budget:
            segments.pop(0)
            truncated = True
        if len(segments) == 1 and len(segments[0]) > budget:
            segments[0] = segments[0][-budget:]
            truncated = True
    probs = _normalize(backend.classify(segments))
    return SkillPrediction(
        probabilities=probs,
        predicted=_argmax(probs),
        used_context=use_context,
        truncated=truncated,
    )


# ---------------------------------------------------------------------------
# Keyword baseline backend
# ---------------------------------------------------------------------------

# (skill, pattern, weight): scored against the final segment at full weight
# and earlier segments at reduced weight. Weights tuned only to make the
# categories separable, not to win benchmarks.
_KEYWORD_RULES: tuple[tuple[HelpingSkill, str, float], ...] = (
    (HelpingSkill.OPEN_QUESTIONS, r"想聊些?什么|聊一聊|说说看|能(?:多|再)说说|什么样的|怎么看|为什么|什么感受", 2.0),
    (HelpingSkill.OPEN_QUESTIONS, r"\bwhat would you like\b|\bwhat do you (?:want|think)\b|\btell me (?:more|about|what)\b|\bhow do you feel about\b|\bcan you describe\b", 2.0),
    (HelpingSkill.OPEN_QUESTIONS, r"[?？]\s*$", 1.0),
    (HelpingSkill.FEELING_REFLECTION, r"你(?:觉得|感到|感觉|一定)(?:很|有些|特别)?(?:难过|委屈|焦虑|孤独|压抑|累|沮丧|愤怒|不安)|听起来.{0,12}(?:难受|辛苦|不容易|压力)", 3.0),
    (HelpingSkill.FEELING_REFLECTION, r"\byou (?:feel|must feel|might be feeling|seem)\b|\byou'?re (?:very |a bit |so )?(?:uncomfortable|uneasy|suffocated|overwhelmed)\b|\bfeel(?:ing)? (?:suffocated|uneasy|uncomfortable|anxious|sad|angry|lonely|overwhelmed|hurt)\b|\bthat sounds (?:hard|difficult|painful|exhausting)\b", 3.0),
    (HelpingSkill.RESTATEMENTS, r"你是说|你的意思是|也就是说|换句话说|听起来", 2.0),
    (HelpingSkill.RESTATEMENTS, r"\bit sounds like\b|\byou are saying\b|\byou'?re saying\b|\bit seems like\b|\bin other words\b|\bso you\b", 2.0),
    (HelpingSkill.INTERPRETATIONS, r"也许你|或许你|可能是因为|背后的原因|我猜想|说明你", 2.0),
    (HelpingSkill.INTERPRETATIONS, r"\bmaybe you\b|\bperhaps you?\b|\bI wonder if\b|\bbecause you\b.*\bmaybe\b|\bunderlying\b", 2.0),
    (HelpingSkill.DIRECT_GUIDANCE, r"建议你|你可以试着|试试看?|尝试一下|不妨|推荐你?", 2.5),
    (HelpingSkill.DIRECT_GUIDANCE, r"\byou should\b|\byou need to\b|\btry (?:to|now|this)\b|\bI would like you to\b|\bI recommend\b|\blet'?s try\b", 2.5),
    (HelpingSkill.INFORMATION_GIVING, r"据研究|研究表明|一般来说|通常情况下|资料显示|信息是", 2.0),
    (HelpingSkill.INFORMATION_GIVING, r"\bresearch shows\b|\bstudies show\b|\bthe fact is\b|\bprovides? (?:all )?the (?:relevant )?information\b|\bis located\b|\bit'?s on\b", 2.0),
    (HelpingSkill.IMMEDIACY, r"我现在(?:觉得|感到)|此刻我|在我们的关系里|我想告诉你我", 2.5),
    (HelpingSkill.IMMEDIACY, r"\bI feel\b.{0,40}\b(?:you|our|right now)\b|\bI'?m (?:feeling )?(?:a bit )?(?:anxious|surprised|interested)\b.{0,30}\byou\b|\bworking with you\b", 2.5),
    (HelpingSkill.SELF_DISCLOSURES, r"我也曾|我自己也|我年轻的时候|我有过类似", 2.5),
    (HelpingSkill.SELF_DISCLOSURES, r"\bwhen I (?:left|was|had|first)\b|\bI can tell you,? that when I\b|\bfor me,\b|\bI went through\b", 2.5),
    (HelpingSkill.CHALLENGE, r"另一方面你|可是你(?:又|却)|但你(?:又|却)|你一方面.{0,20}一方面", 2.5),
    (HelpingSkill.CHALLENGE, r"\bon the other hand,? you\b|\bbut you (?:also|really|said)\b|\byou have to decide for yourself\b", 2.5),
    (HelpingSkill.OTHERS, r"你好|再见|拜拜|谢谢|周末愉快|假期愉快|不用客气", 2.0),
    (HelpingSkill.OTHERS, r"\bhello\b|\bgoodbye\b|\bbye\b|\bthank you\b|\bthanks\b|\byou'?re welcome\b|\bhave a nice\b|\bthat'?s great\b|\bgood luck\b", 2.0),
)


class KeywordSkillClassifier:
    """Deterministic keyword/pattern baseline; works offline and in CI.

    The final segment scores at full weight; earlier context segments give
    a small assist. With no match at all, the mass falls on ``others``.
    """

    name = "keyword"
    input_budget = 100_000

    _CONTEXT_WEIGHT = 0.25

    def __init__(self) -> None:
        self._rules = [
            (skill, re.compile(pattern, re.IGNORECASE), weight)
            for skill, pattern, weight in _KEYWORD_RULES
        ]

    def classify(self, segments: Sequence[str]) -> dict[HelpingSkill, float]:
        if not segments:
            raise ValueError("no segments")
        scores = {skill: 0.0 for skill in HelpingSkill}
        for i, segment in enumerate(segments):
            weight = 1.0 if i == len(segments) - 1 else self._CONTEXT_WEIGHT
            for skill, pattern, rule_weight in self._rules:
                if pattern.search(segment):
                    scores[skill] += rule_weight * weight
        if sum(scores.values()) <= 0:
            scores[HelpingSkill.OTHERS] = 1.0
        return scores


# ---------------------------------------------------------------------------
# Instruction templates
# ---------------------------------------------------------------------------

_TEMPLATES_RESOURCE = "instruction_templates.json"
_templates_cache: dict[str, str] | None = None


def load_instruction_templates(path: str | Path | None = None) -> dict[str, str]:
    """Template file: key ``skill`` or ``skill.subtype``, value instruction."""
    global _templates_cache
    if path is None:
        if _templates_cache is None:
            raw = resources.files("stampsy.data").joinpath(_TEMPLATES_RESOURCE).read_text("utf-8")
            _templates_cache = dict(json.loads(raw))
        return _templates_cache
    return dict(json.loads(Path(path).read_text("utf-8")))


def skill_to_instruction(
    skill: HelpingSkill,
    subtype: GuidanceSubtype | None = None,
    templates: Mapping[str, str] | None = None,
) -> GoalInstruction:
    """Deterministic template lookup; total over the taxonomy."""
    if subtype is not None and skill is not HelpingSkill.DIRECT_GUIDANCE:
        raise ValueError("subtype is only valid with direct_guidance")
    if templates is None:
        templates = load_instruction_templates()
    key = f"{skill.value}.{subtype.value}" if subtype is not None else skill.value
    text = templates.get(key) or templates.get(skill.value)
    if text is None:
        raise ValueError(f"no instruction template for {key!r}")
    return GoalInstruction(text=text, source_skill=skill)


# ---------------------------------------------------------------------------
# Classification report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassMetrics:
    precision: float | None
    recall: float | None
    f1: float | None
    support: int


@dataclass(frozen=True)
class ClassificationReport:
    per_class: dict[HelpingSkill, ClassMetrics]
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float

    def to_dict(self) -> dict:
        return {
            "per_class": {
                skill.value: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                }
                for skill, m in self.per_class.items()
            },
            "weighted": {
                "precision": self.weighted_precision,
                "recall": self.weighted_recall,
                "f1": self.weighted_f1,
            },
        }


def classification_report(
    gold: Sequence[HelpingSkill], predicted: Sequence[HelpingSkill]
) -> ClassificationReport:
    """Per-skill precision/recall/F1 with support-weighted averages.

    Classes absent from the gold labels get null metrics and weight zero.
    """
    if len(gold) != len(predicted):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(predicted)} predicted")
    if not gold:
        raise ValueError("empty inputs")
    per_class: dict[HelpingSkill, ClassMetrics] = {}
    weighted = {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    total_support = 0
    for skill in HelpingSkill:
        support = sum(1 for g in gold if g is skill)
        if support == 0:
            per_class[skill] = ClassMetrics(None, None, None, 0)
            continue
        tp = sum(1 for g, p in zip(gold, predicted) if g is skill and p is skill)
        predicted_n = sum(1 for p in predicted if p is skill)
        precision = tp / predicted_n if predicted_n else 0.0
        recall = tp / support
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[skill] = ClassMetrics(precision, recall, f1, support)
        weighted["precision"] += support * precision
        weighted["recall"] += support * recall
        weighted["f1"] += support * f1
        total_support += support
    return ClassificationReport(
        per_class=per_class,
        weighted_precision=weighted["precision"] / total_support,
        weighted_recall=weighted["recall"] / total_support,
        weighted_f1=weighted["f1"] / total_support,
    )
