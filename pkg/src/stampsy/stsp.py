"""Spatiotemporal state extraction and emotional-impact stamps.

The extractor is rule-driven: an editable table of trigger patterns maps
text cues to one of four state fields (time of day, weather, season,
location). A stamp renders the extracted state as a short natural-language
statement of its likely emotional impact, built from a fixed impact table;
the stamp text is injected into generation prompts downstream.

Everything here is a pure function over immutable rule tables, so the
module is safe for concurrent use.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence


class TimeOfDay(str, Enum):
    MORNING = "morning"
    AFTERNOON = "afternoon"
    EVENING = "evening"
    LATE_NIGHT = "late_night"


class Weather(str, Enum):
    RAINY = "rainy"
    HEATWAVE = "heatwave"
    SUNNY = "sunny"


class Season(str, Enum):
    SPRING = "spring"
    SUMMER = "summer"
    AUTUMN = "autumn"
    WINTER = "winter"


class Location(str, Enum):
    HOME = "home"
    SCHOOL = "school"
    COMPANY = "company"
    OUTDOORS = "outdoors"


# Field order is fixed; stamp sentences are concatenated in this order.
STATE_FIELDS: tuple[str, ...] = ("time_of_day", "weather", "season", "location")

FIELD_ENUMS: dict[str, type[Enum]] = {
    "time_of_day": TimeOfDay,
    "weather": Weather,
    "season": Season,
    "location": Location,
}

#: Reverse index: enum value string -> owning field name.
FIELD_BY_VALUE: dict[str, str] = {
    member.value: field_name
    for field_name, enum_cls in FIELD_ENUMS.items()
    for member in enum_cls
}


@dataclass(frozen=True)
class Evidence:
    """A matched text span supporting one extracted state field."""

    field: str
    span: str


@dataclass(frozen=True)
class SpatioTemporalState:
    """Extracted time/location/weather/season state of a conversation.

    Every non-null field carries at least one :class:`Evidence` span; states
    deserialized from annotated corpora get synthetic evidence marking the
    annotation as the source.
    """

    time_of_day: TimeOfDay | None = None
    weather: Weather | None = None
    season: Season | None = None
    location: Location | None = None
    evidence: tuple[Evidence, ...] = ()

    def __post_init__(self) -> None:
        covered = {ev.field for ev in self.evidence}
        for field_name in STATE_FIELDS:
            if getattr(self, field_name) is not None and field_name not in covered:
                raise ValueError(
                    f"state field {field_name!r} is set but has no evidence span"
                )

    @property
    def is_empty(self) -> bool:
        return all(getattr(self, f) is None for f in STATE_FIELDS)

    def non_null_fields(self) -> dict[str, str]:
        return {
            f: getattr(self, f).value
            for f in STATE_FIELDS
            if getattr(self, f) is not None
        }

    def to_dict(self, include_evidence: bool = False) -> dict:
        d: dict = {
            f: (getattr(self, f).value if getattr(self, f) is not None else None)
            for f in STATE_FIELDS
        }
        if include_evidence:
            d["evidence"] = [[ev.field, ev.span] for ev in self.evidence]
        return d

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "SpatioTemporalState":
        """Build a state from a plain mapping (e.g. a corpus ``st`` object).

        Annotated fields get a synthetic evidence span since the corpus does
        not store the original text cue.
        """
        if d is None:
            return cls()
        values: dict = {}
        evidence: list[Evidence] = []
        for field_name in STATE_FIELDS:
            raw = d.get(field_name)
            if raw is None:
                continue
            enum_cls = FIELD_ENUMS[field_name]
            try:
                values[field_name] = enum_cls(raw)
            except ValueError as exc:
                allowed = [m.value for m in enum_cls]
                raise ValueError(
                    f"invalid {field_name} value {raw!r}; expected one of {allowed}"
                ) from exc
            evidence.append(Evidence(field_name, f"annotated:{raw}"))
        for ev in d.get("evidence", []) or []:
            evidence.append(Evidence(ev[0], ev[1]))
        # Deduplicate while preserving order.
        seen = set()
        unique = tuple(ev for ev in evidence if not (ev in seen or seen.add(ev)))
        return cls(**values, evidence=unique)


@dataclass(frozen=True)
class Stamp:
    """Natural-language statement of the state's emotional impact."""

    text: str
    sources: tuple[str, ...] = ()

    @property
    def is_empty(self) -> bool:
        return not self.text


@dataclass(frozen=True)
class ExtractionRule:
    """One trigger pattern mapping a text cue to a state field value.

    ``priority`` separates explicit mentions (higher) from activity
    inferences (lower); within one utterance the higher priority wins.
    """

    pattern: re.Pattern
    field: str
    value: str
    priority: int = 0

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExtractionRule":
        field_name = d["field"]
        if field_name not in FIELD_ENUMS:
            raise ValueError(f"unknown state field {field_name!r}")
        value = d["value"]
        FIELD_ENUMS[field_name](value)  # raises on unknown value
        return cls(
            pattern=re.compile(d["pattern"], re.IGNORECASE),
            field=field_name,
            value=value,
            priority=int(d.get("priority", 0)),
        )


_DATA_PACKAGE = "stampsy.data"
_RULES_RESOURCE = "stsp_rules.json"
_IMPACTS_RESOURCE = "stamp_impacts.json"

_default_rules_cache: tuple[ExtractionRule, ...] | None = None
_default_impacts_cache: dict[str, str] | None = None


def load_rules(path: str | Path | None = None) -> tuple[ExtractionRule, ...]:
    """Load extraction rules from ``path`` or the bundled default table."""
    global _default_rules_cache
    if path is None:
        if _default_rules_cache is None:
            raw = resources.files(_DATA_PACKAGE).joinpath(_RULES_RESOURCE).read_text("utf-8")
            _default_rules_cache = tuple(
                ExtractionRule.from_dict(d) for d in json.loads(raw)
            )
        return _default_rules_cache
    data = json.loads(Path(path).read_text("utf-8"))
    return tuple(ExtractionRule.from_dict(d) for d in data)


def load_impacts(path: str | Path | None = None) -> dict[str, str]:
    """Load the value -> impact-sentence table used by :func:`make_stamp`."""
    global _default_impacts_cache
    if path is None:
        if _default_impacts_cache is None:
            raw = resources.files(_DATA_PACKAGE).joinpath(_IMPACTS_RESOURCE).read_text("utf-8")
            _default_impacts_cache = dict(json.loads(raw))
        return _default_impacts_cache
    return dict(json.loads(Path(path).read_text("utf-8")))


def extract_state(
    context: Sequence[str],
    prior: SpatioTemporalState | None = None,
    rules: Sequence[ExtractionRule] | None = None,
) -> SpatioTemporalState:
    """Extract a spatiotemporal state from ordered utterance texts.

    Per field, the winning match is the one latest in the context; within a
    single utterance higher-priority rules (explicit mentions) beat lower
    ones (activity inferences), then the later match position wins. Fields
    from ``prior`` persist unless a new match contradicts them.
    """
    if not context:
        raise ValueError("context must contain at least one utterance")
    if rules is None:
        rules = load_rules()

    # field -> ((utterance_idx, priority, match_start), matched span, value)
    best: dict[str, tuple[tuple[int, int, int], str, str]] = {}
    for idx, text in enumerate(context):
        for rule in rules:
            last = None
            for m in rule.pattern.finditer(text):
                last = m
            if last is None:
                continue
            key = (idx, rule.priority, last.start())
            current = best.get(rule.field)
            if current is None or key > current[0]:
                best[rule.field] = (key, last.group(0), rule.value)

    values: dict = {}
    evidence: list[Evidence] = []
    for field_name in STATE_FIELDS:
        if field_name in best:
            _, span, value = best[field_name]
            values[field_name] = FIELD_ENUMS[field_name](value)
            evidence.append(Evidence(field_name, span))
        elif prior is not None and getattr(prior, field_name) is not None:
            values[field_name] = getattr(prior, field_name)
            carried = [ev for ev in prior.evidence if ev.field == field_name]
            evidence.extend(carried or [Evidence(field_name, "prior")])
    return SpatioTemporalState(**values, evidence=tuple(evidence))


def make_stamp(
    state: SpatioTemporalState,
    impacts: Mapping[str, str] | None = None,
) -> Stamp:
    """Render the emotional-impact stamp for ``state``.

    Impact sentences are joined in fixed field order; an all-null state
    yields an empty stamp.
    """
    if impacts is None:
        impacts = load_impacts()
    parts: list[str] = []
    sources: list[str] = []
    for field_name in STATE_FIELDS:
        member = getattr(state, field_name)
        if member is None:
            continue
        sentence = impacts.get(member.value)
        if sentence is None:
            raise ValueError(f"no impact sentence for {field_name}={member.value!r}")
        parts.append(sentence)
        sources.append(field_name)
    return Stamp(text=" ".join(parts), sources=tuple(sources))


class LossValue(float):
    """A float loss that remembers which targets had zero probability."""

    zero_prob_indices: tuple[int, ...]

    def __new__(cls, value: float, zero_prob_indices: tuple[int, ...] = ()):
        obj = super().__new__(cls, value)
        obj.zero_prob_indices = zero_prob_indices
        return obj


def stamp_nll_loss(
    token_probabilities: Sequence[Mapping[str, float] | Sequence[float]],
    target_tokens: Sequence,
) -> LossValue:
    """Mean negative log-likelihood of ``target_tokens`` under per-step
    probability distributions.

    Each distribution is either a token->probability mapping (targets are
    tokens) or a plain probability vector (targets are indices). Mean
    reduction keeps the loss comparable across sequence lengths. A zero
    probability on any target yields ``inf`` with the offending indices
    recorded on the returned value.
    """
    if len(token_probabilities) != len(target_tokens):
        raise ValueError(
            f"length mismatch: {len(token_probabilities)} distributions for "
            f"{len(target_tokens)} targets"
        )
    if not target_tokens:
        raise ValueError("empty sequence")

    total = 0.0
    zero_indices: list[int] = []
    for i, (dist, target) in enumerate(zip(token_probabilities, target_tokens)):
        if isinstance(dist, Mapping):
            mass = sum(dist.values())
            p = dist.get(target, 0.0)
        else:
            mass = sum(dist)
            p = dist[target] if 0 <= target < len(dist) else 0.0
        if abs(mass - 1.0) > 1e-6:
            raise ValueError(f"distribution at index {i} sums to {mass}, not 1")
        if p <= 0.0:
            zero_indices.append(i)
        else:
            total += -math.log(p)
    if zero_indices:
        return LossValue(math.inf, tuple(zero_indices))
    return LossValue(total / len(target_tokens))


def _state_matches(gold: SpatioTemporalState, predicted: SpatioTemporalState) -> bool:
    return all(
        getattr(predicted, f) == getattr(gold, f)
        for f in STATE_FIELDS
        if getattr(gold, f) is not None
    )


def stsp_accuracy(
    gold: Sequence[SpatioTemporalState],
    predicted: Sequence[SpatioTemporalState],
) -> float:
    """State-level accuracy: a prediction is correct iff every non-null gold
    field matches exactly."""
    if len(gold) != len(predicted):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(predicted)} predicted")
    if not gold:
        raise ValueError("empty inputs")
    correct = sum(1 for g, p in zip(gold, predicted) if _state_matches(g, p))
    return correct / len(gold)


def stsp_field_accuracy(
    gold: Sequence[SpatioTemporalState],
    predicted: Sequence[SpatioTemporalState],
) -> float | None:
    """Field-level accuracy over all non-null gold fields (secondary metric).

    Returns None when no gold field is set anywhere.
    """
    if len(gold) != len(predicted):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(predicted)} predicted")
    total = 0
    correct = 0
    for g, p in zip(gold, predicted):
        for f in STATE_FIELDS:
            if getattr(g, f) is None:
                continue
            total += 1
            if getattr(p, f) == getattr(g, f):
                correct += 1
    if total == 0:
        return None
    return correct / total


def merge_states(
    base: SpatioTemporalState, update: SpatioTemporalState
) -> SpatioTemporalState:
    """Overlay ``update`` on ``base``: non-null update fields win."""
    values: dict = {}
    evidence: list[Evidence] = []
    for field_name in STATE_FIELDS:
        new = getattr(update, field_name)
        old = getattr(base, field_name)
        chosen = new if new is not None else old
        if chosen is None:
            continue
        values[field_name] = chosen
        source = update if new is not None else base
        carried = [ev for ev in source.evidence if ev.field == field_name]
        evidence.extend(carried or [Evidence(field_name, "prior")])
    return SpatioTemporalState(**values, evidence=tuple(evidence))
