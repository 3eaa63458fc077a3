"""Domain types, corpus file I/O, and descriptive statistics.

A corpus is a set of dialogue sessions between a client and a counselor.
Counselor turns carry helping-skill goal labels (Hill's category system,
with direct guidance broken out into recommendation subtypes); client turns
carry behavior labels. Sessions serialize one-per-line as JSON (see
``load_corpus`` / ``save_corpus`` for the schema).

Token counting mixes character-level CJK with whitespace-split Latin runs;
see :func:`tokenize`.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .stsp import SpatioTemporalState


class Speaker(str, Enum):
    CLIENT = "client"
    COUNSELOR = "counselor"


class HelpingSkill(str, Enum):
    """Counselor helping skills; declaration order is the fixed tie-break
    order for classifier argmax."""

    IMMEDIACY = "immediacy"
    INTERPRETATIONS = "interpretations"
    SELF_DISCLOSURES = "self_disclosures"
    OPEN_QUESTIONS = "open_questions"
    FEELING_REFLECTION = "feeling_reflection"
    RESTATEMENTS = "restatements"
    INFORMATION_GIVING = "information_giving"
    DIRECT_GUIDANCE = "direct_guidance"
    CHALLENGE = "challenge"
    OTHERS = "others"


class GuidanceSubtype(str, Enum):
    PLACE = "place"
    RELAXATION = "relaxation"
    LIFESTYLE = "lifestyle"
    THERAPY = "therapy"
    MUSIC = "music"


class ClientBehavior(str, Enum):
    IMPEDANCE = "impedance"
    AGREEANCE = "agreeance"
    REASONABLE_INQUIRY = "reasonable_inquiry"
    NARRATION = "narration"
    COGNITIVE_BEHAVIORAL_EXPLORATION = "cognitive_behavioral_exploration"


class SessionStatus(str, Enum):
    OPEN = "open"
    WARNED = "warned"
    CLOSED = "closed"


#: Conversation-activity buckets used for the distinct-activities statistic.
#: The four knowledge-leaning skills have dedicated buckets; the remaining
#: skills fall into the empathetic bucket so that the buckets partition all
#: labeled counselor turns.
ACTIVITY_BY_SKILL: dict[HelpingSkill, str] = {
    HelpingSkill.IMMEDIACY: "diagnosis",
    HelpingSkill.INTERPRETATIONS: "qa",
    HelpingSkill.INFORMATION_GIVING: "knowledge_grounded",
    HelpingSkill.DIRECT_GUIDANCE: "recommendation",
}
_DEFAULT_ACTIVITY = "empathetic"


def activity_for_skill(skill: HelpingSkill) -> str:
    return ACTIVITY_BY_SKILL.get(skill, _DEFAULT_ACTIVITY)


@dataclass(frozen=True)
class GoalLabel:
    """Per-turn goal: a helping skill for counselor turns or a behavior for
    client turns. Exactly one of the two is set."""

    skill: HelpingSkill | None = None
    behavior: ClientBehavior | None = None
    guidance_subtype: GuidanceSubtype | None = None

    def __post_init__(self) -> None:
        if (self.skill is None) == (self.behavior is None):
            raise ValueError("exactly one of skill/behavior must be set")
        if self.guidance_subtype is not None and self.skill is not HelpingSkill.DIRECT_GUIDANCE:
            raise ValueError("guidance_subtype is only valid with direct_guidance")

    def to_dict(self) -> dict:
        if self.skill is not None:
            return {
                "skill": self.skill.value,
                "subtype": self.guidance_subtype.value if self.guidance_subtype else None,
            }
        return {"behavior": self.behavior.value}


@dataclass(frozen=True)
class Utterance:
    speaker: Speaker
    text: str
    turn_index: int
    goal: GoalLabel | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("utterance text is empty")
        if self.turn_index < 0:
            raise ValueError("turn_index must be non-negative")
        if self.goal is not None:
            if self.speaker is Speaker.COUNSELOR and self.goal.skill is None:
                raise ValueError("counselor turns take a skill goal")
            if self.speaker is Speaker.CLIENT and self.goal.behavior is None:
                raise ValueError("client turns take a behavior goal")

    def to_dict(self) -> dict:
        return {
            "speaker": self.speaker.value,
            "text": self.text,
            "goal": self.goal.to_dict() if self.goal else None,
        }


#: The nine case-conceptualization slots, in canonical order.
CCM_SLOTS: tuple[str, ...] = (
    "profile_background",
    "problem_presentation",
    "comorbidity",
    "stressors",
    "treatments_received",
    "strengths",
    "risk_protective_summary",
    "outcomes",
    "barriers",
)


@dataclass(frozen=True)
class CaseConceptualization:
    """Nine-slot clinical case summary attached to a session."""

    profile_background: str | None = None
    problem_presentation: str | None = None
    comorbidity: str | None = None
    stressors: str | None = None
    treatments_received: str | None = None
    strengths: str | None = None
    risk_protective_summary: str | None = None
    outcomes: str | None = None
    barriers: str | None = None

    def to_dict(self) -> dict:
        return {slot: getattr(self, slot) for slot in CCM_SLOTS}

    @classmethod
    def from_dict(cls, d: dict) -> "CaseConceptualization":
        unknown = set(d) - set(CCM_SLOTS)
        if unknown:
            raise ValueError(f"unknown conceptualization slots: {sorted(unknown)}")
        return cls(**{slot: d.get(slot) for slot in CCM_SLOTS})


class SessionClosedError(RuntimeError):
    """Raised on any attempt to mutate a closed session."""


@dataclass
class DialogueSession:
    """One counseling meeting: ordered utterances plus session-level state.

    Lifecycle: open -> warned -> closed, or open -> closed. Once closed no
    utterance may be appended.
    """

    session_id: str
    utterances: list[Utterance] = field(default_factory=list)
    st_state: SpatioTemporalState | None = None
    conceptualization: CaseConceptualization | None = None
    recordings: list = field(default_factory=list)
    status: SessionStatus = SessionStatus.OPEN
    max_turns: int = 20
    created_at: float = 0.0

    def __post_init__(self) -> None:
        if self.max_turns < 1:
            raise ValueError("max_turns must be positive")

    @property
    def client_turns(self) -> list[Utterance]:
        return [u for u in self.utterances if u.speaker is Speaker.CLIENT]

    @property
    def counselor_turns(self) -> list[Utterance]:
        return [u for u in self.utterances if u.speaker is Speaker.COUNSELOR]

    @property
    def next_turn_index(self) -> int:
        return self.utterances[-1].turn_index + 1 if self.utterances else 0

    def append(self, utterance: Utterance, strict_alternation: bool = True) -> None:
        if self.status is SessionStatus.CLOSED:
            raise SessionClosedError(f"session {self.session_id} is closed")
        if self.utterances:
            last = self.utterances[-1]
            if utterance.turn_index <= last.turn_index:
                raise ValueError(
                    f"turn_index {utterance.turn_index} not after {last.turn_index}"
                )
            if strict_alternation and utterance.speaker is last.speaker:
                raise ValueError(
                    f"consecutive {utterance.speaker.value} turns at index {utterance.turn_index}"
                )
        self.utterances.append(utterance)

    def mark_warned(self) -> None:
        if self.status is not SessionStatus.OPEN:
            raise ValueError(f"cannot warn a {self.status.value} session")
        self.status = SessionStatus.WARNED

    def close(self) -> None:
        if self.status is SessionStatus.CLOSED:
            raise SessionClosedError(f"session {self.session_id} is already closed")
        self.status = SessionStatus.CLOSED

    def is_alternating(self) -> bool:
        return all(
            a.speaker is not b.speaker
            for a, b in zip(self.utterances, self.utterances[1:])
        )

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "st": (self.st_state or SpatioTemporalState()).to_dict(),
            "ccm": self.conceptualization.to_dict() if self.conceptualization else None,
            "turns": [u.to_dict() for u in self.utterances],
        }


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------

_CJK_RANGES = (
    (0x3000, 0x303F),  # CJK symbols and punctuation
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF),
    (0xFF00, 0xFFEF),  # fullwidth forms
)


def _is_cjk(ch: str) -> bool:
    code = ord(ch)
    return any(lo <= code <= hi for lo, hi in _CJK_RANGES)


def tokenize(text: str, mode: str = "mixed") -> list[str]:
    """Split text into tokens.

    ``mixed`` (default): each CJK character (including CJK punctuation and
    fullwidth forms) is one token; everything between CJK characters is
    whitespace-split. ``char``: every non-space character is a token.
    ``whitespace``: plain split.
    """
    if mode == "whitespace":
        return text.split()
    if mode == "char":
        return [ch for ch in text if not ch.isspace()]
    if mode != "mixed":
        raise ValueError(f"unknown token mode {mode!r}")
    tokens: list[str] = []
    buf: list[str] = []
    for ch in text:
        if _is_cjk(ch):
            if buf:
                tokens.extend("".join(buf).split())
                buf = []
            tokens.append(ch)
        else:
            buf.append(ch)
    if buf:
        tokens.extend("".join(buf).split())
    return tokens


def count_tokens(text: str, mode: str = "mixed") -> int:
    return len(tokenize(text, mode))


# ---------------------------------------------------------------------------
# Corpus I/O
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LoadError:
    line: int
    field: str
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.field}: {self.message}"


@dataclass
class LoadReport:
    """Parsed sessions plus structured errors and warnings; malformed lines
    are reported here, never silently dropped."""

    sessions: list[DialogueSession] = field(default_factory=list)
    errors: list[LoadError] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def _parse_goal(
    raw: dict | None, speaker: Speaker, line: int, warnings: list[str]
) -> GoalLabel | None:
    if raw is None:
        return None
    if speaker is Speaker.CLIENT:
        if "behavior" not in raw:
            raise _SchemaError("goal.behavior", "client goal must carry 'behavior'")
        try:
            return GoalLabel(behavior=ClientBehavior(raw["behavior"]))
        except ValueError:
            raise _SchemaError("goal.behavior", f"unknown behavior {raw['behavior']!r}")
    if "skill" not in raw:
        raise _SchemaError("goal.skill", "counselor goal must carry 'skill'")
    skill_raw = raw["skill"]
    try:
        skill = HelpingSkill(skill_raw)
    except ValueError:
        # Unrecognized labels fall into the catch-all bucket with a warning.
        warnings.append(
            f"line {line}: unrecognized skill label {skill_raw!r} mapped to 'others'"
        )
        skill = HelpingSkill.OTHERS
    subtype_raw = raw.get("subtype")
    subtype = None
    if subtype_raw is not None:
        try:
            subtype = GuidanceSubtype(subtype_raw)
        except ValueError:
            raise _SchemaError("goal.subtype", f"unknown subtype {subtype_raw!r}")
        if skill is not HelpingSkill.DIRECT_GUIDANCE:
            raise _SchemaError("goal.subtype", "subtype requires skill=direct_guidance")
    return GoalLabel(skill=skill, guidance_subtype=subtype)


class _SchemaError(Exception):
    def __init__(self, field_name: str, message: str):
        super().__init__(message)
        self.field_name = field_name
        self.message = message


def _parse_session(record: dict, line: int, warnings: list[str]) -> DialogueSession:
    if not isinstance(record, dict):
        raise _SchemaError("", "record is not a JSON object")
    session_id = record.get("session_id")
    if not isinstance(session_id, str) or not session_id:
        raise _SchemaError("session_id", "missing or empty")
    turns = record.get("turns")
    if not isinstance(turns, list):
        raise _SchemaError("turns", "missing or not a list")

    st_state = None
    if record.get("st") is not None:
        try:
            st_state = SpatioTemporalState.from_dict(record["st"])
        except ValueError as exc:
            raise _SchemaError("st", str(exc))
        if st_state.is_empty:
            st_state = None

    ccm = None
    if record.get("ccm") is not None:
        try:
            ccm = CaseConceptualization.from_dict(record["ccm"])
        except (TypeError, ValueError) as exc:
            raise _SchemaError("ccm", str(exc))

    session = DialogueSession(
        session_id=session_id, st_state=st_state, conceptualization=ccm
    )
    for i, turn in enumerate(turns):
        if not isinstance(turn, dict):
            raise _SchemaError(f"turns[{i}]", "turn is not an object")
        if "speaker" not in turn:
            raise _SchemaError("speaker", f"missing in turns[{i}]")
        try:
            speaker = Speaker(turn["speaker"])
        except ValueError:
            raise _SchemaError("speaker", f"unknown speaker {turn['speaker']!r} in turns[{i}]")
        text = turn.get("text")
        if not isinstance(text, str) or not text.strip():
            raise _SchemaError("text", f"missing or empty in turns[{i}]")
        goal = _parse_goal(turn.get("goal"), speaker, line, warnings)
        utt = Utterance(speaker=speaker, text=text, turn_index=i, goal=goal)
        # Real transcripts contain consecutive same-speaker messages; load
        # them with a warning instead of rejecting the session.
        session.append(utt, strict_alternation=False)
    if not session.is_alternating():
        warnings.append(f"line {line}: session {session_id!r} has non-alternating speakers")
    return session


def load_corpus(path: str | Path) -> LoadReport:
    """Parse a JSON-Lines corpus file into sessions.

    Schema per line::

        {"session_id": str,
         "st": {"time_of_day": str|null, "weather": str|null,
                "season": str|null, "location": str|null} | null,
         "ccm": {nine slot keys} | null,
         "turns": [{"speaker": "client"|"counselor", "text": str,
                    "goal": {"skill": str, "subtype": str|null}
                          | {"behavior": str} | null}]}

    Raises FileNotFoundError for a missing file; schema violations and
    duplicate session ids are collected in the report.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    report = LoadReport()
    seen_ids: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, raw_line in enumerate(fh, start=1):
            if not raw_line.strip():
                continue
            try:
                record = json.loads(raw_line)
            except json.JSONDecodeError as exc:
                report.errors.append(LoadError(line_no, "", f"invalid JSON: {exc.msg}"))
                continue
            try:
                session = _parse_session(record, line_no, report.warnings)
            except _SchemaError as exc:
                report.errors.append(LoadError(line_no, exc.field_name, exc.message))
                continue
            if session.session_id in seen_ids:
                report.errors.append(
                    LoadError(line_no, "session_id", f"duplicate {session.session_id!r}")
                )
                continue
            seen_ids.add(session.session_id)
            report.sessions.append(session)
    return report


def save_corpus(sessions: Iterable[DialogueSession], path: str | Path) -> None:
    """Write sessions as JSON-Lines using the load_corpus schema."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for session in sessions:
            fh.write(json.dumps(session.to_dict(), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


#: Role spellings accepted by the external-export converter.
_CLIENT_ROLES = frozenset({"client", "user", "visitor", "patient"})
_COUNSELOR_ROLES = frozenset({"counselor", "assistant", "therapist", "helper", "bot"})


def convert_chat_records(records: Iterable[dict]) -> LoadReport:
    """Convert generic role/content chat exports into corpus sessions.

    Accepts an iterable of ``{"id": str, "messages": [{"role", "content"}]}``
    records (the de-facto export shape of chat datasets) and maps roles onto
    client/counselor. Goals and spatiotemporal state are left unset; records
    with unknown roles or empty content are reported, not dropped silently.
    """
    report = LoadReport()
    seen: set[str] = set()
    for i, record in enumerate(records, start=1):
        session_id = record.get("id") or record.get("session_id") or f"converted-{i}"
        if session_id in seen:
            report.errors.append(LoadError(i, "id", f"duplicate {session_id!r}"))
            continue
        messages = record.get("messages") or record.get("turns") or []
        session = DialogueSession(session_id=session_id)
        try:
            for j, message in enumerate(messages):
                role = str(message.get("role", "")).lower()
                if role in _CLIENT_ROLES:
                    speaker = Speaker.CLIENT
                elif role in _COUNSELOR_ROLES:
                    speaker = Speaker.COUNSELOR
                else:
                    raise _SchemaError("role", f"unknown role {role!r} in messages[{j}]")
                text = message.get("content") or message.get("text")
                if not isinstance(text, str) or not text.strip():
                    raise _SchemaError("content", f"missing or empty in messages[{j}]")
                session.append(
                    Utterance(speaker=speaker, text=text, turn_index=j),
                    strict_alternation=False,
                )
        except _SchemaError as exc:
            report.errors.append(LoadError(i, exc.field_name, exc.message))
            continue
        if not session.is_alternating():
            report.warnings.append(
                f"record {i}: session {session_id!r} has non-alternating speakers"
            )
        seen.add(session_id)
        report.sessions.append(session)
    return report


def split_sessions(
    sessions: Sequence[DialogueSession],
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> list[list[DialogueSession]]:
    """Seeded random split of sessions into len(ratios) disjoint parts."""
    if not ratios or any(r < 0 for r in ratios):
        raise ValueError("ratios must be non-negative")
    total = sum(ratios)
    if total <= 0:
        raise ValueError("ratios must sum to a positive value")
    order = list(sessions)
    random.Random(seed).shuffle(order)
    bounds = []
    acc = 0.0
    for r in ratios[:-1]:
        acc += r / total
        bounds.append(round(acc * len(order)))
    bounds.append(len(order))
    parts: list[list[DialogueSession]] = []
    start = 0
    for b in bounds:
        parts.append(order[start:b])
        start = b
    return parts


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GoalTypeStats:
    count: int
    mean_tokens: float | None


@dataclass
class StatsReport:
    """Descriptive corpus statistics.

    A "goal" is any utterance with a non-null goal label (client behaviors
    and counselor skills both count). Activities bucket counselor skills
    via :func:`activity_for_skill`.
    """

    dialogues: int
    client_utterances: int
    counselor_utterances: int
    mean_tokens_client: float | None
    mean_tokens_counselor: float | None
    mean_goals: float | None
    max_goals: int | None
    min_goals: int | None
    mean_distinct_skills: float | None
    mean_distinct_activities: float | None
    per_skill: dict[str, GoalTypeStats]
    per_behavior: dict[str, GoalTypeStats]
    per_subtype: dict[str, GoalTypeStats]
    per_activity: dict[str, GoalTypeStats]

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    def render(self) -> str:
        def fmt(x):
            if x is None:
                return "-"
            if isinstance(x, float):
                return f"{x:.2f}"
            return str(x)

        lines = [
            f"# of dialogues                       {fmt(self.dialogues)}",
            f"# of utterances client/counselor     {fmt(self.client_utterances)}/{fmt(self.counselor_utterances)}",
            f"Avg. # of tokens per client          {fmt(self.mean_tokens_client)}",
            f"Avg. # of tokens per counselor       {fmt(self.mean_tokens_counselor)}",
            f"Avg. # of goals per dialogue         {fmt(self.mean_goals)}",
            f"Max. # of goals per dialogue         {fmt(self.max_goals)}",
            f"Min. # of goals per dialogue         {fmt(self.min_goals)}",
            f"Avg. # of distinct skills            {fmt(self.mean_distinct_skills)}",
            f"Avg. # of distinct activities        {fmt(self.mean_distinct_activities)}",
            "",
            "Per goal type (counselor skills):",
        ]
        for name, st in self.per_skill.items():
            lines.append(f"  {name:<24} n={st.count:<6} avg_len={fmt(st.mean_tokens)}")
        if self.per_subtype:
            lines.append("Direct-guidance subtypes:")
            for name, st in self.per_subtype.items():
                lines.append(f"  {name:<24} n={st.count:<6} avg_len={fmt(st.mean_tokens)}")
        return "\n".join(lines)


def _mean(values: Sequence[float]) -> float | None:
    return sum(values) / len(values) if values else None


def corpus_stats(
    sessions: Sequence[DialogueSession], token_mode: str = "mixed"
) -> StatsReport:
    """Compute corpus statistics; an empty corpus yields zeros and nulls.

    Permutation-invariant over session order.
    """
    client_lens: list[int] = []
    counselor_lens: list[int] = []
    goals_per_dialogue: list[int] = []
    distinct_skills: list[int] = []
    distinct_activities: list[int] = []
    skill_lens: dict[str, list[int]] = {s.value: [] for s in HelpingSkill}
    behavior_lens: dict[str, list[int]] = {b.value: [] for b in ClientBehavior}
    subtype_lens: dict[str, list[int]] = {g.value: [] for g in GuidanceSubtype}
    activity_lens: dict[str, list[int]] = {}

    for session in sessions:
        goals = 0
        skills_here: set[HelpingSkill] = set()
        activities_here: set[str] = set()
        for utt in session.utterances:
            n_tokens = count_tokens(utt.text, token_mode)
            if utt.speaker is Speaker.CLIENT:
                client_lens.append(n_tokens)
            else:
                counselor_lens.append(n_tokens)
            if utt.goal is None:
                continue
            goals += 1
            if utt.goal.skill is not None:
                skill = utt.goal.skill
                skills_here.add(skill)
                skill_lens[skill.value].append(n_tokens)
                activity = activity_for_skill(skill)
                activities_here.add(activity)
                activity_lens.setdefault(activity, []).append(n_tokens)
                if utt.goal.guidance_subtype is not None:
                    subtype_lens[utt.goal.guidance_subtype.value].append(n_tokens)
            else:
                behavior_lens[utt.goal.behavior.value].append(n_tokens)
        goals_per_dialogue.append(goals)
        distinct_skills.append(len(skills_here))
        distinct_activities.append(len(activities_here))

    def table(lens: dict[str, list[int]]) -> dict[str, GoalTypeStats]:
        return {
            name: GoalTypeStats(count=len(values), mean_tokens=_mean(values))
            for name, values in lens.items()
        }

    return StatsReport(
        dialogues=len(sessions),
        client_utterances=len(client_lens),
        counselor_utterances=len(counselor_lens),
        mean_tokens_client=_mean(client_lens),
        mean_tokens_counselor=_mean(counselor_lens),
        mean_goals=_mean(goals_per_dialogue) if sessions else None,
        max_goals=max(goals_per_dialogue) if sessions else None,
        min_goals=min(goals_per_dialogue) if sessions else None,
        mean_distinct_skills=_mean(distinct_skills) if sessions else None,
        mean_distinct_activities=_mean(distinct_activities) if sessions else None,
        per_skill=table(skill_lens),
        per_behavior=table(behavior_lens),
        per_subtype=table(subtype_lens),
        per_activity=table(dict(sorted(activity_lens.items()))),
    )
