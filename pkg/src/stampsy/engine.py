"""End-to-end dialogue orchestration.

Each turn runs a fixed pipeline: classify the next helping skill, convert
it to a goal instruction, extract the spatiotemporal state and render its
stamp, retrieve knowledge (gated by the skill), assemble the prompt,
generate the counselor response, write a six-section case recording, and
apply process control (end-of-session warning and closure).

Turns are atomic: a chat-backend failure leaves the session exactly as it
was. Distinct sessions may progress concurrently; a single session's turns
are strictly serialized by the caller (the HTTP service holds a per-session
lock).
"""

from __future__ import annotations

import logging
import re
import time
import uuid
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .backends import BackendError, RECORDING_PROMPT_CUE
from .corpus import (
    DialogueSession,
    GoalLabel,
    HelpingSkill,
    SessionClosedError,
    SessionStatus,
    Speaker,
    Utterance,
    count_tokens,
)
from .events import EventLog, EventType
from .kstore import KnowledgeStore, RetrievalResult, retrieve
from .skills import (
    ClassifierBackend,
    GoalInstruction,
    SkillPrediction,
    classify_skill,
    skill_to_instruction,
)
from .stsp import ExtractionRule, SpatioTemporalState, Stamp, extract_state, make_stamp

logger = logging.getLogger(__name__)


HELPER_PREAMBLE = (
    "You are a helper giving the client counseling or psychotherapy. Your "
    "personality traits include listening attentiveness, empathy, "
    "non-judgment, encouraging exploration of thoughts and emotions, helping "
    "others gain new perspectives on problems, and motivating others to take "
    "action to improve their lives. You have three key features that make "
    "for an effective therapist: empathy, managing counter-transference, and "
    "the ability to tolerate ambiguity."
)

OPENING_TEMPLATE = (
    "We will spend some time together, and our goal is to help you explore "
    "any issues you wish to discuss. I'm your AI-based helper. This "
    "conversation may be recorded and reviewed by my supervisor, and all "
    "recordings will be deleted after review. Everything you say will be "
    "strictly confidential, with a few exceptions - if you reveal something "
    "related to abuse, if you intend to harm yourself or others, or if you "
    "suspect that a child or an elderly person is being abused, I will have "
    "to break the confidentiality rule. Is there anything else you want to "
    "know about me or the consultation process? What would you like to talk "
    "about today?"
)

CLOSING_TEMPLATE = (
    "Our session is coming to an end. How do you feel about the session and "
    "the work we have done together? Have a nice day, and take good care of "
    "yourself!"
)

#: Six reflection questions answered after every counselor turn.
RECORDING_QUESTIONS: tuple[tuple[str, str], ...] = (
    ("Explicit Content", "What did the client talk about?"),
    ("Implicit Content", "Is there any underlying meaning to what the client talked about?"),
    ("Defense and Barriers to Change", "How does the client avoid anxiety?"),
    (
        "Distortion",
        "In what ways does the client's reaction to you mirror their reactions "
        "to significant others in their life?",
    ),
    (
        "Countertransference",
        "In what ways have your emotions, attitudes, and behavioral responses "
        "been stimulated by your interactions with the client?",
    ),
    (
        "Personal Assessment",
        "How do you evaluate your response? If possible, what different "
        "responses would you make? Why?",
    ),
)

RECORDING_SECTIONS: tuple[str, ...] = (
    "explicit_content",
    "implicit_content",
    "defense_barriers",
    "distortions",
    "countertransference",
    "personal_assessment",
)

SECTION_HEADERS = {
    "preamble": "[Helper Profile]",
    "context": "[Dialogue Context]",
    "knowledge": "[Reference Knowledge]",
    "stamp": "[Spatiotemporal Stamp]",
    "instruction": "[Goal Instruction]",
}

SECTION_ORDER: tuple[str, ...] = ("preamble", "context", "knowledge", "stamp", "instruction")


class ProcessSignal(str, Enum):
    CONTINUE = "continue"
    WARN_ENDING = "warn_ending"
    END = "end"


@dataclass(frozen=True)
class CaseRecording:
    """Six-part per-turn self-reflection on the exchange."""

    explicit_content: str
    implicit_content: str
    defense_barriers: str
    distortions: str
    countertransference: str
    personal_assessment: str
    turn_index: int

    def __post_init__(self) -> None:
        for section in RECORDING_SECTIONS:
            if not getattr(self, section).strip():
                raise ValueError(f"recording section {section!r} is empty")

    def sections(self) -> dict[str, str]:
        return {section: getattr(self, section) for section in RECORDING_SECTIONS}


class RecordingParseError(ValueError):
    pass


def build_recording_prompt(client_text: str, counselor_text: str) -> str:
    lines = [
        "Reflecting on the question-and-answer exchange below as a helper, "
        f"{RECORDING_PROMPT_CUE}, one "
        "per line, in the format 'N. Question title: answer'.",
        "",
        f"Client: {client_text}",
        f"Helper: {counselor_text}",
        "",
    ]
    for i, (title, question) in enumerate(RECORDING_QUESTIONS, start=1):
        lines.append(f"{i}. {title}: {question}")
    return "\n".join(lines)


def parse_recording(text: str, turn_index: int) -> CaseRecording:
    """Parse a backend reflection into six sections.

    Accepts numbered ('1. Explicit Content: ...') or bare-title lines;
    raises RecordingParseError when any section is missing or empty.
    """
    values: dict[str, str] = {}
    for i, ((title, _), section) in enumerate(zip(RECORDING_QUESTIONS, RECORDING_SECTIONS), start=1):
        pattern = re.compile(
            rf"(?:^|\n)\s*(?:{i}\s*[.、]\s*)?{re.escape(title)}\s*[:：]\s*(.*?)(?=\n\s*(?:\d\s*[.、])|\Z)",
            re.DOTALL,
        )
        m = pattern.search(text)
        if m is None or not m.group(1).strip():
            raise RecordingParseError(f"missing section {title!r}")
        values[section] = m.group(1).strip()
    return CaseRecording(turn_index=turn_index, **values)


# ---------------------------------------------------------------------------
# Prompt assembly
# ---------------------------------------------------------------------------


class PromptBudgetError(RuntimeError):
    """Raised when the mandatory prompt sections alone exceed the budget."""


@dataclass(frozen=True)
class AssembledPrompt:
    """Prompt sections in fixed order: preamble, context, knowledge, stamp,
    goal instruction. The knowledge section disappears entirely when
    retrieval was gated or empty."""

    preamble: str
    context_lines: tuple[str, ...]
    knowledge_lines: tuple[str, ...]
    stamp_text: str
    instruction_text: str
    truncated: bool = False

    def _body(self) -> str:
        parts = [
            SECTION_HEADERS["context"],
            "\n".join(self.context_lines),
        ]
        if self.knowledge_lines:
            parts += [SECTION_HEADERS["knowledge"], "\n".join(self.knowledge_lines)]
        if self.stamp_text:
            parts += [SECTION_HEADERS["stamp"], self.stamp_text]
        parts += [SECTION_HEADERS["instruction"], self.instruction_text]
        return "\n".join(parts)

    def render(self) -> str:
        return "\n".join([SECTION_HEADERS["preamble"], self.preamble, self._body()])

    def messages(self) -> list[dict[str, str]]:
        return [
            {"role": "system", "content": f"{SECTION_HEADERS['preamble']}\n{self.preamble}"},
            {"role": "user", "content": self._body()},
        ]


def render_quad_line(quad, score: float | None = None) -> str:
    stamp = quad.stamp if quad.stamp is not None else "-"
    line = f"- [{quad.domain.value} | {quad.slot} | {quad.value} | {stamp}]"
    if score is not None:
        line += f" (score={score:.3f})"
    return line


def assemble_prompt(
    context: Sequence[Utterance],
    instruction: GoalInstruction,
    stamp: Stamp,
    knowledge: RetrievalResult,
    preamble: str = HELPER_PREAMBLE,
    budget: int | None = None,
) -> AssembledPrompt:
    """Render the generation prompt, truncating context oldest-first to fit
    ``budget`` (in tokens). The newest utterance, preamble, instruction, and
    stamp are never dropped."""
    if not context:
        raise ValueError("context must be non-empty")
    speaker_labels = {Speaker.CLIENT: "Client", Speaker.COUNSELOR: "Counselor"}
    lines = tuple(f"{speaker_labels[u.speaker]}: {u.text}" for u in context)
    knowledge_lines = tuple(
        render_quad_line(sq.quad) for sq in knowledge.quadruples
    )

    truncated = False
    if budget is not None:
        def total_tokens(ctx: tuple[str, ...]) -> int:
            return count_tokens(
                AssembledPrompt(
                    preamble=preamble,
                    context_lines=ctx,
                    knowledge_lines=knowledge_lines,
                    stamp_text=stamp.text,
                    instruction_text=instruction.text,
                ).render()
            )

        while total_tokens(lines) > budget and len(lines) > 1:
            lines = lines[1:]
            truncated = True
        if total_tokens(lines) > budget:
            raise PromptBudgetError(
                f"mandatory prompt sections need {total_tokens(lines)} tokens, budget is {budget}"
            )
    return AssembledPrompt(
        preamble=preamble,
        context_lines=lines,
        knowledge_lines=knowledge_lines,
        stamp_text=stamp.text,
        instruction_text=instruction.text,
        truncated=truncated,
    )


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


@dataclass
class EngineConfig:
    """Session behavior knobs.

    The end-of-session warning fires once, ``warn_margin`` turns before the
    turn budget runs out; a wall-clock budget (``max_seconds``) is also
    supported and whichever limit hits first wins.
    """

    max_turns: int = 20
    warn_margin: int = 2
    retrieval_k: int = 5
    use_context_classification: bool = True
    preamble: str = HELPER_PREAMBLE
    opening_template: str = OPENING_TEMPLATE
    closing_template: str = CLOSING_TEMPLATE
    end_on_farewell: bool = True
    farewell_patterns: tuple[str, ...] = (r"再见", r"拜拜", r"\bgoodbye\b", r"\bbye bye\b")
    max_seconds: float | None = None
    warn_seconds: float = 300.0
    include_recording_in_preamble: bool = True
    prompt_budget: int | None = None

    def __post_init__(self) -> None:
        if self.max_turns < 2:
            raise ValueError("max_turns must be >= 2")
        if not (1 <= self.warn_margin < self.max_turns):
            raise ValueError("warn_margin must satisfy 1 <= warn_margin < max_turns")
        if self.retrieval_k < 1:
            raise ValueError("retrieval_k must be >= 1")


@dataclass
class BackendBundle:
    chat: object
    classifier: ClassifierBackend
    fallback_classifier: ClassifierBackend | None = None
    embedder: object | None = None


@dataclass(frozen=True)
class TurnResult:
    """Everything one pipeline pass produced, in stage order."""

    response: Utterance
    prediction: SkillPrediction
    state: SpatioTemporalState
    stamp: Stamp
    retrieval: RetrievalResult
    recording: CaseRecording | None
    process_signal: ProcessSignal
    prompt: AssembledPrompt
    degraded: bool = False
    closing: Utterance | None = None
    stage_log: tuple[tuple[str, float], ...] = ()

    def to_dict(self) -> dict:
        return {
            "response": {"turn_index": self.response.turn_index, "text": self.response.text},
            "skill": self.prediction.predicted.value,
            "used_context": self.prediction.used_context,
            "truncated": self.prediction.truncated,
            "degraded": self.degraded,
            "state": self.state.to_dict(),
            "stamp": self.stamp.text,
            "retrieval": {
                "gated": self.retrieval.gated,
                "quadruples": [
                    {**sq.quad.to_dict(), "score": sq.score}
                    for sq in self.retrieval.quadruples
                ],
            },
            "recording": self.recording.sections() if self.recording else None,
            "process_signal": self.process_signal.value,
            "closing": {"turn_index": self.closing.turn_index, "text": self.closing.text}
            if self.closing
            else None,
        }


class SessionEngine:
    """Orchestrates sessions over pluggable backends and knowledge stores."""

    def __init__(
        self,
        config: EngineConfig,
        backends: BackendBundle,
        store: KnowledgeStore | None = None,
        rules: Sequence[ExtractionRule] | None = None,
        instruction_templates: Mapping[str, str] | None = None,
        clock: Callable[[], float] = time.time,
        storage_dir: str | Path | None = None,
    ) -> None:
        self.config = config
        self.backends = backends
        self.store = store if store is not None else KnowledgeStore()
        self.rules = rules
        self.instruction_templates = instruction_templates
        self.clock = clock
        self.storage_dir = Path(storage_dir) if storage_dir is not None else None
        if self.storage_dir is not None:
            self.storage_dir.mkdir(parents=True, exist_ok=True)
        self._logs: dict[str, EventLog] = {}
        self._overlays: dict[str, KnowledgeStore] = {}
        self._farewell = [re.compile(p, re.IGNORECASE) for p in config.farewell_patterns]

    # -- lifecycle ----------------------------------------------------------

    def open_session(
        self,
        session_id: str | None = None,
        overlay: KnowledgeStore | None = None,
    ) -> DialogueSession:
        """Open a session; the first counselor utterance is the opening
        script (confidentiality, expectations, and an open question)."""
        session_id = session_id or uuid.uuid4().hex
        if session_id in self._logs:
            raise ValueError(f"session {session_id!r} already exists")
        now = self.clock()
        session = DialogueSession(
            session_id=session_id,
            max_turns=self.config.max_turns,
            created_at=now,
        )
        opening = Utterance(
            speaker=Speaker.COUNSELOR,
            text=self.config.opening_template,
            turn_index=0,
        )
        session.append(opening)
        log_path = (
            self.storage_dir / f"{session_id}.jsonl" if self.storage_dir is not None else None
        )
        log = EventLog(path=log_path)
        log.append(
            EventType.OPENED,
            {
                "session_id": session_id,
                "opening_text": opening.text,
                "max_turns": self.config.max_turns,
                "warn_margin": self.config.warn_margin,
            },
            timestamp=now,
        )
        self._logs[session_id] = log
        if overlay is not None:
            self._overlays[session_id] = overlay
        return session

    def event_log(self, session_id: str) -> EventLog:
        return self._logs[session_id]

    def _closing_utterance(self, session: DialogueSession) -> Utterance:
        return Utterance(
            speaker=Speaker.COUNSELOR,
            text=self.config.closing_template,
            turn_index=session.next_turn_index,
            goal=GoalLabel(skill=HelpingSkill.OTHERS),
        )

    def close_session(self, session: DialogueSession, reason: str = "operator") -> Utterance:
        """Append the closing script (reflection invitation plus farewell)
        and close the session."""
        if session.status is SessionStatus.CLOSED:
            raise SessionClosedError(f"session {session.session_id} is already closed")
        closing = self._closing_utterance(session)
        session.append(closing, strict_alternation=False)
        session.close()
        self._logs[session.session_id].append(
            EventType.CLOSED,
            {"closing_text": closing.text, "reason": reason},
            timestamp=self.clock(),
        )
        return closing

    # -- per-turn pipeline ----------------------------------------------------

    def _classify(self, texts: list[str]) -> tuple[SkillPrediction, bool]:
        use_context = self.config.use_context_classification
        try:
            return classify_skill(texts, use_context, self.backends.classifier), False
        except BackendError as exc:
            fallback = self.backends.fallback_classifier
            if fallback is None:
                raise
            logger.warning("classifier %s failed (%s); falling back to %s",
                           getattr(self.backends.classifier, "name", "?"), exc, fallback.name)
            return classify_skill(texts, use_context, fallback), True

    def _record_case(self, client_text: str, counselor_text: str, turn_index: int) -> CaseRecording | None:
        prompt = build_recording_prompt(client_text, counselor_text)
        try:
            raw = self.backends.chat.complete([{"role": "user", "content": prompt}])
            return parse_recording(raw, turn_index)
        except (BackendError, RecordingParseError) as exc:
            logger.warning("case recording failed for turn %d: %s", turn_index, exc)
            return None

    def _process_signal(self, session: DialogueSession, client_text: str) -> tuple[ProcessSignal, str | None]:
        steps = len(session.client_turns)
        if self.config.end_on_farewell and any(p.search(client_text) for p in self._farewell):
            return ProcessSignal.END, "farewell"
        if steps >= self.config.max_turns:
            return ProcessSignal.END, "max_turns"
        elapsed = self.clock() - session.created_at
        if self.config.max_seconds is not None and elapsed >= self.config.max_seconds:
            return ProcessSignal.END, "time_budget"
        if steps == self.config.max_turns - self.config.warn_margin and session.status is SessionStatus.OPEN:
            return ProcessSignal.WARN_ENDING, None
        if (
            self.config.max_seconds is not None
            and elapsed >= self.config.max_seconds - self.config.warn_seconds
            and session.status is SessionStatus.OPEN
        ):
            return ProcessSignal.WARN_ENDING, None
        return ProcessSignal.CONTINUE, None

    def _preamble_for(self, session: DialogueSession) -> str:
        if not (self.config.include_recording_in_preamble and session.recordings):
            return self.config.preamble
        last = session.recordings[-1]
        reflection = "\n".join(
            f"- {title}: {last.sections()[section]}"
            for (title, _), section in zip(RECORDING_QUESTIONS, RECORDING_SECTIONS)
        )
        return f"{self.config.preamble}\n[Reflection on the previous turn]\n{reflection}"

    def step(
        self,
        session: DialogueSession,
        client_text: str,
        gold_skill: HelpingSkill | None = None,
    ) -> TurnResult:
        """Run one full turn. The session is only mutated after the chat
        backend succeeds, so a failed turn leaves it untouched.

        ``gold_skill`` bypasses the classifier for oracle experiments.
        """
        if session.status is SessionStatus.CLOSED:
            raise SessionClosedError(f"session {session.session_id} is closed")
        if not client_text.strip():
            raise ValueError("client_text must be non-empty")

        stage_log: list[tuple[str, float]] = []

        def stage(name: str) -> None:
            stage_log.append((name, self.clock()))

        client_utt = Utterance(
            speaker=Speaker.CLIENT, text=client_text, turn_index=session.next_turn_index
        )
        texts = [u.text for u in session.utterances] + [client_text]

        stage("classify")
        degraded = False
        if gold_skill is not None:
            prediction = SkillPrediction(
                probabilities={s: (1.0 if s is gold_skill else 0.0) for s in HelpingSkill},
                predicted=gold_skill,
                used_context=False,
            )
        else:
            prediction, degraded = self._classify(texts)

        stage("instruction")
        instruction = skill_to_instruction(
            prediction.predicted, templates=self.instruction_templates
        )

        stage("extract_state")
        state = extract_state(texts, prior=session.st_state, rules=self.rules)

        stage("make_stamp")
        stamp = make_stamp(state)

        stage("retrieve")
        retrieval = retrieve(
            self.store,
            query_text=client_text,
            state=state,
            skill=prediction.predicted,
            k=self.config.retrieval_k,
            overlay=self._overlays.get(session.session_id),
        )

        stage("assemble_prompt")
        budget = self.config.prompt_budget
        if budget is None:
            budget = getattr(self.backends.chat, "max_input_tokens", None)
        prompt = assemble_prompt(
            context=list(session.utterances) + [client_utt],
            instruction=instruction,
            stamp=stamp,
            knowledge=retrieval,
            preamble=self._preamble_for(session),
            budget=budget,
        )

        stage("chat")
        response_text = self.backends.chat.complete(prompt.messages())

        # Chat succeeded: from here on the turn is committed.
        session.append(client_utt)
        response = Utterance(
            speaker=Speaker.COUNSELOR,
            text=response_text,
            turn_index=session.next_turn_index,
            goal=GoalLabel(skill=prediction.predicted),
        )
        session.append(response)
        session.st_state = state

        stage("recording")
        recording = self._record_case(client_text, response_text, response.turn_index)
        if recording is not None:
            session.recordings.append(recording)

        stage("process_control")
        signal, end_reason = self._process_signal(session, client_text)

        log = self._logs[session.session_id]
        log.append(
            EventType.CLIENT_TURN,
            {"turn_index": client_utt.turn_index, "text": client_utt.text},
            timestamp=self.clock(),
        )
        log.append(
            EventType.COUNSELOR_TURN,
            {
                "turn_index": response.turn_index,
                "text": response.text,
                "skill": prediction.predicted.value,
                "used_context": prediction.used_context,
                "truncated": prediction.truncated,
                "degraded": degraded,
                "state": state.to_dict(),
                "stamp": stamp.text,
                "retrieved": [
                    {**sq.quad.to_dict(), "score": sq.score} for sq in retrieval.quadruples
                ],
                "gated": retrieval.gated,
                "process_signal": signal.value,
            },
            timestamp=self.clock(),
        )
        if recording is not None:
            log.append(
                EventType.RECORDING,
                {"turn_index": recording.turn_index, "sections": recording.sections()},
                timestamp=self.clock(),
            )

        closing = None
        if signal is ProcessSignal.WARN_ENDING:
            session.mark_warned()
            log.append(
                EventType.WARNED,
                {"after_turn_index": response.turn_index},
                timestamp=self.clock(),
            )
        elif signal is ProcessSignal.END:
            closing = self._closing_utterance(session)
            session.append(closing, strict_alternation=False)
            session.close()
            log.append(
                EventType.CLOSED,
                {"closing_text": closing.text, "reason": end_reason},
                timestamp=self.clock(),
            )

        return TurnResult(
            response=response,
            prediction=prediction,
            state=state,
            stamp=stamp,
            retrieval=retrieval,
            recording=recording,
            process_signal=signal,
            prompt=prompt,
            degraded=degraded,
            closing=closing,
            stage_log=tuple(stage_log),
        )

    # -- exports ---------------------------------------------------------------

    def export_finetuning_records(self, session_id: str) -> list[dict]:
        """Rebuild (context, response, reflection) records from the event
        log, for downstream fine-tuning pipelines."""
        log = self._logs[session_id]
        records: list[dict] = []
        transcript: list[dict] = []
        for event in log.events:
            if event.event_type is EventType.OPENED:
                transcript.append({"speaker": "counselor", "text": event.payload["opening_text"]})
            elif event.event_type is EventType.CLIENT_TURN:
                transcript.append({"speaker": "client", "text": event.payload["text"]})
            elif event.event_type is EventType.COUNSELOR_TURN:
                records.append(
                    {
                        "context": [dict(t) for t in transcript],
                        "skill": event.payload["skill"],
                        "stamp": event.payload["stamp"],
                        "knowledge": event.payload["retrieved"],
                        "response": event.payload["text"],
                        "recording": None,
                    }
                )
                transcript.append({"speaker": "counselor", "text": event.payload["text"]})
            elif event.event_type is EventType.RECORDING and records:
                records[-1]["recording"] = event.payload["sections"]
        return records
