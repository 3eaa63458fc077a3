"""stampsy: session-oriented counseling dialogue orchestration.

Per-turn helping-skill selection, spatiotemporal stamp processing,
stamp-aware adaptive knowledge retrieval, iterative self-feedback
generation, and process control — plus a corpus toolkit and evaluation
harness for mixed-type counseling dialogues.
"""

from .corpus import (
    ClientBehavior,
    DialogueSession,
    GoalLabel,
    GuidanceSubtype,
    HelpingSkill,
    Speaker,
    Utterance,
    corpus_stats,
    load_corpus,
    save_corpus,
)
from .engine import BackendBundle, EngineConfig, ProcessSignal, SessionEngine, TurnResult
from .kstore import Domain, KnowledgeQuadruple, KnowledgeStore, retrieve
from .skills import classify_skill, needs_knowledge, skill_to_instruction
from .stsp import SpatioTemporalState, Stamp, extract_state, make_stamp

__version__ = "0.1.0"

__all__ = [
    "BackendBundle",
    "ClientBehavior",
    "DialogueSession",
    "Domain",
    "EngineConfig",
    "GoalLabel",
    "GuidanceSubtype",
    "HelpingSkill",
    "KnowledgeQuadruple",
    "KnowledgeStore",
    "ProcessSignal",
    "SessionEngine",
    "Speaker",
    "SpatioTemporalState",
    "Stamp",
    "TurnResult",
    "Utterance",
    "classify_skill",
    "corpus_stats",
    "extract_state",
    "load_corpus",
    "make_stamp",
    "needs_knowledge",
    "retrieve",
    "save_corpus",
    "skill_to_instruction",
    "__version__",
]
