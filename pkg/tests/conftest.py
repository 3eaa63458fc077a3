from __future__ import annotations

import json
from pathlib import Path

import pytest

from stampsy.backends import MockChatBackend, MockEmbeddingBackend
from stampsy.config import TickClock
from stampsy.corpus import HelpingSkill
from stampsy.engine import BackendBundle, EngineConfig, SessionEngine
from stampsy.kstore import Domain, KnowledgeQuadruple, KnowledgeStore
from stampsy.skills import KeywordSkillClassifier

DATA_DIR = Path(__file__).parent / "data"
SAMPLE_CORPUS = Path(__file__).parents[1] / "src" / "stampsy" / "data" / "sample_corpus.jsonl"


@pytest.fixture
def sample_corpus_path() -> Path:
    return SAMPLE_CORPUS


@pytest.fixture
def coffee_book_store() -> KnowledgeStore:
    """The morning-coffee / night-book pair."""
    return KnowledgeStore(
        [
            KnowledgeQuadruple(
                domain=Domain.PSYCHOLOGICAL_KNOWLEDGE,
                slot="Relaxing Method Recommendation",
                value="drink coffee",
                stamp="morning",
            ),
            KnowledgeQuadruple(
                domain=Domain.PSYCHOLOGICAL_KNOWLEDGE,
                slot="Relaxing Method Recommendation",
                value="read a book",
                stamp="night",
            ),
        ]
    )


def make_scripted_store() -> KnowledgeStore:
    """Chinese-content store the scripted session retrieves from."""
    return KnowledgeStore(
        [
            KnowledgeQuadruple(
                Domain.PSYCHOLOGICAL_KNOWLEDGE, "放松方式推荐", "早上喝咖啡提神", "morning"
            ),
            KnowledgeQuadruple(
                Domain.PSYCHOLOGICAL_KNOWLEDGE, "放松方式推荐", "晚上读书放松", "night"
            ),
            KnowledgeQuadruple(
                Domain.PSYCHOLOGICAL_KNOWLEDGE, "睡眠卫生", "睡前做冥想放松练习", None
            ),
        ]
    )


def make_engine(
    seed: int = 7,
    store: KnowledgeStore | None = None,
    storage_dir=None,
    **config_kwargs,
) -> SessionEngine:
    config = EngineConfig(**{"max_turns": 10, "warn_margin": 2, **config_kwargs})
    bundle = BackendBundle(
        chat=MockChatBackend(seed=seed),
        classifier=KeywordSkillClassifier(),
        fallback_classifier=KeywordSkillClassifier(),
        embedder=MockEmbeddingBackend(seed=seed),
    )
    return SessionEngine(
        config=config,
        backends=bundle,
        store=store,
        clock=TickClock(start=1_700_000_000.0, step=1.0),
        storage_dir=storage_dir,
    )


#: Ten scripted client lines driving retrieval, gating, and state changes;
#: no farewell words so process control ends the session on the turn budget.
SCRIPTED_CLIENT_LINES: tuple[str, ...] = (
    "我刚起床，睡得很不好。",
    "白天在公司完全没精神，同事都看出来了。",
    "我总觉得自己做得不够好。",
    "能推荐一个放松方法吗？",
    "喝咖啡真的有用吗？",
    "晚上回到家里还是睡不着。",
    "我有点担心自己撑不下去。",
    "这种状态已经持续一个月了。",
    "我会试试你说的办法。",
    "谢谢你今天听我说这些。",
)


def run_scripted_session(engine: SessionEngine, session_id: str = "golden-session"):
    """Drive the standard 10-turn scripted session; returns (session, results)."""
    session = engine.open_session(session_id=session_id)
    results = []
    for line in SCRIPTED_CLIENT_LINES:
        results.append(engine.step(session, line))
    return session, results


@pytest.fixture
def ghsc_gold() -> list[HelpingSkill]:
    from stampsy.evalharness import load_ghsc_transcript

    return list(load_ghsc_transcript().gold_skills())


def load_stsp_fixture():
    rows = []
    with (DATA_DIR / "stsp_fixture.jsonl").open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows
