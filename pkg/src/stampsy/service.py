"""HTTP session service exposing the engine, corpus statistics, knowledge
retrieval, and the evaluation harness.

Sessions persist as append-only JSONL event logs (one file per session
when a storage dir is configured). Turns on one session are serialized by
a per-session lock; metric endpoints are stateless.
"""

from __future__ import annotations

import threading
from importlib import resources
from pathlib import Path

from fastapi import Depends, FastAPI, Header, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from . import evalharness
from .backends import BackendError
from .config import AppConfig, build_engine
from .corpus import DialogueSession, HelpingSkill, SessionClosedError, corpus_stats, load_corpus
from .engine import SessionEngine


class OpenSessionRequest(BaseModel):
    session_id: str | None = None


class TurnRequest(BaseModel):
    text: str = Field(min_length=1)


class GhscRequest(BaseModel):
    predictions: list[str]


class GenPair(BaseModel):
    candidate: str = Field(min_length=1)
    reference: str = Field(min_length=1)


class GenRequest(BaseModel):
    pairs: list[GenPair]
    level: str = "corpus"


class _Sessions:
    """Registry of live sessions with one lock per session."""

    def __init__(self) -> None:
        self._sessions: dict[str, DialogueSession] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def add(self, session: DialogueSession) -> None:
        with self._registry_lock:
            self._sessions[session.session_id] = session
            self._locks[session.session_id] = threading.Lock()

    def get(self, session_id: str) -> tuple[DialogueSession, threading.Lock]:
        with self._registry_lock:
            if session_id not in self._sessions:
                raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
            return self._sessions[session_id], self._locks[session_id]


def create_app(engine: SessionEngine, config: AppConfig | None = None) -> FastAPI:
    config = config or AppConfig()
    app = FastAPI(title="stampsy", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(config.service.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions = _Sessions()
    app.state.engine = engine
    app.state.sessions = sessions

    def check_token(x_api_token: str | None = Header(default=None)) -> None:
        expected = config.service.api_token
        if expected and x_api_token != expected:
            raise HTTPException(status_code=401, detail="invalid API token")

    auth = Depends(check_token)

    @app.exception_handler(BackendError)
    async def backend_error_handler(request, exc: BackendError):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=502, content={"detail": str(exc)})

    @app.post("/sessions", status_code=201, dependencies=[auth])
    def open_session(body: OpenSessionRequest | None = None):
        session_id = body.session_id if body else None
        try:
            session = engine.open_session(session_id=session_id)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        sessions.add(session)
        opening = session.utterances[0]
        return {
            "session_id": session.session_id,
            "opening": {"turn_index": opening.turn_index, "text": opening.text},
            "status": session.status.value,
        }

    @app.post("/sessions/{session_id}/turns", dependencies=[auth])
    def post_turn(session_id: str, body: TurnRequest):
        session, lock = sessions.get(session_id)
        with lock:
            try:
                result = engine.step(session, body.text)
            except SessionClosedError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
        return {"session_id": session_id, "status": session.status.value, **result.to_dict()}

    @app.get("/sessions/{session_id}", dependencies=[auth])
    def get_session(session_id: str):
        session, _ = sessions.get(session_id)
        log = engine.event_log(session_id)
        return {
            "session_id": session_id,
            "status": session.status.value,
            "events": [
                {
                    "event_type": e.event_type.value,
                    "payload": e.payload,
                    "sequence": e.sequence,
                    "timestamp": e.timestamp,
                }
                for e in log.events
            ],
        }

    @app.get("/sessions/{session_id}/recordings", dependencies=[auth])
    def get_recordings(session_id: str):
        session, _ = sessions.get(session_id)
        return {
            "session_id": session_id,
            "recordings": [
                {"turn_index": r.turn_index, "sections": r.sections()}
                for r in session.recordings
            ],
        }

    @app.post("/sessions/{session_id}/close", dependencies=[auth])
    def close_session(session_id: str):
        session, lock = sessions.get(session_id)
        with lock:
            try:
                closing = engine.close_session(session)
            except SessionClosedError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
        return {
            "session_id": session_id,
            "status": session.status.value,
            "closing": {"turn_index": closing.turn_index, "text": closing.text},
        }

    @app.post("/eval/ghsc", dependencies=[auth])
    def eval_ghsc(body: GhscRequest):
        transcript = evalharness.load_ghsc_transcript()
        try:
            predictions = [HelpingSkill(p) for p in body.predictions]
            accuracy = evalharness.score_ghsc(transcript, predictions)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"accuracy": accuracy, "total_units": len(transcript.units())}

    @app.post("/eval/gen", dependencies=[auth])
    def eval_gen(body: GenRequest):
        if not body.pairs:
            raise HTTPException(status_code=422, detail="no pairs")
        pairs = [(p.candidate, [p.reference]) for p in body.pairs]
        if body.level == "corpus":
            bleu1 = evalharness.corpus_bleu(pairs, n=1)
            bleu2 = evalharness.corpus_bleu(pairs, n=2)
        elif body.level == "sentence":
            bleu1 = sum(evalharness.bleu(c, r, n=1) for c, r in pairs) / len(pairs)
            bleu2 = sum(evalharness.bleu(c, r, n=2) for c, r in pairs) / len(pairs)
        else:
            raise HTTPException(status_code=422, detail=f"unknown level {body.level!r}")
        rouge = sum(
            evalharness.rouge_l(p.candidate, p.reference) for p in body.pairs
        ) / len(body.pairs)
        embedder = engine.backends.embedder
        sim = None
        if embedder is not None:
            sim = sum(
                evalharness.embed_sim(p.candidate, p.reference, embedder)
                for p in body.pairs
            ) / len(body.pairs)
        return {"bleu1": bleu1, "bleu2": bleu2, "rouge_l": rouge, "embed_sim": sim, "level": body.level}

    if config.service.ui_dir and Path(config.service.ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount(
            "/ui",
            StaticFiles(directory=config.service.ui_dir, html=True),
            name="ui",
        )

    @app.get("/corpus/stats", dependencies=[auth])
    def get_corpus_stats(path: str | None = None):
        corpus_path = path or config.service.corpus_path
        if corpus_path is None:
            corpus_path = str(resources.files("stampsy.data").joinpath("sample_corpus.jsonl"))
        if not Path(corpus_path).exists():
            raise HTTPException(status_code=404, detail=f"corpus not found: {corpus_path}")
        report = load_corpus(corpus_path)
        stats = corpus_stats(report.sessions)
        return {"path": str(corpus_path), "errors": len(report.errors), "stats": stats.to_dict()}

    return app


def create_app_from_config(config: AppConfig, seed: int | None = None) -> FastAPI:
    engine = build_engine(config, seed=seed)
    return create_app(engine, config)
