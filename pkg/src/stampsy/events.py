"""Append-only per-session event log.

Every session mutation is recorded as one JSONL line with a strictly
increasing sequence number: opened first, closed last, turns and
recordings in between. Serialization is canonical (sorted keys, no
extra whitespace) so that replays with deterministic backends and clocks
are byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path


class EventType(str, Enum):
    OPENED = "opened"
    CLIENT_TURN = "client_turn"
    COUNSELOR_TURN = "counselor_turn"
    RECORDING = "recording"
    WARNED = "warned"
    CLOSED = "closed"


@dataclass(frozen=True)
class SessionEvent:
    event_type: EventType
    payload: dict
    sequence: int
    timestamp: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "event_type": self.event_type.value,
                "payload": self.payload,
                "sequence": self.sequence,
                "timestamp": self.timestamp,
            },
            ensure_ascii=False,
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "SessionEvent":
        d = json.loads(line)
        return cls(
            event_type=EventType(d["event_type"]),
            payload=d["payload"],
            sequence=d["sequence"],
            timestamp=d["timestamp"],
        )


class EventLogError(RuntimeError):
    pass


class EventLog:
    """In-memory event list, optionally mirrored append-only to a file."""

    def __init__(self, path: Path | None = None) -> None:
        self._path = Path(path) if path is not None else None
        self._events: list[SessionEvent] = []
        self._closed = False

    @property
    def events(self) -> tuple[SessionEvent, ...]:
        return tuple(self._events)

    @property
    def path(self) -> Path | None:
        return self._path

    def append(self, event_type: EventType, payload: dict, timestamp: float) -> SessionEvent:
        if self._closed:
            raise EventLogError("log already closed")
        if not self._events and event_type is not EventType.OPENED:
            raise EventLogError("first event must be 'opened'")
        if self._events and event_type is EventType.OPENED:
            raise EventLogError("'opened' must be the first event")
        event = SessionEvent(
            event_type=event_type,
            payload=payload,
            sequence=len(self._events) + 1,
            timestamp=timestamp,
        )
        self._events.append(event)
        if event_type is EventType.CLOSED:
            self._closed = True
        if self._path is not None:
            with self._path.open("a", encoding="utf-8") as fh:
                fh.write(event.to_json())
                fh.write("\n")
        return event

    def dump_bytes(self) -> bytes:
        return "".join(e.to_json() + "\n" for e in self._events).encode("utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EventLog":
        log = cls(path=None)
        with Path(path).open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    log._events.append(SessionEvent.from_json(line))
        if log._events and log._events[-1].event_type is EventType.CLOSED:
            log._closed = True
        return log
