"""Append-only run ledgers.

Every translation task writes its whole history as a sequence of events:
gapless seq numbers from 1, RFC 3339 timestamps, exactly one terminal
event. The file form is JSONL, one event per line, so a crashed run still
leaves a readable prefix and `replay` can feed a recorded run back through
the decision logic.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

from .errors import LedgerParseError, ValidationError


class LedgerKind(str, Enum):
    TASK_START = "TASK_START"
    MODEL_SELECTED = "MODEL_SELECTED"
    PROMPT_BUILT = "PROMPT_BUILT"
    LLM_RESPONSE = "LLM_RESPONSE"
    AGENT_VERDICT = "AGENT_VERDICT"
    COMPILE_RESULT = "COMPILE_RESULT"
    TEST_REPORT = "TEST_REPORT"
    BELIEF_UPDATED = "BELIEF_UPDATED"
    ACTION_CHOSEN = "ACTION_CHOSEN"
    TASK_DONE = "TASK_DONE"
    TASK_FAILED = "TASK_FAILED"


TERMINAL_KINDS = frozenset({LedgerKind.TASK_DONE, LedgerKind.TASK_FAILED})

# The decision events replay re-derives and checks against the record.
VERIFIED_KINDS = frozenset(
    {
        LedgerKind.MODEL_SELECTED,
        LedgerKind.BELIEF_UPDATED,
        LedgerKind.ACTION_CHOSEN,
    }
)


@dataclass(frozen=True)
class LedgerEvent:
    seq: int
    task_id: str
    timestamp: str
    kind: LedgerKind
    payload: dict


def utc_now() -> str:
    """RFC 3339 timestamp in UTC with a Z suffix."""
    now = datetime.now(timezone.utc)
    return now.isoformat(timespec="microseconds").replace("+00:00", "Z")


def event_to_doc(event: LedgerEvent) -> dict:
    return {
        "seq": event.seq,
        "task_id": event.task_id,
        "timestamp": event.timestamp,
        "kind": event.kind.value,
        "payload": event.payload,
    }


def event_from_doc(doc: dict) -> LedgerEvent:
    try:
        kind = LedgerKind(doc["kind"])
        return LedgerEvent(
            seq=int(doc["seq"]),
            task_id=doc["task_id"],
            timestamp=doc["timestamp"],
            kind=kind,
            payload=doc["payload"],
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise LedgerParseError(f"malformed ledger event: {exc}") from None


class MemoryLedger:
    """Event sink for one task. Appends are serialized; seq is gapless."""

    def __init__(self, task_id: str, clock=utc_now):
        if not task_id:
            raise ValidationError("task_id must be non-empty")
        self.task_id = task_id
        self.path: Path | None = None
        self._clock = clock
        self._lock = threading.Lock()
        self._closed = False
        self.events: list[LedgerEvent] = []

    def append(self, kind: LedgerKind, payload: dict) -> LedgerEvent:
        with self._lock:
            if self._closed:
                raise ValidationError(
                    f"ledger for {self.task_id} already has a terminal event"
                )
            event = LedgerEvent(
                seq=len(self.events) + 1,
                task_id=self.task_id,
                timestamp=self._clock(),
                kind=kind,
                payload=dict(payload),
            )
            self.events.append(event)
            if kind in TERMINAL_KINDS:
                self._closed = True
            self._persist(event)
            return event

    def _persist(self, event: LedgerEvent) -> None:
        pass

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class FileLedger(MemoryLedger):
    """MemoryLedger that mirrors every event to a JSONL file as it happens."""

    def __init__(self, task_id: str, path: str | Path, clock=utc_now):
        super().__init__(task_id, clock)
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w", encoding="utf-8")

    def _persist(self, event: LedgerEvent) -> None:
        self._fh.write(json.dumps(event_to_doc(event), ensure_ascii=False))
        self._fh.write("\n")
        self._fh.flush()

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()


def read_ledger(path: str | Path) -> list[LedgerEvent]:
    """Parse and structurally validate one task's JSONL ledger.

    Raises LedgerParseError on unreadable lines, seq gaps, mixed task ids,
    or events after a terminal event. A missing terminal event is allowed
    here (an interrupted run is still a readable record); replay is the
    layer that insists on completion.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise LedgerParseError(f"ledger file not found: {path}") from None
    events: list[LedgerEvent] = []
    terminal_seen = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LedgerParseError(f"{path}:{lineno}: invalid JSON: {exc}") from None
        event = event_from_doc(doc)
        if event.seq != len(events) + 1:
            raise LedgerParseError(
                f"{path}:{lineno}: seq {event.seq} breaks the gapless "
                f"sequence (expected {len(events) + 1})"
            )
        if events and event.task_id != events[0].task_id:
            raise LedgerParseError(
                f"{path}:{lineno}: mixed task ids "
                f"({event.task_id!r} vs {events[0].task_id!r})"
            )
        if terminal_seen:
            raise LedgerParseError(
                f"{path}:{lineno}: event after terminal event"
            )
        if event.kind in TERMINAL_KINDS:
            terminal_seen = True
        events.append(event)
    if not events:
        raise LedgerParseError(f"{path}: empty ledger")
    return events
