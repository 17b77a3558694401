"""Ledger event stream: gapless numbering, terminal closing, file round-trip."""

import json

import pytest

from transforge.errors import LedgerParseError, ValidationError
from transforge.ledger import (
    FileLedger,
    LedgerEvent,
    LedgerKind,
    MemoryLedger,
    TERMINAL_KINDS,
    event_from_doc,
    event_to_doc,
    read_ledger,
    utc_now,
)

RFC3339 = r"\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}\.\d{6}Z"


def test_timestamps_are_rfc3339_utc():
    import re

    assert re.fullmatch(RFC3339, utc_now())


def test_seq_is_gapless_from_one():
    led = MemoryLedger("t1")
    for i in range(5):
        event = led.append(LedgerKind.PROMPT_BUILT, {"i": i})
        assert event.seq == i + 1
    assert [e.seq for e in led.events] == [1, 2, 3, 4, 5]


def test_append_copies_payload():
    led = MemoryLedger("t1")
    payload = {"k": 1}
    event = led.append(LedgerKind.TASK_START, payload)
    payload["k"] = 2
    assert event.payload == {"k": 1}


def test_terminal_event_closes_ledger():
    led = MemoryLedger("t1")
    led.append(LedgerKind.TASK_START, {})
    led.append(LedgerKind.TASK_DONE, {})
    with pytest.raises(ValidationError):
        led.append(LedgerKind.PROMPT_BUILT, {})


def test_both_terminal_kinds_close():
    assert TERMINAL_KINDS == {LedgerKind.TASK_DONE, LedgerKind.TASK_FAILED}
    led = MemoryLedger("t2")
    led.append(LedgerKind.TASK_FAILED, {"status": "FAILED_ABORT"})
    with pytest.raises(ValidationError):
        led.append(LedgerKind.TASK_DONE, {})


def test_empty_task_id_rejected():
    with pytest.raises(ValidationError):
        MemoryLedger("")


def test_event_doc_round_trip():
    event = LedgerEvent(
        seq=3,
        task_id="t9",
        timestamp=utc_now(),
        kind=LedgerKind.BELIEF_UPDATED,
        payload={"probs": [0.5, 0.5]},
    )
    assert event_from_doc(event_to_doc(event)) == event


def test_event_from_doc_rejects_unknown_kind():
    with pytest.raises(LedgerParseError):
        event_from_doc(
            {
                "seq": 1,
                "task_id": "t",
                "timestamp": utc_now(),
                "kind": "NOT_A_KIND",
                "payload": {},
            }
        )


def test_file_ledger_round_trip(tmp_path):
    path = tmp_path / "runs" / "t3.jsonl"
    with FileLedger("t3", path) as led:
        led.append(LedgerKind.TASK_START, {"source_lang": "python"})
        led.append(LedgerKind.MODEL_SELECTED, {"model_id": "m1"})
        led.append(LedgerKind.TASK_DONE, {"status": "SUCCESS"})
    events = read_ledger(path)
    assert [e.kind for e in events] == [
        LedgerKind.TASK_START,
        LedgerKind.MODEL_SELECTED,
        LedgerKind.TASK_DONE,
    ]
    assert [e.seq for e in events] == [1, 2, 3]
    assert all(e.task_id == "t3" for e in events)
    assert events[0].payload == {"source_lang": "python"}


def test_file_ledger_streams_incrementally(tmp_path):
    path = tmp_path / "t4.jsonl"
    led = FileLedger("t4", path)
    led.append(LedgerKind.TASK_START, {})
    # readable mid-run, before close: a crash must not lose the prefix
    lines = path.read_text().splitlines()
    assert len(lines) == 1
    assert json.loads(lines[0])["kind"] == "TASK_START"
    led.close()


def test_read_ledger_missing_file(tmp_path):
    with pytest.raises(LedgerParseError, match="not found"):
        read_ledger(tmp_path / "absent.jsonl")


def test_read_ledger_rejects_invalid_json(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"seq": 1, "task_id": "t", ...\n')
    with pytest.raises(LedgerParseError, match="invalid JSON"):
        read_ledger(path)


def _line(seq, kind, task_id="t"):
    return json.dumps(
        {
            "seq": seq,
            "task_id": task_id,
            "timestamp": utc_now(),
            "kind": kind,
            "payload": {},
        }
    )


def test_read_ledger_rejects_seq_gap(tmp_path):
    path = tmp_path / "gap.jsonl"
    path.write_text(
        "\n".join([_line(1, "TASK_START"), _line(3, "TASK_DONE")]) + "\n"
    )
    with pytest.raises(LedgerParseError, match="gapless"):
        read_ledger(path)


def test_read_ledger_rejects_mixed_task_ids(tmp_path):
    path = tmp_path / "mix.jsonl"
    path.write_text(
        "\n".join(
            [_line(1, "TASK_START", "a"), _line(2, "TASK_DONE", "b")]
        )
        + "\n"
    )
    with pytest.raises(LedgerParseError, match="mixed task ids"):
        read_ledger(path)


def test_read_ledger_rejects_events_after_terminal(tmp_path):
    path = tmp_path / "after.jsonl"
    path.write_text(
        "\n".join(
            [
                _line(1, "TASK_START"),
                _line(2, "TASK_DONE"),
                _line(3, "PROMPT_BUILT"),
            ]
        )
        + "\n"
    )
    with pytest.raises(LedgerParseError, match="after terminal"):
        read_ledger(path)


def test_read_ledger_rejects_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(LedgerParseError, match="empty"):
        read_ledger(path)


def test_read_ledger_tolerates_missing_terminal(tmp_path):
    # an interrupted run is still a readable record
    path = tmp_path / "trunc.jsonl"
    path.write_text(
        "\n".join([_line(1, "TASK_START"), _line(2, "MODEL_SELECTED")]) + "\n"
    )
    events = read_ledger(path)
    assert len(events) == 2
