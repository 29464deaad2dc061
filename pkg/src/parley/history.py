"""Negotiation history: append-only transcripts with outcome learning.

Every negotiation, successful or failed, leaves a record holding its full
message transcript and outcome.  Records are immutable once appended.
Past successes feed weight suggestion (mean of the weights used in
winning deals for the product); replay re-runs a record's transcript
through the engine's transcript rules and checks it still produces the
recorded outcome.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .engine import (
    Message,
    ReplayViolation,
    TranscriptState,
    apply_transcript,
)

SCHEMA_VERSION = 1
REL_TOLERANCE = 1e-9


class HistoryError(Exception):
    pass


class DuplicateRecord(HistoryError):
    pass


class ReplayMismatch(HistoryError):
    """Replaying the transcript does not reproduce the recorded outcome."""


@dataclass(frozen=True)
class Success:
    final_prices: dict[str, float]
    total: float


@dataclass(frozen=True)
class Failure:
    reason: str


Outcome = Success | Failure


@dataclass(frozen=True)
class HistoryRecord:
    negotiation_id: str
    product_id: str
    participants: tuple[str, ...]
    transcript: tuple[Message, ...]
    outcome: Outcome
    weights_used: dict[str, float]
    timestamp_seq: int

    def __post_init__(self) -> None:
        if not self.transcript:
            raise HistoryError("transcript must not be empty")


class HistoryStore:
    """Append-only record store; concurrent appends are serialized."""

    def __init__(self) -> None:
        self._records: dict[str, HistoryRecord] = {}
        self._alliance_events: list[dict] = []
        self._lock = threading.Lock()

    def append(self, record: HistoryRecord) -> str:
        with self._lock:
            if record.negotiation_id in self._records:
                raise DuplicateRecord(record.negotiation_id)
            self._records[record.negotiation_id] = record
        return record.negotiation_id

    def get(self, record_id: str) -> HistoryRecord:
        try:
            return self._records[record_id]
        except KeyError:
            raise HistoryError(f"no record {record_id}") from None

    def by_product(self, product_id: str) -> list[HistoryRecord]:
        return [r for r in self._records.values() if r.product_id == product_id]

    def records(self) -> list[HistoryRecord]:
        return list(self._records.values())

    def __len__(self) -> int:
        return len(self._records)

    def log_alliance_event(self, event: dict) -> None:
        with self._lock:
            self._alliance_events.append(dict(event))

    @property
    def alliance_events(self) -> list[dict]:
        return list(self._alliance_events)

    def suggest_weights(self, product_id: str, leaf_ids: Sequence[str]) -> dict[str, float]:
        """Mean of the weights used in the product's successful deals.

        Falls back to uniform weight 1 per issue when no success exists.
        """
        successes = [r for r in self.by_product(product_id)
                     if isinstance(r.outcome, Success)]
        suggestion: dict[str, float] = {}
        for leaf in leaf_ids:
            samples = [r.weights_used[leaf] for r in successes if leaf in r.weights_used]
            suggestion[leaf] = sum(samples) / len(samples) if samples else 1.0
        return suggestion

    # -- persistence ------------------------------------------------------------

    def dump_lines(self) -> list[str]:
        lines = [json.dumps({"kind": "header", "format": "history",
                             "version": SCHEMA_VERSION},
                            sort_keys=True, separators=(",", ":"))]
        for record in self._records.values():
            lines.append(json.dumps(record_to_dict(record),
                                    sort_keys=True, separators=(",", ":")))
        for event in self._alliance_events:
            lines.append(json.dumps({"kind": "alliance_event", **event},
                                    sort_keys=True, separators=(",", ":")))
        return lines

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.dump_lines()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "HistoryStore":
        store = cls()
        lines = Path(path).read_text().splitlines()
        if not lines:
            raise HistoryError("empty history file")
        header = json.loads(lines[0])
        if header.get("format") != "history" or header.get("version") != SCHEMA_VERSION:
            raise HistoryError(f"unsupported history header: {header}")
        for line in lines[1:]:
            if not line.strip():
                continue
            data = json.loads(line)
            if data.get("kind") == "alliance_event":
                data.pop("kind")
                store._alliance_events.append(data)
            else:
                store.append(record_from_dict(data))
        return store


def record_to_dict(record: HistoryRecord) -> dict:
    if isinstance(record.outcome, Success):
        outcome = {"status": "success",
                   "final_prices": record.outcome.final_prices,
                   "total": record.outcome.total}
    else:
        outcome = {"status": "failure", "reason": record.outcome.reason}
    return {
        "kind": "record",
        "negotiation_id": record.negotiation_id,
        "product_id": record.product_id,
        "participants": list(record.participants),
        "transcript": [m.to_wire() for m in record.transcript],
        "outcome": outcome,
        "weights_used": record.weights_used,
        "timestamp_seq": record.timestamp_seq,
    }


def record_from_dict(data: dict) -> HistoryRecord:
    raw = data["outcome"]
    outcome: Outcome
    if raw["status"] == "success":
        outcome = Success(final_prices={k: float(v) for k, v in raw["final_prices"].items()},
                          total=float(raw["total"]))
    else:
        outcome = Failure(reason=raw["reason"])
    return HistoryRecord(
        negotiation_id=data["negotiation_id"],
        product_id=data["product_id"],
        participants=tuple(data["participants"]),
        transcript=tuple(Message.from_wire(m) for m in data["transcript"]),
        outcome=outcome,
        weights_used={k: float(v) for k, v in data.get("weights_used", {}).items()},
        timestamp_seq=int(data["timestamp_seq"]),
    )


def replay(record: HistoryRecord) -> TranscriptState:
    """Re-run the record's transcript and verify it yields the same outcome."""
    try:
        state = apply_transcript(record.transcript)
    except ReplayViolation as exc:
        raise ReplayMismatch(f"{record.negotiation_id}: {exc}") from exc

    if isinstance(record.outcome, Success):
        if state.status != "finalized":
            raise ReplayMismatch(
                f"{record.negotiation_id}: recorded success, replay ended {state.status}"
            )
        if state.final_prices != record.outcome.final_prices:
            raise ReplayMismatch(
                f"{record.negotiation_id}: final prices diverge: "
                f"{state.final_prices} != {record.outcome.final_prices}"
            )
        total = sum(record.outcome.final_prices.values())
        if abs(total - record.outcome.total) > REL_TOLERANCE * max(1.0, abs(total)):
            raise ReplayMismatch(f"{record.negotiation_id}: total inconsistent")
    else:
        if state.status not in ("aborted", "declined"):
            raise ReplayMismatch(
                f"{record.negotiation_id}: recorded failure, replay ended {state.status}"
            )
        if state.status == "aborted" and state.reason != record.outcome.reason:
            raise ReplayMismatch(
                f"{record.negotiation_id}: abort reason diverges: "
                f"{state.reason} != {record.outcome.reason}"
            )
    return state


__all__ = [
    "DuplicateRecord",
    "Failure",
    "HistoryError",
    "HistoryRecord",
    "HistoryStore",
    "Outcome",
    "ReplayMismatch",
    "SCHEMA_VERSION",
    "Success",
    "record_from_dict",
    "record_to_dict",
    "replay",
]
