"""History store: append-only records, weight suggestion, replay checks."""

from __future__ import annotations

import random
from dataclasses import replace

import pytest

from parley.engine import Message, MessageKind
from parley.history import (
    DuplicateRecord,
    Failure,
    HistoryError,
    HistoryRecord,
    HistoryStore,
    ReplayMismatch,
    Success,
    record_from_dict,
    record_to_dict,
    replay,
)


def success_record(negotiation_id: str = "n1", product_id: str = "P1",
                   weights: dict | None = None, price: float = 120.0) -> HistoryRecord:
    transcript = (
        Message(MessageKind.OFFER, negotiation_id, "S", 0, {"a": 150.0}),
        Message(MessageKind.COUNTER_OFFER, negotiation_id, "B", 1, {"a": price}),
        Message(MessageKind.COUNTER_OFFER, negotiation_id, "S", 1, {"a": price}),
        Message(MessageKind.ACCEPT, negotiation_id, "B", 1, ("a",)),
        Message(MessageKind.FINALIZE, negotiation_id, "B", 1),
        Message(MessageKind.FINALIZE, negotiation_id, "S", 1),
    )
    return HistoryRecord(
        negotiation_id=negotiation_id,
        product_id=product_id,
        participants=("B", "S"),
        transcript=transcript,
        outcome=Success(final_prices={"a": price}, total=price),
        weights_used=weights or {"a": 1.0},
        timestamp_seq=1,
    )


def failure_record(negotiation_id: str = "n2") -> HistoryRecord:
    transcript = (
        Message(MessageKind.OFFER, negotiation_id, "S", 0, {"a": 150.0}),
        Message(MessageKind.COUNTER_OFFER, negotiation_id, "B", 1, {"a": 10.0}),
        Message(MessageKind.WITHDRAW, negotiation_id, "S", 1),
    )
    return HistoryRecord(
        negotiation_id=negotiation_id,
        product_id="P1",
        participants=("B", "S"),
        transcript=transcript,
        outcome=Failure(reason="round_limit"),
        weights_used={"a": 1.0},
        timestamp_seq=2,
    )


class TestAppend:
    def test_success_record_retrievable(self):
        store = HistoryStore()
        store.append(success_record())
        assert len(store) == 1
        assert store.get("n1").product_id == "P1"
        assert store.by_product("P1")[0].negotiation_id == "n1"

    def test_failure_record_stored_with_reason(self):
        store = HistoryStore()
        store.append(failure_record())
        record = store.get("n2")
        assert isinstance(record.outcome, Failure)
        assert record.outcome.reason == "round_limit"

    def test_duplicate_rejected(self):
        store = HistoryStore()
        store.append(success_record())
        with pytest.raises(DuplicateRecord):
            store.append(success_record())

    def test_empty_transcript_rejected(self):
        with pytest.raises(HistoryError):
            HistoryRecord("n", "P", ("A",), (), Failure("x"), {}, 0)

    def test_missing_record(self):
        with pytest.raises(HistoryError):
            HistoryStore().get("nope")


class TestSuggestWeights:
    def test_no_history_uniform(self):
        store = HistoryStore()
        assert store.suggest_weights("P1", ["a", "b"]) == {"a": 1.0, "b": 1.0}

    def test_mean_of_successes(self):
        store = HistoryStore()
        store.append(success_record("n1", weights={"a": 1.0}))
        store.append(success_record("n2", weights={"a": 3.0}))
        assert store.suggest_weights("P1", ["a"]) == {"a": 2.0}

    def test_other_product_falls_back(self):
        store = HistoryStore()
        store.append(success_record("n1", product_id="OTHER", weights={"a": 9.0}))
        assert store.suggest_weights("P1", ["a"]) == {"a": 1.0}

    def test_failures_excluded(self):
        store = HistoryStore()
        store.append(success_record("n1", weights={"a": 3.0}))
        failure = failure_record("n2")
        store.append(replace(failure, weights_used={"a": 99.0}))
        assert store.suggest_weights("P1", ["a"]) == {"a": 3.0}

    def test_permutation_invariant_and_positive(self):
        rng = random.Random(2)
        weights = [rng.uniform(0.1, 9.0) for _ in range(8)]
        first = HistoryStore()
        second = HistoryStore()
        for i, w in enumerate(weights):
            first.append(success_record(f"n{i}", weights={"a": w}))
        for i, w in reversed(list(enumerate(weights))):
            second.append(success_record(f"n{i}", weights={"a": w}))
        one = first.suggest_weights("P1", ["a"])["a"]
        other = second.suggest_weights("P1", ["a"])["a"]
        assert one == pytest.approx(other, rel=1e-9)
        assert one > 0


class TestReplay:
    def test_success_reproduced(self):
        state = replay(success_record())
        assert state.status == "finalized"
        assert state.final_prices == {"a": 120.0}

    def test_failure_reproduced(self):
        state = replay(failure_record())
        assert state.status == "aborted"
        assert state.reason == "round_limit"

    def test_tampered_price_detected(self):
        record = success_record()
        tampered = list(record.transcript)
        # alter the price inside the accepted standing offer
        bad = replace(tampered[2], payload={"a": 119.0})
        tampered[2] = bad
        with pytest.raises(ReplayMismatch):
            replay(replace(record, transcript=tuple(tampered)))

    def test_tampered_outcome_detected(self):
        record = success_record()
        with pytest.raises(ReplayMismatch):
            replay(replace(record, outcome=Success(final_prices={"a": 999.0},
                                                   total=999.0)))

    def test_wrong_status_detected(self):
        record = success_record()
        with pytest.raises(ReplayMismatch):
            replay(replace(record, outcome=Failure(reason="round_limit")))


class TestPersistence:
    def test_round_trip(self, tmp_path):
        store = HistoryStore()
        store.append(success_record())
        store.append(failure_record())
        store.log_alliance_event({"event": "alliance_formed", "members": ["a", "b"]})
        path = tmp_path / "history.jsonl"
        store.save(path)
        loaded = HistoryStore.load(path)
        assert len(loaded) == 2
        assert record_to_dict(loaded.get("n1")) == record_to_dict(store.get("n1"))
        assert loaded.alliance_events == store.alliance_events

    def test_header_line_versioned(self, tmp_path):
        store = HistoryStore()
        store.append(success_record())
        path = tmp_path / "history.jsonl"
        store.save(path)
        first = path.read_text().splitlines()[0]
        assert '"format":"history"' in first and '"version":1' in first

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "history.jsonl"
        path.write_text('{"format":"other"}\n')
        with pytest.raises(HistoryError):
            HistoryStore.load(path)

    def test_record_dict_round_trip(self):
        record = success_record()
        assert record_from_dict(record_to_dict(record)) == record
