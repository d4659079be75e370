import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fewquery.errors import BudgetExhausted, DomainError, FormatError
from fewquery.ledger import (
    ORIGINAL,
    RANK,
    SEARCH,
    QueryLedger,
    QueryRecord,
    QuerySession,
    average_queries,
)
from fewquery.target import Prediction

from conftest import CountingTarget, KeywordTarget


def pred(conf0):
    return Prediction.from_scores([conf0, 1.0 - conf0])


def test_record_fields_and_unchanged_flag():
    led = QueryLedger()
    a = led.record_query(7, ["x", "y"], [1], pred(0.8), 0)
    b = led.record_query(7, ["x", "z"], [1], pred(0.2), 0)
    assert a.unchanged and not a.flipped
    assert b.flipped and b.predicted_label == 1
    assert b.confidence_in_original_class == pytest.approx(0.2)
    assert led.count(7) == 2
    assert led.count(8) == 0


def test_record_validation():
    with pytest.raises(DomainError):
        QueryRecord(0, ("a",), (), 1, 0.3, True, 0)
    with pytest.raises(DomainError):
        QueryRecord(0, ("a",), (3,), 0, 0.9, True, 0)


def test_hundred_calls_hundred_records(audit):
    target, led = audit(KeywordTarget({"bad": 0.01}))
    session = QuerySession(target, led, "d", ["good", "film"], budget=None)
    session.classify_original()
    for i in range(99):
        session.query(["bad"] * (i + 1), ())
    assert len(led) == 100
    assert led.count("d") == 100
    assert led.count("d", phases=(SEARCH,)) == 99
    assert session.used == 99


def test_average_queries_examples():
    led = QueryLedger()
    for _ in range(3):
        led.record_query("a", ["t"], (), pred(0.9), 0)
    for _ in range(5):
        led.record_query("b", ["t"], (), pred(0.9), 0)
    assert average_queries(led, ["a", "b"]) == 4.0
    assert average_queries(led, ["a", "b", "never"]) == pytest.approx(8 / 3)
    with pytest.raises(DomainError):
        average_queries(led, [])


def test_average_queries_phase_filter():
    led = QueryLedger()
    led.record_query(1, ["t"], (), pred(0.9), 0, phase=ORIGINAL)
    led.record_query(1, ["t"], (), pred(0.9), 0, phase=RANK)
    led.record_query(1, ["t"], (), pred(0.9), 0, phase=SEARCH)
    assert average_queries(led, [1]) == 3
    assert average_queries(led, [1], phases=(RANK, SEARCH)) == 2
    assert led.phase_breakdown() == {ORIGINAL: 1, RANK: 1, SEARCH: 1}


def test_single_document_average():
    led = QueryLedger()
    for _ in range(1134):
        led.record_query("long-doc", ["t"], (), pred(0.9), 0)
    assert average_queries(led, ["long-doc"]) == 1134.0


def test_known_average_fixture():
    # 10 documents averaging 1134 queries
    led = QueryLedger()
    per_doc = [1134 + d for d in (-9, -7, -5, -3, -1, 1, 3, 5, 7, 9)]
    for doc, n in enumerate(per_doc):
        for _ in range(n):
            led.record_query(doc, ["t"], (), pred(0.9), 0)
    assert average_queries(led, range(10)) == 1134.0


def test_persist_restore_round_trip(tmp_path):
    led = QueryLedger()
    led.record_query(0, ["a", "b", "c"], [2, 0], pred(0.7), 0, phase=RANK)
    led.record_query("doc-1", ["é", "b"], [], pred(0.1), 0)
    led.record_query(3, ["a"], [0], Prediction.from_scores([0.2, 0.3, 0.5]), 2)
    path = tmp_path / "ledger.jsonl"
    led.persist(path)
    back = QueryLedger.restore(path)
    assert back == led
    assert back.records[0].perturbed_positions == (0, 2)
    assert back.counts() == led.counts()


def test_restore_bad_record_names_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    led = QueryLedger()
    led.record_query(0, ["a"], [], pred(0.9), 0)
    led.persist(path)
    with open(path, "a") as fh:
        fh.write('{"doc_id": 1}\n')
    with pytest.raises(FormatError) as err:
        QueryLedger.restore(path)
    assert err.value.line == 2


def test_concurrent_appends_lose_nothing():
    led = QueryLedger()

    def work(doc):
        for _ in range(500):
            led.record_query(doc, ["t"], (), pred(0.9), 0)

    threads = [threading.Thread(target=work, args=(d,)) for d in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(led) == 4000
    assert all(led.count(d) == 500 for d in range(8))


def test_budget_stops_before_the_call(audit):
    target, led = audit(KeywordTarget({}))
    session = QuerySession(target, led, 0, ["a"], budget=3)
    session.classify_original()
    for _ in range(3):
        session.query(["a"], ())
    with pytest.raises(BudgetExhausted):
        session.query(["a"], ())
    assert session.used == 3
    assert target.calls == 4
    assert session.remaining == 0


def test_query_before_original_is_rejected():
    session = QuerySession(KeywordTarget({}), QueryLedger(), 0, ["a"])
    with pytest.raises(DomainError):
        session.query(["a"], ())


def test_supplied_original_is_not_requeried():
    target = CountingTarget(KeywordTarget({}))
    led = QueryLedger()
    session = QuerySession(target, led, 0, ["a"])
    session.classify_original(pred(0.9))
    assert target.calls == 0 and len(led) == 0
    assert session.original_label == 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.floats(0.0, 1.0)), max_size=60))
def test_counts_match_record_multiset(entries):
    led = QueryLedger()
    for doc, conf in entries:
        led.record_query(doc, ["t"], (), pred(conf), 0)
    for doc in range(5):
        assert led.count(doc) == sum(1 for r in led.records if r.document_id == doc)
    assert sum(led.counts().values()) == len(entries)
