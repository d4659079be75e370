import json

import pytest

from fewquery.bench import (
    DocumentRow,
    MetricsReport,
    avg_queries_from_ledger,
    dataset_summary,
    emit_report,
    load_dataset,
    queries_from_ledger,
    render_table,
    run_ablation,
    run_experiment,
    sample_documents,
    summarize,
    window,
)
from fewquery.errors import DomainError, FormatError
from fewquery.ledger import RANK, SEARCH
from fewquery.search import SUCCESS, AttackConfig

from conftest import CountingTarget, KeywordTarget


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


def test_jsonl_ids_are_row_numbers(tmp_path):
    p = write_jsonl(tmp_path / "d.jsonl", [{"text": "Good film!", "label": 1}, {"text": "bad", "label": 0}])
    docs = load_dataset(p)
    assert [d.id for d in docs] == [0, 1]
    assert docs[0].tokens == ("good", "film")
    assert docs[0].raw_text == "Good film!"


def test_csv_label_outside_declared_classes(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("text,label\ngood,0\nbad,5\n", encoding="utf-8")
    with pytest.raises(FormatError) as err:
        load_dataset(p, n_classes=2)
    assert err.value.line == 3


def test_non_contiguous_labels_rejected(tmp_path):
    p = write_jsonl(tmp_path / "d.jsonl", [{"text": "a", "label": 0}, {"text": "b", "label": 2}])
    with pytest.raises(FormatError):
        load_dataset(p)


def test_empty_documents_are_skipped_with_warning(tmp_path):
    p = write_jsonl(tmp_path / "d.jsonl", [{"text": "a", "label": 0}, {"text": " !! ", "label": 1}, {"text": "c", "label": 1}])
    with pytest.warns(UserWarning, match="skipped 1"):
        docs = load_dataset(p)
    assert [d.id for d in docs] == [0, 2]


def test_four_class_summary(tmp_path):
    rows = [{"text": f"news item {i} " * (1 + i % 3), "label": i % 4} for i in range(40)]
    summary = dataset_summary(load_dataset(write_jsonl(tmp_path / "ag.jsonl", rows)))
    assert summary.n_classes == 4
    assert summary.class_counts == (10, 10, 10, 10)
    assert summary.n_documents == 40
    assert "4 classes" in str(summary)


def docs_from(texts_labels):
    from fewquery.bench import LabeledDocument

    return [LabeledDocument(i, t, tuple(t.split()), y) for i, (t, y) in enumerate(texts_labels)]


def test_all_misclassified_gives_zero_attacks(tiny_store):
    docs = docs_from([("a b", 1), ("b c", 1), ("c a", 1), ("a", 1), ("b", 1)] * 2)
    target = CountingTarget(KeywordTarget({}))
    out = run_experiment(docs, target, AttackConfig(n_neighbors=2, k_direction=1), counter_store=tiny_store, sample_size=10)
    r = out.report
    assert (r.original_accuracy, r.after_attack_accuracy, r.n_attacked, r.avg_queries) == (0.0, 0.0, 0, 0.0)
    assert target.calls == len(out.ledger) == 10


def test_first_query_flip_costs_one_plus_ranking(tiny_store):
    # "b" is the only candidate for "a" and flips the stub; "c" has no candidates
    docs = docs_from([("a c", 0), ("c a c", 0), ("a", 0)])
    target = CountingTarget(KeywordTarget({}, flip_words={"b"}))
    cfg = AttackConfig(n_neighbors=2, k_direction=1, use_stoplist=False)
    out = run_experiment(docs, target, cfg, counter_store=tiny_store, sample_size=10)
    assert all(r.status == "success" for r in out.report.rows)
    ranking_cost = {0: 2, 1: 3, 2: 0}
    for row in out.report.rows:
        assert row.rank_queries == ranking_cost[row.document_id]
        assert row.queries == 1 + ranking_cost[row.document_id]
    assert out.report.avg_queries == (3 + 4 + 1) / 3
    assert target.calls == len(out.ledger)


def test_stub_accounting_matches_ledger(tiny_store):
    docs = docs_from([("a c", 0), ("b c", 0), ("a a b", 0), ("c", 0)])
    target = CountingTarget(KeywordTarget({"b": 0.3}, flip_words={"c"}))
    cfg = AttackConfig(n_neighbors=2, k_direction=1, use_stoplist=False)
    out = run_experiment(docs, target, cfg, counter_store=tiny_store, sample_size=10)
    assert target.calls == len(out.ledger)
    per_doc = queries_from_ledger(out.ledger, out.report.rows)
    for row in out.report.rows:
        if not row.skipped:
            assert per_doc[row.document_id] == row.queries
    assert avg_queries_from_ledger(out.ledger, out.report.rows) == out.report.avg_queries


def test_sample_size_is_echoed_and_capped(tiny_store):
    docs = docs_from([("a b", 0)] * 5)
    out = run_experiment(docs, KeywordTarget({}), AttackConfig(n_neighbors=2, k_direction=1), counter_store=tiny_store, sample_size=1000)
    assert out.report.config["sample_size"] == 1000
    assert out.report.n_sampled == 5


def test_sampling_is_seeded():
    docs = list(range(100))
    assert sample_documents(docs, 10, 4) == sample_documents(docs, 10, 4)
    assert sample_documents(docs, 10, 4) != sample_documents(docs, 10, 5)


def test_rank_strategy_needs_glove(tiny_store):
    with pytest.raises(DomainError):
        run_experiment(docs_from([("a", 0)]), KeywordTarget({}), AttackConfig(use_rank_strategy=True), counter_store=tiny_store)


def _report(mode, q, acc=0.1, per=0.05):
    return MetricsReport("greedy", mode, 0.9, acc, per, q, 10, 9, 8, [], {})


def test_table_keeps_given_order():
    reps = [_report("baseline", 1134.0), _report("+WRankS", 430.2), _report("+WRepS", 829.4), _report("+both", 403.6)]
    lines = render_table(reps).splitlines()
    assert [l.split()[0] for l in lines[2:]] == ["baseline", "+WRankS", "+WRepS", "+both"]
    assert [int(l.split()[-1]) for l in lines[2:]] == [1134, 430, 829, 404]
    assert lines[2].split()[1:3] == ["10.0", "5.0"]


def test_report_json_round_trip(tmp_path):
    row = DocumentRow(3, 0, 1, 1, False, SUCCESS, 12, 4, 0.1, 0, "deletion")
    rep = summarize([row], "greedy", "baseline", {"seed": 0}, {SEARCH: 8, RANK: 4})
    path = tmp_path / "r.json"
    emit_report(rep, path, "json")
    back = MetricsReport.load(path)
    assert back == rep
    assert back.to_json() == rep.to_json()
    assert "misclassifies" in back.footer


def test_report_load_rejects_garbage(tmp_path):
    p = tmp_path / "r.json"
    p.write_text("{}")
    with pytest.raises(FormatError):
        MetricsReport.load(p)


def test_csv_and_table_emit(tmp_path):
    reps = [_report("baseline", 10.0), _report("+both", 5.0)]
    text = emit_report(reps, None, "csv")
    assert text.splitlines()[0].startswith("method,mode")
    assert len(text.splitlines()) == 3
    emit_report(reps, tmp_path / "t.txt", "table")
    assert "+both" in (tmp_path / "t.txt").read_text()


def test_summarize_semantics():
    rows = [
        DocumentRow(0, 0, 1, 1, False, SUCCESS, 10, 2, 0.2, 0),
        DocumentRow(1, 1, 1, 1, False, "exhausted-candidates", 30, 2, 0.0, 1),
        DocumentRow(2, 2, 0, 1, True, "skipped", 0, 0, 0.0, 1),
    ]
    r = summarize(rows)
    assert r.original_accuracy == pytest.approx(2 / 3)
    assert r.after_attack_accuracy == pytest.approx(1 / 3)
    assert r.avg_queries == 20.0
    assert r.perturbation_rate_mean == 0.2
    assert window(r, 1, 2).n_sampled == 1
    with pytest.raises(DomainError):
        summarize([])


def test_ablation_on_small_world(small_world):
    base = AttackConfig(n_neighbors=50, k_direction=15, max_queries_per_doc=300)
    outs = run_ablation(
        small_world["test"], small_world["model"], base, seed=2, counter_store=small_world["counter"],
        glove_store=small_world["glove"], sample_size=30,
    )
    assert list(outs) == ["baseline", "+WRankS", "+WRepS", "+both"]
    samples = [[r.document_id for r in o.report.rows] for o in outs.values()]
    assert all(s == samples[0] for s in samples)
    for o in outs.values():
        assert avg_queries_from_ledger(o.ledger, o.report.rows) == o.report.avg_queries
        assert o.report.original_accuracy == outs["baseline"].report.original_accuracy
        assert o.report.after_attack_accuracy <= o.report.original_accuracy


def test_parallel_run_keeps_accounting(small_world):
    cfg = AttackConfig(n_neighbors=50, k_direction=15, use_rank_strategy=True, retrain_every=5, max_queries_per_doc=300)
    target = CountingTarget(small_world["model"])
    out = run_experiment(
        small_world["test"], target, cfg, counter_store=small_world["counter"],
        glove_store=small_world["glove"], sample_size=20, parallel=4,
    )
    assert target.calls == len(out.ledger)
    assert [r.order for r in out.report.rows] == list(range(20))
    assert avg_queries_from_ledger(out.ledger, out.report.rows) == out.report.avg_queries
