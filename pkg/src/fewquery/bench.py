"""Datasets, experiment runs, ablations and reports."""
import csv
import dataclasses
import io
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, FormatError, QueryError
from .ledger import ATTACK_PHASES, QueryLedger, QuerySession
from .search import MODE_LABELS, SUCCESS, attack_document
from .surrogate import EMBEDDING, EncodedLedger, not_usable, train_surrogate
from .text import tokenize

log = logging.getLogger(__name__)

REPORT_FOOTER = (
    "Documents the target already misclassifies are never attacked: they count in the "
    "accuracy denominators, not in avg_queries or perturbation. Perturbation is averaged "
    "over successful attacks only. avg_queries counts ranking and substitution queries; "
    "the clean-document classification is in the ledger under phase 'original'."
)


@dataclass(frozen=True)
class LabeledDocument:
    id: int
    raw_text: str
    tokens: tuple
    gold_label: int


@dataclass(frozen=True)
class DatasetSummary:
    n_documents: int
    n_classes: int
    avg_length: float
    class_counts: tuple

    def __str__(self):
        return (
            f"{self.n_documents} documents, {self.n_classes} classes, "
            f"avg length {self.avg_length:.1f} tokens, per class {list(self.class_counts)}"
        )


def load_dataset(path, format=None, n_classes=None):
    """Read CSV (``text,label`` columns) or JSONL (``{"text", "label"}``) rows.

    Document ids are 0-based row numbers. Labels must be 0-based contiguous
    integers (below ``n_classes`` when given). Rows whose text tokenizes to
    nothing are skipped with a warning.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        if fmt == "csv":
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"text", "label"} <= set(reader.fieldnames):
                raise FormatError(f"{path}: CSV needs 'text' and 'label' columns")
            for lineno, row in enumerate(reader, start=2):
                rows.append((lineno, row["text"], row["label"]))
        elif fmt == "jsonl":
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    rows.append((lineno, obj["text"], obj["label"]))
                except (ValueError, KeyError, TypeError) as exc:
                    raise FormatError(f"bad JSONL row: {exc}", line=lineno) from None
        else:
            raise FormatError(f"unknown dataset format {fmt!r}")
    if not rows:
        raise FormatError(f"{path}: no rows")

    labels = []
    for lineno, _, raw in rows:
        try:
            lab = int(raw)
            if isinstance(raw, float) and raw != lab or isinstance(raw, bool):
                raise ValueError
        except (TypeError, ValueError):
            raise FormatError(f"label {raw!r} is not an integer", line=lineno) from None
        labels.append(lab)
    present = sorted(set(labels))
    if n_classes is None:
        if present != list(range(len(present))):
            raise FormatError(f"labels must be contiguous from 0, found {present}")
    else:
        bad = [(r[0], lab) for r, lab in zip(rows, labels) if not 0 <= lab < n_classes]
        if bad:
            raise FormatError(f"label {bad[0][1]} outside the {n_classes} declared classes", line=bad[0][0])

    docs = []
    skipped = 0
    for i, ((_, text, _), lab) in enumerate(zip(rows, labels)):
        toks = tuple(tokenize(text))
        if not toks:
            skipped += 1
            continue
        docs.append(LabeledDocument(i, text, toks, lab))
    if skipped:
        warnings.warn(f"{path}: skipped {skipped} document(s) with no tokens", stacklevel=2)
    return docs


def dataset_summary(docs, n_classes=None):
    if not docs:
        raise DomainError("empty dataset")
    k = n_classes or (max(d.gold_label for d in docs) + 1)
    counts = [0] * k
    for d in docs:
        counts[d.gold_label] += 1
    return DatasetSummary(len(docs), k, float(np.mean([len(d.tokens) for d in docs])), tuple(counts))


@dataclass
class DocumentRow:
    document_id: int
    order: int
    gold_label: int
    original_label: int
    skipped: bool
    status: str
    queries: int
    rank_queries: int
    perturbation_rate: float
    final_label: int
    ranking: str = ""


@dataclass
class MetricsReport:
    method: str
    mode: str
    original_accuracy: float
    after_attack_accuracy: float
    perturbation_rate_mean: float
    avg_queries: float
    n_sampled: int
    n_attacked: int
    n_success: int
    rows: list
    config: dict
    query_breakdown: dict = field(default_factory=dict)
    partial: bool = False
    footer: str = REPORT_FOOTER

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["rows"] = [DocumentRow(**r) for r in d["rows"]]
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"{path}: not a report ({exc})") from None


def summarize(rows, method="", mode="", config=None, breakdown=None, partial=False):
    """Corpus metrics from per-document rows.

    after-attack accuracy: documents still predicted as gold after the attack
    over all sampled documents; perturbation: mean over successes; queries:
    mean over attacked documents.
    """
    n = len(rows)
    if n == 0:
        raise DomainError("no documents in the report")
    correct0 = sum(r.original_label == r.gold_label for r in rows)
    still = sum(r.final_label == r.gold_label for r in rows)
    attacked = [r for r in rows if not r.skipped]
    wins = [r for r in attacked if r.status == SUCCESS]
    return MetricsReport(
        method=method,
        mode=mode,
        original_accuracy=correct0 / n,
        after_attack_accuracy=still / n,
        perturbation_rate_mean=float(np.mean([r.perturbation_rate for r in wins])) if wins else 0.0,
        avg_queries=float(np.mean([r.queries for r in attacked])) if attacked else 0.0,
        n_sampled=n,
        n_attacked=len(attacked),
        n_success=len(wins),
        rows=list(rows),
        config=dict(config or {}),
        query_breakdown=dict(breakdown or {}),
        partial=partial,
    )


def sample_documents(docs, sample_size, seed):
    """Seeded sample without replacement; identical seeds give identical order."""
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(docs))[: min(sample_size, len(docs))]
    return [docs[i] for i in idx]


@dataclass
class ExperimentOutput:
    report: MetricsReport
    ledger: QueryLedger
    results: list
    traces: dict


def run_experiment(
    dataset,
    target,
    config,
    *,
    counter_store,
    glove_store=None,
    sample_size=1000,
    seed=0,
    ledger=None,
    parallel=1,
    keep_traces=False,
):
    """Attack a seeded sample of ``dataset`` one document after another.

    Documents the target misclassifies are recorded and skipped. With the rank
    strategy on, the surrogate is retrained on the whole ledger after each
    document (every ``config.retrain_every`` documents when ``parallel > 1``).
    """
    ledger = ledger if ledger is not None else QueryLedger()
    sample = sample_documents(dataset, sample_size, seed)
    hyper = config.surrogate_config()
    use_rank = config.use_rank_strategy
    if use_rank and hyper.mode == EMBEDDING and glove_store is None:
        raise DomainError("the rank strategy in embedding mode needs the GloVe store")
    features = EncodedLedger(glove_store) if use_rank and hyper.mode == EMBEDDING else None
    ranker = not_usable(hyper.mode, 0, glove_store)
    rows, results, traces = [], [], {}
    partial = False

    def retrain():
        nonlocal ranker
        if use_rank:
            ranker = train_surrogate(ledger, glove_store, hyper.mode, hyper, previous=ranker, features=features)

    def one(order, doc, snapshot):
        session = QuerySession(target, ledger, doc.id, doc.tokens)
        pred = session.classify_original()
        if pred.label != doc.gold_label:
            row = DocumentRow(doc.id, order, doc.gold_label, pred.label, True, "skipped", 0, 0, 0.0, pred.label)
            return row, None
        res = attack_document(doc, target, config, ledger, snapshot, counter_store=counter_store, original=pred)
        final = res.adversarial_label if res.status == SUCCESS else pred.label
        row = DocumentRow(
            doc.id, order, doc.gold_label, pred.label, False, res.status, res.queries_used,
            res.rank_queries, res.perturbation_rate if res.status == SUCCESS else 0.0, final, res.ranking,
        )
        return row, res

    try:
        if parallel <= 1:
            for order, doc in enumerate(sample):
                row, res = one(order, doc, ranker)
                rows.append(row)
                if res is not None:
                    results.append(res)
                    if keep_traces:
                        traces[doc.id] = res.trace
                    retrain()
        else:
            step = max(1, config.retrain_every)
            with ThreadPoolExecutor(max_workers=parallel) as pool:
                for start in range(0, len(sample), step):
                    chunk = list(enumerate(sample))[start : start + step]
                    snapshot = ranker
                    outs = list(pool.map(lambda item: one(item[0], item[1], snapshot), chunk))
                    for row, res in outs:
                        rows.append(row)
                        if res is not None:
                            results.append(res)
                            if keep_traces:
                                traces[row.document_id] = res.trace
                    retrain()
    except QueryError as exc:
        log.error("target failed, report is partial: %s", exc)
        partial = True
        if not rows:
            raise

    ids = [r.document_id for r in rows if not r.skipped]
    breakdown = ledger.phase_breakdown([r.document_id for r in rows])
    report = summarize(
        rows,
        method=config.method,
        mode=config.mode_label,
        config=dict(config.to_dict(), sample_size=sample_size, sample_seed=seed),
        breakdown=breakdown,
        partial=partial,
    )
    if ids:
        log.info(
            "%s %s: acc %.3f -> %.3f, perturb %.3f, avg queries %.1f",
            config.method, config.mode_label, report.original_accuracy,
            report.after_attack_accuracy, report.perturbation_rate_mean, report.avg_queries,
        )
    return ExperimentOutput(report, ledger, results, traces)


def queries_from_ledger(ledger, rows):
    """Per-document attack-query counts recomputed from ledger records."""
    counts = {}
    for rec in ledger.records:
        if rec.phase in ATTACK_PHASES:
            counts[rec.document_id] = counts.get(rec.document_id, 0) + 1
    return {r.document_id: counts.get(r.document_id, 0) for r in rows if not r.skipped}


def avg_queries_from_ledger(ledger, rows):
    per_doc = queries_from_ledger(ledger, rows)
    return float(np.mean(list(per_doc.values()))) if per_doc else 0.0


ABLATION_MODES = [(False, False), (True, False), (False, True), (True, True)]


def run_ablation(dataset, target, base_config, seed=0, **kwargs):
    """Run the four strategy combinations on the same seeded sample."""
    outputs = {}
    for rank, rep in ABLATION_MODES:
        cfg = base_config.replace(use_rank_strategy=rank, use_replace_strategy=rep)
        outputs[MODE_LABELS[(rank, rep)]] = run_experiment(dataset, target, cfg, seed=seed, **kwargs)
    return outputs


def window(report, start, stop=None):
    """Recompute metrics over documents with ``start <= order < stop``."""
    rows = [r for r in report.rows if r.order >= start and (stop is None or r.order < stop)]
    return summarize(rows, report.method, report.mode, report.config, partial=report.partial)


TABLE_HEADER = ("mode", "Acc%", "Per%", "#Q")


def summary_row(report):
    return (
        report.mode,
        round(100 * report.after_attack_accuracy, 1),
        round(100 * report.perturbation_rate_mean, 1),
        int(round(report.avg_queries)),
    )


def render_table(reports):
    """Fixed-width human table, one row per report in the given order."""
    rows = [TABLE_HEADER] + [summary_row(r) for r in reports]
    cells = [[str(c) if not isinstance(c, float) else f"{c:.1f}" for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(TABLE_HEADER))]
    lines = []
    for k, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


SUMMARY_FIELDS = (
    "method", "mode", "original_accuracy", "after_attack_accuracy",
    "perturbation_rate_mean", "avg_queries", "n_sampled", "n_attacked", "n_success", "partial",
)


def render_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for r in reports:
        w.writerow([getattr(r, f) for f in SUMMARY_FIELDS])
    return buf.getvalue()


def emit_report(report, path, format="json"):
    """Write one report (or a list of them) as json, csv or a human table."""
    reports = report if isinstance(report, (list, tuple)) else [report]
    if format == "json":
        if len(reports) == 1:
            text = reports[0].to_json() + "\n"
        else:
            text = json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n"
    elif format == "csv":
        text = render_csv(reports)
    elif format == "table":
        text = render_table(reports) + "\n\n" + REPORT_FOOTER + "\n"
    else:
        raise DomainError(f"unknown report format {format!r}")
    if path is None:
        return text
    Path(path).write_text(text, encoding="utf-8")
    return text
