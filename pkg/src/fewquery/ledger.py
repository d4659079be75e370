"""Append-only record of every query sent to a target.

The ledger is the single source of truth for query counts and the training
data for the surrogate ranker. ``QuerySession`` is the only code path that
calls a target during an attack, so it is where the one-call-one-record rule
is enforced.
"""
import json
import threading
from collections import Counter
from dataclasses import dataclass

from .errors import BudgetExhausted, DomainError, FormatError

# Phase tags. ORIGINAL is the clean-document classification; RANK covers
# deletion probes; SEARCH covers substitution queries.
ORIGINAL = "original"
RANK = "rank"
SEARCH = "search"
ATTACK_PHASES = (RANK, SEARCH)


@dataclass(frozen=True)
class QueryRecord:
    document_id: object
    tokens: tuple
    perturbed_positions: tuple
    predicted_label: int
    confidence_in_original_class: float
    unchanged: bool
    original_label: int
    phase: str = SEARCH

    def __post_init__(self):
        if self.unchanged != (self.predicted_label == self.original_label):
            raise DomainError("unchanged flag disagrees with labels")
        if any(not 0 <= p < len(self.tokens) for p in self.perturbed_positions):
            raise DomainError("perturbed position outside the token sequence")

    @property
    def flipped(self):
        return not self.unchanged

    def to_json(self):
        return {
            "doc_id": self.document_id,
            "tokens": list(self.tokens),
            "perturbed": list(self.perturbed_positions),
            "label": self.predicted_label,
            "conf_orig": self.confidence_in_original_class,
            "unchanged": self.unchanged,
            "orig_label": self.original_label,
            "phase": self.phase,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            document_id=obj["doc_id"],
            tokens=tuple(obj["tokens"]),
            perturbed_positions=tuple(obj["perturbed"]),
            predicted_label=int(obj["label"]),
            confidence_in_original_class=float(obj["conf_orig"]),
            unchanged=bool(obj["unchanged"]),
            original_label=int(obj["orig_label"]),
            phase=obj.get("phase", SEARCH),
        )


class QueryLedger:
    def __init__(self):
        self._records = []
        self._counts = Counter()
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(self.records)

    def __eq__(self, other):
        return isinstance(other, QueryLedger) and self.records == other.records

    @property
    def records(self):
        with self._lock:
            return tuple(self._records)

    def count(self, document_id, phases=None):
        if phases is None:
            return self._counts.get(document_id, 0)
        return sum(1 for r in self.records if r.document_id == document_id and r.phase in phases)

    def counts(self):
        return dict(self._counts)

    def record_query(self, document_id, tokens, perturbed_positions, prediction, original_label, phase=SEARCH):
        rec = QueryRecord(
            document_id=document_id,
            tokens=tuple(tokens),
            perturbed_positions=tuple(sorted(perturbed_positions)),
            predicted_label=prediction.label,
            confidence_in_original_class=prediction.scores[original_label],
            unchanged=prediction.label == original_label,
            original_label=original_label,
            phase=phase,
        )
        self._append(rec)
        return rec

    def _append(self, rec):
        with self._lock:
            self._records.append(rec)
            self._counts[rec.document_id] += 1

    def phase_breakdown(self, document_ids=None):
        ids = None if document_ids is None else set(document_ids)
        out = Counter()
        for r in self.records:
            if ids is None or r.document_id in ids:
                out[r.phase] += 1
        return dict(out)

    def persist(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for r in self.records:
                fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")

    @classmethod
    def restore(cls, path):
        ledger = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    ledger._append(QueryRecord.from_json(json.loads(line)))
                except (ValueError, KeyError, TypeError) as exc:
                    raise FormatError(f"bad ledger record: {exc}", line=lineno) from None
        return ledger


def average_queries(ledger, document_ids, phases=None):
    """Mean per-document query count; documents never queried count as 0.

    ``phases`` restricts which records count (default: all of them).
    """
    ids = list(document_ids)
    if not ids:
        raise DomainError("average over an empty document set")
    if phases is None:
        return sum(ledger.count(d) for d in ids) / len(ids)
    per_doc = Counter(r.document_id for r in ledger.records if r.phase in phases)
    return sum(per_doc.get(d, 0) for d in ids) / len(ids)


class QuerySession:
    """One document's view of a target: every call is budgeted and recorded.

    ``budget`` caps attack-phase queries (ranking probes plus substitutions);
    the clean-document classification is recorded but not charged.
    """

    def __init__(self, target, ledger, document_id, original_tokens, budget=None):
        self.target = target
        self.ledger = ledger
        self.document_id = document_id
        self.original_tokens = tuple(original_tokens)
        self.budget = budget
        self.used = 0
        self.original = None
        self.original_label = None

    def classify_original(self, prediction=None):
        """Query (or adopt an already recorded) clean prediction."""
        if prediction is None:
            prediction = self.target.predict(list(self.original_tokens))
            self.ledger.record_query(
                self.document_id, self.original_tokens, (), prediction, prediction.label, phase=ORIGINAL
            )
        self.original = prediction
        self.original_label = prediction.label
        return prediction

    @property
    def remaining(self):
        return None if self.budget is None else self.budget - self.used

    def query(self, tokens, perturbed_positions, phase=SEARCH):
        if self.original is None:
            raise DomainError("classify_original must run before attack queries")
        if self.budget is not None and self.used >= self.budget:
            raise BudgetExhausted(f"document {self.document_id}: budget of {self.budget} queries spent")
        pred = self.target.predict(list(tokens))
        self.used += 1
        self.ledger.record_query(self.document_id, tokens, perturbed_positions, pred, self.original_label, phase)
        return pred
