"""Learned word importance from past queries.

A binary logistic regression is fit on every attack query recorded so far,
with label 1 for queries that flipped the target's prediction. A word's score
is its contribution to that logit: ``dot(beta, emb(word))`` when queries are
encoded as mean word embeddings, or ``beta[word]`` in bag-of-words mode.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateEncodingError, DomainError
from .ledger import ATTACK_PHASES, RANK
from .text import STOPWORDS

log = logging.getLogger(__name__)

EMBEDDING = "embedding"
BAG_OF_WORDS = "bag-of-words"
MODES = (EMBEDDING, BAG_OF_WORDS)


@dataclass
class SurrogateConfig:
    mode: str = EMBEDDING
    min_train: int = 50
    learning_rate: float = 0.1
    epochs: int = 300
    l2: float = 1e-4
    seed: int = 0
    warm_start: bool = False
    # fit on mean-centered features, folding the shift back into the bias
    center: bool = False


@dataclass(frozen=True)
class WordScore:
    position: int
    word: str
    score: float


@dataclass(eq=False)
class SurrogateRanker:
    mode: str
    weights: np.ndarray
    bias: float
    trained_on: int
    usable: bool = True
    vocabulary: dict = field(default_factory=dict)
    store: object = field(default=None, repr=False)
    loss_history: list = field(default_factory=list, repr=False)

    @property
    def embedding_dim(self):
        return len(self.weights) if self.mode == EMBEDDING else None

    def word_score(self, word):
        if not self.usable:
            return 0.0
        if self.mode == EMBEDDING:
            vec = self.store.get(word) if self.store is not None else None
            return 0.0 if vec is None else float(np.dot(self.weights, vec))
        j = self.vocabulary.get(word)
        return 0.0 if j is None else float(self.weights[j])

    def to_dict(self):
        d = {
            "mode": self.mode,
            "weights": [float(x) for x in self.weights],
            "bias": float(self.bias),
            "trained_on": self.trained_on,
            "embedding_dim": self.embedding_dim,
        }
        if self.mode == BAG_OF_WORDS:
            d["vocabulary"] = sorted(self.vocabulary, key=self.vocabulary.__getitem__)
        return d

    @classmethod
    def from_dict(cls, d, store=None):
        vocab = {w: i for i, w in enumerate(d.get("vocabulary", []))}
        return cls(
            mode=d["mode"],
            weights=np.asarray(d["weights"], dtype=np.float64),
            bias=float(d["bias"]),
            trained_on=int(d["trained_on"]),
            vocabulary=vocab,
            store=store,
        )


def not_usable(mode, trained_on=0, store=None):
    return SurrogateRanker(mode, np.zeros(0), 0.0, trained_on, usable=False, store=store)


def word_score(ranker, word):
    return ranker.word_score(word)


def encode_query(record, store, mode=EMBEDDING, vocabulary=None):
    """Feature vector for one query (a ``QueryRecord`` or a token sequence)."""
    tokens = getattr(record, "tokens", record)
    if mode == EMBEDDING:
        rows = [store.index(t) for t in tokens if t in store]
        if not rows:
            raise DegenerateEncodingError("no in-vocabulary tokens to encode")
        return store.matrix[rows].mean(axis=0)
    if mode == BAG_OF_WORDS:
        if vocabulary is None:
            raise DomainError("bag-of-words encoding needs a vocabulary")
        x = np.zeros(len(vocabulary))
        for t in tokens:
            j = vocabulary.get(t)
            if j is not None:
                x[j] = 1.0
        return x
    raise DomainError(f"unknown encoding mode {mode!r}")


def logistic_loss_grad(theta, X, y, l2):
    """Mean log-loss plus ``l2/2 * |w|^2`` and its gradient.

    ``theta`` is ``[w..., b]``; the bias is not regularized.
    """
    w, b = theta[:-1], theta[-1]
    z = X @ w + b
    # log(1 + e^z) - y z, computed stably
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * np.dot(w, w)
    p = 0.5 * (1.0 + np.tanh(0.5 * z))
    r = (p - y) / len(y)
    grad = np.empty_like(theta)
    grad[:-1] = X.T @ r + l2 * w
    grad[-1] = r.sum()
    return float(loss), grad


def fit_logistic(X, y, config, init=None):
    """Full-batch gradient descent; returns ``(w, b, loss_history)``."""
    n, d = X.shape
    mu = X.mean(axis=0) if config.center else np.zeros(d)
    Xc = X - mu
    if init is not None:
        w0, b0 = init
        theta = np.concatenate([w0, [b0 + float(np.dot(w0, mu))]])
    else:
        rng = np.random.default_rng(config.seed)
        theta = np.concatenate([rng.normal(0.0, 1e-3, size=d), [0.0]])
    history = []
    for _ in range(config.epochs):
        loss, grad = logistic_loss_grad(theta, Xc, y, config.l2)
        history.append(loss)
        theta -= config.learning_rate * grad
    history.append(logistic_loss_grad(theta, Xc, y, config.l2)[0])
    w = theta[:-1].copy()
    b = float(theta[-1] - np.dot(w, mu))
    return w, b, history


class EncodedLedger:
    """Incrementally encoded attack-phase records of one ledger (embedding mode)."""

    def __init__(self, store):
        self.store = store
        self._seen = 0
        self._X = []
        self._y = []
        self.skipped = 0

    def update(self, ledger):
        records = ledger.records
        skipped_before = self.skipped
        for rec in records[self._seen :]:
            if rec.phase not in ATTACK_PHASES:
                continue
            try:
                self._X.append(encode_query(rec, self.store, EMBEDDING))
            except DegenerateEncodingError:
                self.skipped += 1
                continue
            self._y.append(0.0 if rec.unchanged else 1.0)
        if self.skipped > skipped_before:
            log.warning("%d quer(ies) had no in-vocabulary tokens; left out of surrogate training", self.skipped - skipped_before)
        self._seen = len(records)
        return self

    def arrays(self):
        d = self.store.dim
        X = np.array(self._X).reshape(len(self._X), d)
        return X, np.array(self._y)


def _bow_arrays(records):
    words = sorted({t for r in records for t in r.tokens})
    vocab = {w: i for i, w in enumerate(words)}
    X = np.zeros((len(records), len(vocab)))
    for i, r in enumerate(records):
        for t in r.tokens:
            X[i, vocab[t]] = 1.0
    y = np.array([0.0 if r.unchanged else 1.0 for r in records])
    return X, y, vocab


def train_surrogate(ledger, store=None, mode=EMBEDDING, hyper=None, previous=None, features=None):
    """Fit the ranker on the ledger's attack-phase records.

    Returns a ranker with ``usable=False`` when there are fewer than
    ``hyper.min_train`` records or only one outcome class. ``previous`` is used
    as the starting point when ``hyper.warm_start`` is set; ``features`` is an
    optional ``EncodedLedger`` reused across calls.
    """
    hyper = hyper or SurrogateConfig(mode=mode)
    if mode not in MODES:
        raise DomainError(f"unknown encoding mode {mode!r}")
    if mode == EMBEDDING:
        if store is None:
            raise DomainError("embedding mode needs an embedding store")
        enc = features if features is not None else EncodedLedger(store)
        X, y = enc.update(ledger).arrays()
        vocab = {}
    else:
        records = [r for r in ledger.records if r.phase in ATTACK_PHASES]
        X, y, vocab = _bow_arrays(records)
    n = len(y)
    n_pos = int(y.sum())
    if n < hyper.min_train or n_pos == 0 or n_pos == n:
        return not_usable(mode, n, store)
    init = None
    if hyper.warm_start and previous is not None and previous.usable and previous.mode == mode:
        if mode == EMBEDDING:
            init = (previous.weights, previous.bias)
        else:
            w0 = np.zeros(len(vocab))
            for word, j in previous.vocabulary.items():
                if word in vocab:
                    w0[vocab[word]] = previous.weights[j]
            init = (w0, previous.bias)
    w, b, history = fit_logistic(X, y, hyper, init)
    return SurrogateRanker(mode, w, b, n, True, vocab, store, history)


def rank_words_surrogate(ranker, tokens, stoplist=STOPWORDS):
    stop = stoplist or ()
    scored = [WordScore(i, t, ranker.word_score(t)) for i, t in enumerate(tokens) if t not in stop]
    scored.sort(key=lambda ws: (-ws.score, ws.position))
    return scored


def rank_words_deletion(tokens, session, stoplist=STOPWORDS):
    """Importance = drop in original-class confidence when the word is deleted.

    Every probe is a real query through ``session`` and lands in the ledger.
    """
    if len(tokens) == 0:
        raise DomainError("cannot rank an empty document")
    stop = stoplist or ()
    label = session.original_label
    full = session.original.scores[label]
    scored = []
    for i, t in enumerate(tokens):
        if t in stop:
            continue
        probe = list(tokens[:i]) + list(tokens[i + 1 :])
        if not probe:
            scored.append(WordScore(i, t, 0.0))
            continue
        pred = session.query(probe, (), phase=RANK)
        scored.append(WordScore(i, t, full - pred.scores[label]))
    scored.sort(key=lambda ws: (-ws.score, ws.position))
    return scored
