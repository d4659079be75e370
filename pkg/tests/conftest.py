import numpy as np
import pytest

from fewquery.embed import EmbeddingStore
from fewquery.ledger import QueryLedger
from fewquery.target import LocalTextClassifier, Prediction


class CountingTarget:
    """Wraps a target and counts every predict call it forwards."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def predict(self, tokens):
        self.calls += 1
        return self.inner.predict(tokens)


class KeywordTarget:
    """2-class stub: original class confidence drops by a fixed amount per trigger word."""

    def __init__(self, drops, base=0.9, flip_words=()):
        self.drops = dict(drops)
        self.base = base
        self.flip_words = set(flip_words)

    def predict(self, tokens):
        if not tokens:
            raise ValueError("empty")
        if self.flip_words & set(tokens):
            conf = 0.1
        else:
            conf = self.base - sum(self.drops.get(t, 0.0) for t in tokens)
            conf = min(max(conf, 0.0), 1.0)
        return Prediction.from_scores([conf, 1.0 - conf])


def keyword_classifier(word="wonderful", strength=4.0):
    """Hand-built bag-of-words model: class 1 iff ``word`` is present."""
    return LocalTextClassifier(
        {word: 0}, np.array([[0.0], [strength]]), np.array([0.0, -strength / 2]), ["neg", "pos"]
    )


def planted_store(scale=1.0):
    rng = np.random.default_rng(0)
    words = ["bad", "film", "plot", "actor", "scene", "music", "story", "movie"]
    rows = rng.normal(0.0, 0.3, size=(len(words), 6))
    rows[0] = [4.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    return EmbeddingStore(words, rows * scale)


def separable_ledger(seed=0):
    """40 flipped queries that contain "bad" and 40 unchanged ones that do not."""
    rng = np.random.default_rng(seed)
    neutral = ["film", "plot", "actor", "scene", "music", "story", "movie"]
    led = QueryLedger()
    for i in range(80):
        toks = list(rng.choice(neutral, size=5))
        flipped = i % 2 == 0
        if flipped:
            toks[rng.integers(5)] = "bad"
        p = Prediction.from_scores([0.2, 0.8] if flipped else [0.8, 0.2])
        led.record_query(i, toks, (), p, 0)
    return led


@pytest.fixture
def audit():
    """Register (CountingTarget, ledger) pairs; teardown checks one record per call."""
    pairs = []

    def register(target, ledger=None):
        counted = target if isinstance(target, CountingTarget) else CountingTarget(target)
        ledger = ledger if ledger is not None else QueryLedger()
        pairs.append((counted, ledger))
        return counted, ledger

    yield register
    for counted, ledger in pairs:
        assert counted.calls == len(ledger), f"{counted.calls} calls vs {len(ledger)} ledger records"


@pytest.fixture
def tiny_store():
    return EmbeddingStore(["a", "b", "c"], np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]]), name="tiny")


@pytest.fixture(scope="session")
def small_world(tmp_path_factory):
    """A reduced synthetic world with a trained target, shared across tests."""
    from fewquery.bench import load_dataset
    from fewquery.embed import load_embeddings
    from fewquery.synthetic import write_world
    from fewquery.target import train_local_target

    out = tmp_path_factory.mktemp("world")
    paths = write_world(out, n_train=800, n_test=200)
    train = load_dataset(paths["train"])
    test = load_dataset(paths["test"])
    model = train_local_target(train)
    model.save(out / "model.json")
    return {
        "paths": {**paths, "model": out / "model.json"},
        "train": train,
        "test": test,
        "model": model,
        "glove": load_embeddings(paths["glove"]),
        "counter": load_embeddings(paths["counter"]),
    }
