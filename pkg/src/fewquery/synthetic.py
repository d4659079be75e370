"""Synthetic sentiment corpus with matching word-vector files.

Real corpora and 200-d GloVe/counter-fitted vectors are too large to ship, so
the benchmark runs on a generated world with the same moving parts:

* Sentiment words come in synonym families. Within a family, members differ
  in how strongly (and sometimes in which direction) the corpus uses them, so
  a trained classifier weighs synonyms differently; some members are so rare
  the classifier never sees them.
* The "counter-fitted" space places each family in a tight cluster and spreads
  its members along a polarity axis in proportion to their corpus polarity.
  Neutral words form small clusters of their own or sit alone.
* The "GloVe" space is a separate embedding of the same words: family and
  topic structure plus a shared evaluative axis, in a different random basis.
"""
import json
import string
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embed import EmbeddingStore, save_embeddings
from .text import STOPWORDS

_ONSETS = ["b", "br", "c", "ch", "d", "dr", "f", "fl", "g", "gr", "h", "j", "k", "l", "m", "n", "p",
           "pl", "qu", "r", "s", "sh", "sl", "st", "t", "th", "tr", "v", "w", "z"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ea", "ee", "oo", "ou"]
_CODAS = ["", "", "n", "r", "l", "s", "t", "nd", "st", "ck", "m", "ng"]


@dataclass
class WorldConfig:
    seed: int = 7
    dim: int = 50
    families_per_polarity: int = 15
    family_size: int = 12
    theme_size: int = 3
    rare_fraction: float = 0.25
    neutral_clusters: int = 120
    neutral_cluster_size: tuple = (1, 4)
    doc_len: tuple = (18, 36)
    sentiment_words: tuple = (2, 5)
    wrong_polarity_rate: float = 0.15
    stopword_rate: float = 0.35


@dataclass
class World:
    config: WorldConfig
    polarity: dict  # word -> signed corpus polarity in [-1, 1]; neutral words absent
    frequency: dict  # word -> relative sampling weight inside its family/cluster
    families: list  # list of (sign, [words])
    neutral: list  # list of [words]
    glove: EmbeddingStore
    counter: EmbeddingStore
    stopwords: list = field(default_factory=list)

    @property
    def vocabulary(self):
        return list(self.counter.words)


def _word_factory(rng):
    used = set(STOPWORDS)

    def make():
        while True:
            n = rng.integers(2, 4)
            w = "".join(
                _ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(n)
            ) + _CODAS[rng.integers(len(_CODAS))]
            if w not in used and all(c in string.ascii_lowercase for c in w):
                used.add(w)
                return w

    return make


def _unit(v):
    return v / np.linalg.norm(v)


def build_world(config=None):
    cfg = config or WorldConfig()
    rng = np.random.default_rng(cfg.seed)
    new_word = _word_factory(rng)
    d = cfg.dim

    polarity, frequency = {}, {}
    families, neutral = [], []
    for sign in (1, -1):
        for _ in range(cfg.families_per_polarity):
            words = [new_word() for _ in range(cfg.family_size)]
            # strongest first; a tail of members the corpus uses weakly or against type
            strengths = np.sort(rng.uniform(-0.5, 1.0, size=cfg.family_size))[::-1]
            strengths[0] = 1.0
            for w, s in zip(words, strengths):
                polarity[w] = float(sign * s)
                rare = rng.random() < cfg.rare_fraction
                frequency[w] = 0.0 if rare else float(rng.uniform(0.3, 1.0))
            frequency[words[0]] = 1.0
            families.append((sign, words))
    for _ in range(cfg.neutral_clusters):
        size = rng.integers(cfg.neutral_cluster_size[0], cfg.neutral_cluster_size[1] + 1)
        words = [new_word() for _ in range(size)]
        for w in words:
            frequency[w] = float(rng.uniform(0.2, 1.0))
        neutral.append(words)

    counter = _counter_space(rng, d, families, neutral, polarity, cfg.theme_size)
    glove = _glove_space(rng, d, families, neutral, polarity)
    return World(cfg, polarity, frequency, families, neutral, glove, counter, sorted(STOPWORDS))


def _counter_space(rng, d, families, neutral, polarity, theme_size):
    axis = _unit(rng.normal(size=d))
    words, rows = [], []
    for k, (sign, members) in enumerate(families):
        if k % theme_size == 0:
            theme = _unit(rng.normal(size=d))
        center = _unit(0.8 * theme + 0.6 * _unit(rng.normal(size=d)))
        for w in members:
            words.append(w)
            rows.append(center + 0.45 * polarity[w] * axis + 0.3 * _unit(rng.normal(size=d)))
    for members in neutral:
        center = _unit(rng.normal(size=d))
        for w in members:
            words.append(w)
            rows.append(center + 0.35 * _unit(rng.normal(size=d)))
    return EmbeddingStore(words, np.array(rows), name="counter-fitted")


def _glove_space(rng, d, families, neutral, polarity):
    evaluative = _unit(rng.normal(size=d))
    axis = _unit(rng.normal(size=d))
    words, rows = [], []
    for sign, members in families:
        center = _unit(rng.normal(size=d))
        for w in members:
            v = 0.6 * center + 0.6 * evaluative + 0.25 * polarity[w] * axis + 0.3 * _unit(rng.normal(size=d))
            words.append(w)
            rows.append(v)
    for members in neutral:
        center = _unit(rng.normal(size=d))
        for w in members:
            words.append(w)
            rows.append(0.8 * center + 0.4 * _unit(rng.normal(size=d)))
    return EmbeddingStore(words, np.array(rows), name="glove")


def generate_documents(world, n_docs, seed):
    """Sample ``n_docs`` balanced 2-class documents as ``(text, label)`` pairs."""
    cfg = world.config
    rng = np.random.default_rng(seed)
    fam_by_sign = {1: [f for s, f in world.families if s == 1], -1: [f for s, f in world.families if s == -1]}
    stop = world.stopwords
    docs = []
    for i in range(n_docs):
        label = i % 2
        sign = 1 if label == 1 else -1
        length = int(rng.integers(cfg.doc_len[0], cfg.doc_len[1] + 1))
        n_sent = int(rng.integers(cfg.sentiment_words[0], cfg.sentiment_words[1] + 1))
        toks = []
        for _ in range(n_sent):
            s = -sign if rng.random() < cfg.wrong_polarity_rate else sign
            fam = fam_by_sign[s][rng.integers(len(fam_by_sign[s]))]
            toks.append(_pick_member(rng, fam, world, sign))
        while len(toks) < length:
            if rng.random() < cfg.stopword_rate:
                toks.append(stop[rng.integers(len(stop))])
            else:
                cluster = world.neutral[rng.integers(len(world.neutral))]
                w = np.array([world.frequency[x] for x in cluster])
                toks.append(cluster[rng.choice(len(cluster), p=w / w.sum())])
        rng.shuffle(toks)
        docs.append((" ".join(toks), label))
    order = rng.permutation(n_docs)
    return [docs[j] for j in order]


def _pick_member(rng, family, world, doc_sign):
    # members used in agreement with the document's label are favored in
    # proportion to their signed polarity; rare members never appear
    weights = []
    for w in family:
        f = world.frequency[w]
        agree = 0.5 * (1.0 + doc_sign * world.polarity[w])
        weights.append(f * agree)
    weights = np.array(weights)
    if weights.sum() == 0:
        return family[0]
    return family[rng.choice(len(family), p=weights / weights.sum())]


def write_world(out_dir, n_train=2000, n_test=500, config=None):
    """Write train/test JSONL corpora and both vector files; return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world = build_world(config)
    seed = world.config.seed
    paths = {
        "train": out / "train.jsonl",
        "test": out / "test.jsonl",
        "glove": out / "glove.txt",
        "counter": out / "counter_fitted.txt",
    }
    for name, n, s in (("train", n_train, seed + 1), ("test", n_test, seed + 2)):
        with open(paths[name], "w", encoding="utf-8") as fh:
            for text, label in generate_documents(world, n, s):
                fh.write(json.dumps({"text": text, "label": label}) + "\n")
    save_embeddings(world.glove, paths["glove"])
    save_embeddings(world.counter, paths["counter"])
    return paths
