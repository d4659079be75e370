"""Word-vector tables in GloVe text format with exact cosine neighbor search."""
import math
import threading
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateDirectionError, DimensionMismatchError, DomainError, FormatError, OOVError


def cosine(u, v):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DomainError(f"dimension mismatch: {u.shape} vs {v.shape}")
    su = np.max(np.abs(u)) if u.size else 0.0
    sv = np.max(np.abs(v)) if v.size else 0.0
    if su == 0.0 or sv == 0.0:
        raise DomainError("cosine of a zero vector is undefined")
    # rescale first so tiny or huge magnitudes cannot under/overflow the norms
    u = u / su
    v = v / sv
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    c = float(np.dot(u, v) / (nu * nv))
    return min(1.0, max(-1.0, c))


@dataclass(frozen=True)
class DirectionVector:
    components: np.ndarray

    def __post_init__(self):
        n = float(np.linalg.norm(self.components))
        if abs(n - 1.0) > 1e-9:
            raise DomainError(f"direction vector must have unit norm, got {n}")


@dataclass(eq=False)
class EmbeddingStore:
    """Immutable word -> vector table.

    ``words[i]`` owns row ``i`` of ``matrix``. Neighbor results are memoized per
    (word, n); the cache never changes what a query returns.
    """

    words: list
    matrix: np.ndarray
    name: str = "embedding"
    lowercase: bool = True
    _index: dict = field(init=False, repr=False)
    _norms: np.ndarray = field(init=False, repr=False)
    _lex_rank: np.ndarray = field(init=False, repr=False)
    _nn_cache: dict = field(init=False, repr=False, default_factory=dict)
    _lock: threading.Lock = field(init=False, repr=False, default_factory=threading.Lock)

    def __post_init__(self):
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.words):
            raise DomainError("matrix rows must match the word list")
        if self.matrix.shape[1] < 1:
            raise DomainError("dimension must be positive")
        if not np.all(np.isfinite(self.matrix)):
            raise DomainError("embedding values must be finite")
        self._index = {}
        for i, w in enumerate(self.words):
            if not w:
                raise DomainError("empty word key")
            if w in self._index:
                raise DomainError(f"duplicate word key {w!r}")
            self._index[w] = i
        self.matrix.setflags(write=False)
        self._norms = np.linalg.norm(self.matrix, axis=1)
        order = sorted(range(len(self.words)), key=self.words.__getitem__)
        self._lex_rank = np.empty(len(self.words), dtype=np.int64)
        self._lex_rank[order] = np.arange(len(self.words))

    @property
    def dim(self):
        return self.matrix.shape[1]

    def __len__(self):
        return len(self.words)

    def _key(self, word):
        return word.lower() if self.lowercase else word

    def __contains__(self, word):
        return self._key(word) in self._index

    def index(self, word):
        try:
            return self._index[self._key(word)]
        except KeyError:
            raise OOVError(word) from None

    def vector(self, word):
        return self.matrix[self.index(word)]

    def get(self, word, default=None):
        i = self._index.get(self._key(word))
        return default if i is None else self.matrix[i]

    def nearest_neighbors(self, word, n):
        """The ``n`` most cosine-similar other words, best first.

        Ties are broken by ascending word order, so the result is deterministic.
        """
        if n < 1:
            raise DomainError("n must be positive")
        i = self.index(word)
        key = (i, n)
        cached = self._nn_cache.get(key)
        if cached is not None:
            return list(cached)
        q = self.matrix[i]
        if self._norms[i] == 0.0:
            raise DomainError(f"zero vector for {word!r}")
        denom = self._norms * self._norms[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            sims = (self.matrix @ q) / denom
        sims = np.clip(sims, -1.0, 1.0)
        valid = denom > 0
        valid[i] = False
        cand = np.flatnonzero(valid)
        order = cand[np.lexsort((self._lex_rank[cand], -sims[cand]))][:n]
        result = tuple((self.words[j], float(sims[j])) for j in order)
        with self._lock:
            self._nn_cache[key] = result
        return list(result)

    def direction_vector(self, from_word, to_word):
        diff = self.vector(to_word) - self.vector(from_word)
        scale = float(np.max(np.abs(diff)))
        if scale == 0.0:
            raise DegenerateDirectionError(f"{from_word!r} and {to_word!r} share an embedding")
        diff = diff / scale
        return DirectionVector(diff / np.linalg.norm(diff))


def nearest_neighbors(store, word, n):
    return store.nearest_neighbors(word, n)


def direction_vector(store, from_word, to_word):
    return store.direction_vector(from_word, to_word)


def load_embeddings(path, expected_dim=None, name=None, lowercase=True):
    """Parse a GloVe-style text file (``word v1 ... vd`` per line, no header).

    The dimension comes from the first record. Duplicate words keep their first
    vector and raise a single warning with the duplicate count.
    """
    path = Path(path)
    words = []
    rows = []
    seen = set()
    dim = None
    duplicates = 0
    with open(path, encoding="utf-8", newline=None) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.rstrip(" ").split(" ")
            if len(parts) < 2:
                raise FormatError("record has no vector components", line=lineno)
            word = parts[0].lower() if lowercase else parts[0]
            if not word:
                raise FormatError("empty word", line=lineno)
            if dim is None:
                dim = len(parts) - 1
                if expected_dim is not None and dim != expected_dim:
                    raise DimensionMismatchError(
                        f"expected dimension {expected_dim}, file has {dim}", line=lineno
                    )
            elif len(parts) - 1 != dim:
                raise FormatError(f"expected {dim} components, found {len(parts) - 1}", line=lineno)
            try:
                vec = [float(x) for x in parts[1:]]
            except ValueError as exc:
                raise FormatError(f"bad number ({exc})", line=lineno) from None
            if not all(math.isfinite(x) for x in vec):
                raise FormatError("non-finite value", line=lineno)
            if word in seen:
                duplicates += 1
                continue
            seen.add(word)
            words.append(word)
            rows.append(vec)
    if not words:
        raise FormatError(f"{path}: no embedding records")
    if duplicates:
        warnings.warn(f"{path}: {duplicates} duplicate word(s) ignored", stacklevel=2)
    return EmbeddingStore(words, np.array(rows, dtype=np.float64), name=name or path.stem, lowercase=lowercase)


def save_embeddings(store, path):
    """Write ``store`` in the text format ``load_embeddings`` reads.

    Floats are written with ``repr`` so a reload is bit-exact.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for w, row in zip(store.words, store.matrix):
            fh.write(w + " " + " ".join(repr(float(x)) for x in row) + "\n")
