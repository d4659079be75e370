"""Black-box classifiers the attacks query.

Anything with ``predict(tokens) -> Prediction`` is a target. Two ship here: a
bag-of-words multinomial logistic regression trained locally, and an HTTP
client for a remote ``/predict`` endpoint.
"""
import json
import logging
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Protocol, Sequence

import numpy as np
from scipy import sparse

from .errors import DomainError, FormatError, ProtocolError, QueryError
from .text import detokenize, tokenize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Prediction:
    label: int
    scores: tuple

    @classmethod
    def from_scores(cls, scores):
        scores = tuple(float(s) for s in scores)
        return cls(int(np.argmax(scores)), scores)

    def confidence(self, label):
        return self.scores[label]


class TargetModel(Protocol):
    def predict(self, tokens: Sequence[str]) -> Prediction: ...


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(eq=False)
class LocalTextClassifier:
    vocabulary: dict
    weights: np.ndarray  # [classes, features]
    bias: np.ndarray  # [classes]
    class_names: list
    train_accuracy: float = float("nan")
    loss_history: list = field(default_factory=list, repr=False)

    @property
    def n_classes(self):
        return len(self.class_names)

    def logits(self, tokens):
        idx = [self.vocabulary[t] for t in tokens if t in self.vocabulary]
        z = self.bias.copy()
        if idx:
            z += self.weights[:, idx].sum(axis=1)
        return z

    def predict(self, tokens):
        if len(tokens) == 0:
            raise DomainError("cannot classify an empty token sequence")
        return Prediction.from_scores(_softmax(self.logits(tokens)))

    def predict_text(self, text):
        return self.predict(tokenize(text))

    def to_dict(self):
        inv = sorted(self.vocabulary, key=self.vocabulary.__getitem__)
        return {
            "kind": "bow-logreg",
            "class_names": list(self.class_names),
            "vocabulary": inv,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "train_accuracy": self.train_accuracy,
        }

    @classmethod
    def from_dict(cls, d):
        try:
            vocab = {w: i for i, w in enumerate(d["vocabulary"])}
            weights = np.asarray(d["weights"], dtype=np.float64)
            bias = np.asarray(d["bias"], dtype=np.float64)
            names = list(d["class_names"])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"bad model file: {exc}") from None
        if weights.shape != (len(names), len(vocab)) or bias.shape != (len(names),):
            raise FormatError("model arrays have inconsistent shapes")
        return cls(vocab, weights, bias, names, float(d.get("train_accuracy", float("nan"))))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from None


@dataclass
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 0.5
    l2: float = 1e-4
    tol: float = 1e-7
    min_count: int = 1
    seed: int = 0


def _bow_matrix(docs, vocab):
    rows, cols = [], []
    for r, toks in enumerate(docs):
        for t in toks:
            j = vocab.get(t)
            if j is not None:
                rows.append(r)
                cols.append(j)
    data = np.ones(len(rows))
    return sparse.csr_matrix((data, (rows, cols)), shape=(len(docs), len(vocab)))


def _multinomial_loss_grad(W, b, X, Y, l2):
    P = _softmax(np.asarray(X @ W.T) + b)
    n = X.shape[0]
    loss = -np.sum(Y * np.log(np.clip(P, 1e-300, None))) / n + 0.5 * l2 * np.sum(W * W)
    G = (P - Y) / n
    gW = np.asarray((X.T @ G).T) + l2 * W
    gb = G.sum(axis=0)
    return loss, gW, gb, P


def train_local_target(corpus, config=None, class_names=None):
    """Fit full-batch multinomial logistic regression on bag-of-words counts.

    ``corpus`` is a sequence of ``(tokens, label)`` pairs or objects with
    ``tokens``/``gold_label``. Training stops after ``config.epochs`` or when
    the loss improves by less than ``config.tol``.
    """
    config = config or TrainConfig()
    docs, labels = [], []
    for item in corpus:
        if hasattr(item, "tokens"):
            docs.append(list(item.tokens))
            labels.append(int(item.gold_label))
        else:
            docs.append(list(item[0]))
            labels.append(int(item[1]))
    if not docs:
        raise DomainError("empty training corpus")
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise DomainError("training corpus needs at least two classes")
    n_classes = int(labels.max()) + 1
    missing = set(range(n_classes)) - set(classes.tolist())
    if missing:
        raise DomainError(f"classes without examples: {sorted(missing)}")

    counts = {}
    for toks in docs:
        for t in toks:
            counts[t] = counts.get(t, 0) + 1
    vocab = {w: i for i, w in enumerate(sorted(w for w, c in counts.items() if c >= config.min_count))}
    X = _bow_matrix(docs, vocab)
    Y = np.zeros((len(docs), n_classes))
    Y[np.arange(len(docs)), labels] = 1.0

    rng = np.random.default_rng(config.seed)
    W = rng.normal(0.0, 0.01, size=(n_classes, len(vocab)))
    b = np.zeros(n_classes)
    history = []
    prev = np.inf
    for _ in range(config.epochs):
        loss, gW, gb, _ = _multinomial_loss_grad(W, b, X, Y, config.l2)
        history.append(float(loss))
        if prev - loss < config.tol:
            break
        prev = loss
        W -= config.learning_rate * gW
        b -= config.learning_rate * gb
    loss, _, _, P = _multinomial_loss_grad(W, b, X, Y, config.l2)
    history.append(float(loss))
    acc = float(np.mean(P.argmax(axis=1) == labels))
    names = list(class_names) if class_names else [str(c) for c in range(n_classes)]
    log.info("trained local target: %d features, %d classes, train acc %.4f", len(vocab), n_classes, acc)
    return LocalTextClassifier(vocab, W, b, names, acc, history)


class RemoteTarget:
    """Client for ``POST {endpoint}/predict``.

    Transport failures (connection refused, reset, timeout) are retried up to
    ``retry_limit`` times; any HTTP response, including an error status, ends
    the call. At most ``max_in_flight`` requests run concurrently.
    """

    def __init__(self, endpoint, timeout=10.0, retry_limit=2, max_in_flight=8, backoff=0.05):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retry_limit = retry_limit
        self.backoff = backoff
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def predict(self, tokens):
        if len(tokens) == 0:
            raise DomainError("cannot classify an empty token sequence")
        return self.predict_remote(detokenize(tokens))

    def predict_remote(self, text):
        body = json.dumps({"text": text}).encode("utf-8")
        url = self.endpoint + "/predict"
        last_exc = None
        with self._slots:
            for attempt in range(self.retry_limit + 1):
                req = urllib.request.Request(
                    url, data=body, method="POST", headers={"Content-Type": "application/json"}
                )
                try:
                    with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                        payload = resp.read()
                    return _parse_prediction(payload)
                except urllib.error.HTTPError as exc:
                    raise QueryError(f"{url} returned HTTP {exc.code}", status=exc.code) from None
                except (urllib.error.URLError, ConnectionError, TimeoutError, OSError) as exc:
                    last_exc = exc
                    log.debug("transport failure on attempt %d: %s", attempt + 1, exc)
                    if attempt < self.retry_limit:
                        time.sleep(self.backoff * (2**attempt))
        raise QueryError(f"{url} unreachable after {self.retry_limit + 1} attempts: {last_exc}")


def _parse_prediction(payload):
    try:
        obj = json.loads(payload)
        label = obj["label"]
        scores = obj["scores"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed prediction response: {exc}") from None
    if not isinstance(label, int) or isinstance(label, bool) or not isinstance(scores, list) or not scores:
        raise ProtocolError("response needs an int 'label' and a non-empty 'scores' list")
    try:
        arr = np.asarray(scores, dtype=np.float64)
    except (TypeError, ValueError):
        raise ProtocolError("scores must be numbers") from None
    if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1) or abs(arr.sum() - 1.0) > 1e-6:
        raise ProtocolError("scores must be a probability vector")
    if not 0 <= label < len(arr):
        raise ProtocolError(f"label {label} out of range for {len(arr)} classes")
    pred = Prediction.from_scores(arr)
    if pred.label != label:
        raise ProtocolError(f"label {label} is not the argmax of scores")
    return pred


def is_remote(location):
    return location.startswith("http://") or location.startswith("https://")


def load_target(location, **remote_kwargs):
    if is_remote(location):
        return RemoteTarget(location, **remote_kwargs)
    return LocalTextClassifier.load(location)


def make_server(model, host="127.0.0.1", port=0):
    """Serve ``model`` over the predict protocol. Test-only, not a production service.

    Returns the (not yet started) server; ``server.server_address`` has the port.
    """

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            if self.path.rstrip("/") != "/predict":
                self.send_error(404)
                return
            length = int(self.headers.get("Content-Length", 0))
            try:
                text = json.loads(self.rfile.read(length))["text"]
                pred = model.predict(tokenize(text))
            except (ValueError, KeyError, TypeError, DomainError) as exc:
                self.send_error(400, str(exc))
                return
            out = json.dumps({"label": pred.label, "scores": list(pred.scores)}).encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(out)))
            self.end_headers()
            self.wfile.write(out)

        def log_message(self, *args):
            pass

    return ThreadingHTTPServer((host, port), Handler)
