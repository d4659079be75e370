"""Greedy and genetic word-substitution attacks.

Both engines take two optional query-saving strategies:

* ``use_rank_strategy``: order (greedy) or seed (genetic) positions with the
  surrogate ranker instead of deletion probes.
* ``use_replace_strategy``: once a substitution has lowered the original-class
  confidence, keep only the ``k_direction`` synonyms whose embedding move is
  best aligned with the move that lowered it the most.
"""
import dataclasses
import logging
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .embed import DirectionVector
from .errors import BudgetExhausted, DegenerateDirectionError, DomainError, FormatError
from .ledger import SEARCH, QuerySession
from .surrogate import EMBEDDING, SurrogateConfig, rank_words_deletion, rank_words_surrogate
from .text import STOPWORDS

log = logging.getLogger(__name__)

SUCCESS = "success"
EXHAUSTED_BUDGET = "exhausted-budget"
EXHAUSTED_CANDIDATES = "exhausted-candidates"

MODE_LABELS = {
    (False, False): "baseline",
    (True, False): "+WRankS",
    (False, True): "+WRepS",
    (True, True): "+both",
}


@dataclass
class AttackConfig:
    method: str = "greedy"
    use_rank_strategy: bool = False
    use_replace_strategy: bool = False
    n_neighbors: int = 100
    k_direction: int = 30
    max_queries_per_doc: int = 20000
    min_synonym_cosine: float = 0.5
    population_size: int = 5
    max_generations: int = 140
    mutation_rate: float = 1.0
    selection_temperature: float = 0.3
    # softmax temperature over surrogate scores when seeding genetic positions
    rank_temperature: float = 1.0
    seed: int = 0
    use_stoplist: bool = True
    surrogate_mode: str = EMBEDDING
    min_train: int = 50
    surrogate_learning_rate: float = 0.1
    surrogate_epochs: int = 300
    surrogate_l2: float = 1e-4
    warm_start: bool = False
    retrain_every: int = 25

    def __post_init__(self):
        self.validate()

    @classmethod
    def for_method(cls, method, **overrides):
        """Neighborhood sizes used for each backend in the original experiments."""
        if method == "genetic":
            base = dict(method="genetic", n_neighbors=30, k_direction=5)
        else:
            base = dict(method="greedy", n_neighbors=100, k_direction=30)
        base.update(overrides)
        return cls(**base)

    def validate(self):
        if self.method not in ("greedy", "genetic"):
            raise DomainError(f"unknown method {self.method!r}")
        if self.n_neighbors < 1 or self.k_direction < 1:
            raise DomainError("n_neighbors and k_direction must be positive")
        if self.k_direction > self.n_neighbors:
            raise DomainError("k_direction must not exceed n_neighbors")
        if not 0.0 < self.min_synonym_cosine <= 1.0:
            raise DomainError("min_synonym_cosine must be in (0, 1]")
        if self.max_queries_per_doc < 0:
            raise DomainError("max_queries_per_doc must be non-negative")
        if self.method == "genetic" and self.population_size < 2:
            raise DomainError("population_size must be at least 2")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise DomainError("mutation_rate must be in [0, 1]")
        if self.rank_temperature <= 0 or self.selection_temperature <= 0:
            raise DomainError("temperatures must be positive")

    @property
    def mode_label(self):
        return MODE_LABELS[(self.use_rank_strategy, self.use_replace_strategy)]

    @property
    def stoplist(self):
        return STOPWORDS if self.use_stoplist else frozenset()

    def surrogate_config(self):
        return SurrogateConfig(
            mode=self.surrogate_mode,
            min_train=self.min_train,
            learning_rate=self.surrogate_learning_rate,
            epochs=self.surrogate_epochs,
            l2=self.surrogate_l2,
            seed=self.seed,
            warm_start=self.warm_start,
        )

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, mapping):
        """Build from string or typed values, e.g. a parsed key=value file."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            key = key.replace("-", "_")
            if key not in types:
                raise FormatError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(value, types[key], key)
        return cls(**kwargs)

    def to_file(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for key, value in self.to_dict().items():
                fh.write(f"{key}={value}\n")

    @classmethod
    def from_file(cls, path):
        return cls.from_mapping(read_config_file(path))


def read_config_file(path):
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError("expected key=value", line=lineno)
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _coerce(value, typ, key):
    if not isinstance(value, str):
        return value
    typ = typ if isinstance(typ, str) else getattr(typ, "__name__", str(typ))
    try:
        if typ == "bool":
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if typ == "int":
            return int(value)
        if typ == "float":
            return float(value)
    except ValueError:
        raise FormatError(f"bad value for {key}: {value!r}") from None
    return value


@dataclass
class DirectionState:
    """Per-document memory of the substitution move with the largest confidence drop."""

    best_direction: Optional[DirectionVector] = None
    best_drop: float = 0.0

    def offer(self, store, from_word, to_word, drop):
        if drop <= self.best_drop:
            return False
        try:
            direction = store.direction_vector(from_word, to_word)
        except (DegenerateDirectionError, KeyError):
            return False
        self.best_direction = direction
        self.best_drop = drop
        return True


@dataclass
class DocState:
    original_tokens: tuple
    tokens: list
    perturbed: set
    confidence: float

    def with_substitution(self, position, word):
        toks = list(self.tokens)
        toks[position] = word
        return toks

    def perturbed_after(self, position, word):
        p = set(self.perturbed)
        if word != self.original_tokens[position]:
            p.add(position)
        else:
            p.discard(position)
        return p


@dataclass
class ReplacementOutcome:
    word: Optional[str]
    prediction: object = None
    drop: float = 0.0
    flipped: bool = False
    queried: list = field(default_factory=list)


@dataclass
class AttackResult:
    document_id: object
    status: str
    queries_used: int
    perturbed_positions: tuple
    perturbation_rate: float
    original_label: int
    n_tokens: int
    adversarial_tokens: Optional[tuple] = None
    adversarial_label: Optional[int] = None
    final_confidence: Optional[float] = None
    ranking: str = ""
    rank_queries: int = 0
    trace: list = field(default_factory=list, repr=False)

    @property
    def success(self):
        return self.status == SUCCESS


def candidate_synonyms(word, store, config, dir_state=None):
    """Substitution candidates for ``word``, in the order they will be queried.

    Cold start (or replace strategy off): the ``n_neighbors`` nearest words
    with cosine at least ``min_synonym_cosine``. With a recorded direction:
    the ``k_direction`` of those whose move from ``word`` best matches it.
    """
    if word not in store:
        return []
    neigh = [w for w, s in store.nearest_neighbors(word, config.n_neighbors) if s >= config.min_synonym_cosine]
    if not (config.use_replace_strategy and dir_state is not None and dir_state.best_direction is not None):
        return neigh
    best = dir_state.best_direction.components
    origin = store.vector(word)
    scored = []
    for w in neigh:
        diff = store.vector(w) - origin
        n = float(np.linalg.norm(diff))
        match = float(np.dot(diff, best) / n) if n > 0 else -np.inf
        scored.append((-match, w))
    scored.sort()
    return [w for _, w in scored[: config.k_direction]]


def try_replacements(doc_state, position, candidates, session, dir_state, store):
    """Query each candidate at ``position``; stop at the first label flip.

    Without a flip, the candidate with the largest positive drop in
    original-class confidence is returned (``word=None`` if none lowers it).
    ``dir_state`` is updated whenever a drop beats the document's best.
    """
    label = session.original_label
    before = doc_state.confidence
    from_word = doc_state.original_tokens[position]
    best = ReplacementOutcome(None)
    for cand in candidates:
        toks = doc_state.with_substitution(position, cand)
        pred = session.query(toks, doc_state.perturbed_after(position, cand), phase=SEARCH)
        conf = pred.scores[label]
        drop = before - conf
        best.queried.append((cand, conf))
        dir_state.offer(store, from_word, cand, drop)
        if pred.label != label:
            return ReplacementOutcome(cand, pred, drop, True, best.queried)
        if drop > 0 and (best.word is None or drop > best.drop):
            best.word, best.prediction, best.drop = cand, pred, drop
    return best


def _doc_fields(document, document_id):
    tokens = getattr(document, "tokens", document)
    doc_id = getattr(document, "id", document_id)
    tokens = tuple(tokens)
    if not tokens:
        raise DomainError("cannot attack an empty document")
    return doc_id, tokens


def _finish(doc_id, status, session, state, n_tokens, ranking, rank_queries, trace, adv_label=None):
    perturbed = tuple(sorted(state.perturbed)) if state is not None else ()
    res = AttackResult(
        document_id=doc_id,
        status=status,
        queries_used=session.used,
        perturbed_positions=perturbed,
        perturbation_rate=len(perturbed) / n_tokens,
        original_label=session.original_label,
        n_tokens=n_tokens,
        ranking=ranking,
        rank_queries=rank_queries,
        trace=trace,
    )
    if state is not None:
        res.final_confidence = state.confidence
    if status == SUCCESS:
        res.adversarial_tokens = tuple(state.tokens)
        res.adversarial_label = adv_label
    return res


def greedy_attack(
    document, target, config, ledger, ranker=None, *, counter_store, original=None, document_id=0
):
    """Rank positions once, then substitute greedily until the label flips.

    Each position is visited at most once. At a position, candidates are
    queried in order; the first flip ends the attack, otherwise the best
    confidence drop (if any) is committed before moving on.
    """
    doc_id, tokens = _doc_fields(document, document_id)
    session = QuerySession(target, ledger, doc_id, tokens, config.max_queries_per_doc)
    session.classify_original(original)
    label = session.original_label
    state = None
    trace = []
    ranking_name = ""
    rank_queries = 0
    try:
        if config.use_rank_strategy and ranker is not None and ranker.usable:
            ranking_name = "surrogate"
            ranking = rank_words_surrogate(ranker, tokens, config.stoplist)
        else:
            ranking_name = "deletion"
            ranking = rank_words_deletion(tokens, session, config.stoplist)
            rank_queries = session.used
        state = DocState(tokens, list(tokens), set(), session.original.scores[label])
        dir_state = DirectionState()
        for ws in ranking:
            pos = ws.position
            cands = candidate_synonyms(tokens[pos], counter_store, config, dir_state)
            if not cands:
                continue
            directed = config.use_replace_strategy and dir_state.best_direction is not None
            before = state.confidence
            out = try_replacements(state, pos, cands, session, dir_state, counter_store)
            step = {
                "step": len(trace),
                "position": pos,
                "word": tokens[pos],
                "candidate_count": len(cands),
                "directed": directed,
                "candidates": list(cands),
                "queried": [[w, c] for w, c in out.queried],
                "chosen": out.word,
                "conf_before": before,
                "conf_after": before - out.drop if out.word is not None else before,
                "flipped": out.flipped,
            }
            trace.append(step)
            if out.word is not None:
                state.perturbed = state.perturbed_after(pos, out.word)
                state.tokens[pos] = out.word
                state.confidence = out.prediction.scores[label]
            if out.flipped:
                return _finish(doc_id, SUCCESS, session, state, len(tokens), ranking_name, rank_queries, trace, out.prediction.label)
        return _finish(doc_id, EXHAUSTED_CANDIDATES, session, state, len(tokens), ranking_name, rank_queries, trace)
    except BudgetExhausted:
        if ranking_name == "deletion" and state is None:
            rank_queries = session.used
        return _finish(doc_id, EXHAUSTED_BUDGET, session, state, len(tokens), ranking_name, rank_queries, trace)


def _stable_seed(seed, doc_id):
    return [int(seed) & 0xFFFFFFFF, zlib.crc32(repr(doc_id).encode("utf-8"))]


def _softmax(x, temperature=1.0):
    z = np.asarray(x, dtype=np.float64) / temperature
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _diff_positions(tokens, original):
    return {i for i, (a, b) in enumerate(zip(tokens, original)) if a != b}


@dataclass
class _Member:
    tokens: list
    confidence: float
    label: int


def genetic_attack(
    document, target, config, ledger, ranker=None, *, counter_store, original=None, document_id=0
):
    """Population search over substitutions.

    Generation 0 holds ``population_size`` single-substitution variants whose
    positions are drawn from softmax(surrogate scores / ``rank_temperature``)
    when the rank strategy is on and the ranker is usable, uniformly otherwise.
    Later generations
    keep the fittest member and fill the rest by uniform crossover of parents
    sampled by softmax(fitness / temperature), then mutation. Fitness is the
    drop of the original-class confidence; each new variant costs one query.
    """
    doc_id, tokens = _doc_fields(document, document_id)
    session = QuerySession(target, ledger, doc_id, tokens, config.max_queries_per_doc)
    session.classify_original(original)
    label = session.original_label
    conf0 = session.original.scores[label]
    rng = np.random.default_rng(_stable_seed(config.seed, doc_id))
    dir_state = DirectionState()
    trace = []
    stop = config.stoplist

    cold = config.replace(use_replace_strategy=False)
    eligible = [i for i, t in enumerate(tokens) if t not in stop and candidate_synonyms(t, counter_store, cold)]
    state = DocState(tokens, list(tokens), set(), conf0)
    if not eligible:
        return _finish(doc_id, EXHAUSTED_CANDIDATES, session, state, len(tokens), "uniform", 0, trace)

    if config.use_rank_strategy and ranker is not None and ranker.usable:
        ranking_name = "surrogate"
        scores = np.array([ranker.word_score(tokens[i]) for i in eligible])
        probs = _softmax(scores, config.rank_temperature)
    else:
        ranking_name = "uniform"
        probs = np.full(len(eligible), 1.0 / len(eligible))

    def as_state(m):
        return DocState(tokens, list(m.tokens), _diff_positions(m.tokens, tokens), m.confidence)

    def evaluate(toks, parent_conf=None, moved=None):
        pred = session.query(toks, _diff_positions(toks, tokens), phase=SEARCH)
        m = _Member(list(toks), pred.scores[label], pred.label)
        if moved is not None and parent_conf is not None:
            pos, new_word = moved
            dir_state.offer(counter_store, tokens[pos], new_word, parent_conf - m.confidence)
        return m

    def mutate(m):
        pos = eligible[rng.choice(len(eligible), p=probs)]
        cands = [c for c in candidate_synonyms(tokens[pos], counter_store, config, dir_state) if c != m.tokens[pos]]
        if not cands:
            return m
        new_word = cands[rng.integers(len(cands))]
        toks = list(m.tokens)
        toks[pos] = new_word
        return evaluate(toks, m.confidence, (pos, new_word))

    def done(m):
        return m.label != label

    base = _Member(list(tokens), conf0, label)
    try:
        population = []
        for _ in range(config.population_size):
            child = mutate(base)
            population.append(child)
            if done(child):
                return _finish(doc_id, SUCCESS, session, as_state(child), len(tokens), ranking_name, 0, trace, child.label)
        trace.append(_gen_record(0, population, conf0))
        for gen in range(1, config.max_generations):
            fitness = np.array([conf0 - m.confidence for m in population])
            elite = population[int(np.argmax(fitness))]
            parent_p = _softmax(fitness, config.selection_temperature)
            nxt = [elite]
            while len(nxt) < config.population_size:
                i, j = rng.choice(len(population), size=2, p=parent_p)
                p1, p2 = population[i], population[j]
                mask = rng.random(len(tokens)) < 0.5
                toks = [a if pick else b for a, b, pick in zip(p1.tokens, p2.tokens, mask)]
                if toks == p1.tokens:
                    child = p1
                elif toks == p2.tokens:
                    child = p2
                else:
                    child = evaluate(toks)
                if not done(child) and rng.random() < config.mutation_rate:
                    child = mutate(child)
                nxt.append(child)
                if done(child):
                    return _finish(doc_id, SUCCESS, session, as_state(child), len(tokens), ranking_name, 0, trace, child.label)
            population = nxt
            trace.append(_gen_record(gen, population, conf0))
        best = max(population, key=lambda m: conf0 - m.confidence)
        return _finish(doc_id, EXHAUSTED_CANDIDATES, session, as_state(best), len(tokens), ranking_name, 0, trace)
    except BudgetExhausted:
        return _finish(doc_id, EXHAUSTED_BUDGET, session, state, len(tokens), ranking_name, 0, trace)


def _gen_record(gen, population, conf0):
    fit = [conf0 - m.confidence for m in population]
    return {"generation": gen, "population_size": len(population), "best_fitness": max(fit), "mean_fitness": float(np.mean(fit))}


def attack_document(document, target, config, ledger, ranker=None, **kwargs):
    fn = genetic_attack if config.method == "genetic" else greedy_attack
    return fn(document, target, config, ledger, ranker, **kwargs)


def replay_greedy_steps(trace):
    """Check each committed step against the confidences it queried.

    Returns a list of violation messages (empty when every step is optimal).
    """
    problems = []
    for step in trace:
        queried = step["queried"]
        if step["flipped"]:
            if step["chosen"] != queried[-1][0]:
                problems.append(f"step {step['step']}: flip was not the last query")
            continue
        before = step["conf_before"]
        drops = [(before - c, w) for w, c in queried]
        best_drop = max((d for d, _ in drops), default=0.0)
        if step["chosen"] is None:
            if best_drop > 0:
                problems.append(f"step {step['step']}: a positive drop was available but none committed")
            continue
        chosen_drop = next(d for d, w in drops if w == step["chosen"])
        if chosen_drop < best_drop:
            problems.append(f"step {step['step']}: committed drop {chosen_drop} < best {best_drop}")
    return problems
