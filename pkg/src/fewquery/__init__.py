"""Query-efficient word-substitution black-box attacks on text classifiers."""
from .embed import EmbeddingStore, cosine, direction_vector, load_embeddings, nearest_neighbors, save_embeddings
from .ledger import QueryLedger, QueryRecord, QuerySession, average_queries
from .search import AttackConfig, AttackResult, candidate_synonyms, genetic_attack, greedy_attack, try_replacements
from .surrogate import SurrogateConfig, SurrogateRanker, rank_words_deletion, rank_words_surrogate, train_surrogate
from .target import LocalTextClassifier, Prediction, RemoteTarget, TrainConfig, train_local_target
from .text import STOPWORDS, tokenize

__version__ = "0.1.0"
