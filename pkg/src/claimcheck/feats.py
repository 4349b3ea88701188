"""Per-tweet feature encoding: syntactic histograms fused with embeddings.

Histograms (POS, named entity, dependency pair/triplet) are counted over a
fixed, language-specific inventory and max-normalized within the tweet.
Embeddings come either from averaged word vectors or from pooling the last
hidden layers of a transformer tensor, l2-normalized.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corpus import AnnotatedTweet, EmbeddingTensor

__all__ = [
    "EN_POS_TAGS",
    "AR_POS_TAGS",
    "EN_NE_TYPES",
    "AR_NE_TYPES",
    "CONTENT_POS",
    "FeatureConfig",
    "DepVocab",
    "FeatureVector",
    "FeatureError",
    "max_normalize",
    "l2_normalize",
    "encode_pos_histogram",
    "encode_ne_histogram",
    "build_dep_vocab",
    "encode_dep_pairs",
    "average_word_embeddings",
    "pool_transformer_layers",
    "fuse_features",
]

EN_POS_TAGS = ("NOUN", "VERB", "PROPN", "ADJ", "ADV", "NUM", "ADP", "PRON")
AR_POS_TAGS = EN_POS_TAGS + ("DET", "INTJ", "AUX", "PART")
EN_NE_TYPES = ("GPE", "PERSON", "ORG", "NORP", "LOC", "DATE", "CARDINAL",
               "TIME", "ORDINAL", "FAC", "MONEY")
AR_NE_TYPES = ("LOC", "PER", "ORG", "MISC")

# Dependency arcs qualify only when both endpoints carry a content POS tag.
CONTENT_POS = frozenset({"ADJ", "ADV", "NOUN", "PROPN", "VERB", "NUM"})

POOLING_STRATEGIES = ("concat_last4", "avg_last4", "last", "second_last",
                      "cls", "avg_word")


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureConfig:
    language: str = "en"
    use_stopwords: bool = True
    use_pos: bool = True
    use_ne: bool = False
    use_dep: bool = True
    dep_mode: str = "pair"  # "pair" | "triplet"
    pooling: str = "avg_last4"
    pos_tagset: tuple[str, ...] = ()
    ne_typeset: tuple[str, ...] = ()

    def __post_init__(self):
        if self.dep_mode not in ("pair", "triplet"):
            raise FeatureError(f"unknown dep_mode {self.dep_mode!r}")
        if self.pooling not in POOLING_STRATEGIES:
            raise FeatureError(f"unknown pooling {self.pooling!r}")
        if not self.pos_tagset:
            tags = EN_POS_TAGS if self.language == "en" else AR_POS_TAGS
            object.__setattr__(self, "pos_tagset", tags)
        if not self.ne_typeset:
            types = EN_NE_TYPES if self.language == "en" else AR_NE_TYPES
            object.__setattr__(self, "ne_typeset", types)


@dataclass(frozen=True)
class DepVocab:
    """Ordered dependency-key vocabulary built from the training split."""

    entries: tuple[tuple, ...]
    mode: str
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self._index:
            object.__setattr__(self, "_index", {k: i for i, k in enumerate(self.entries)})

    def __len__(self):
        return len(self.entries)

    def index(self, key):
        return self._index.get(key)


@dataclass
class FeatureVector:
    """Ordered named segments forming one fused tweet representation."""

    segments: list[tuple[str, np.ndarray]]
    degenerate: bool = False

    @property
    def total_dim(self) -> int:
        return sum(len(v) for _, v in self.segments)

    def concat(self) -> np.ndarray:
        if not self.segments:
            return np.zeros(0)
        return np.concatenate([v for _, v in self.segments])


def max_normalize(v: np.ndarray) -> np.ndarray:
    """Divide by the vector's own maximum; all-zero vectors pass through."""
    v = np.asarray(v, dtype=float)
    m = v.max() if v.size else 0.0
    if m > 0:
        return v / m
    return v.copy()


def l2_normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n > 0:
        return v / n
    return v.copy()


def _active_tokens(tweet: AnnotatedTweet, cfg: FeatureConfig):
    if cfg.use_stopwords:
        return list(tweet.tokens)
    return [t for t in tweet.tokens if not t.is_stopword]


def encode_pos_histogram(tweet: AnnotatedTweet, cfg: FeatureConfig) -> np.ndarray:
    counts = Counter(t.upos for t in _active_tokens(tweet, cfg))
    vec = np.array([counts.get(tag, 0) for tag in cfg.pos_tagset], dtype=float)
    return max_normalize(vec)


def encode_ne_histogram(tweet: AnnotatedTweet, cfg: FeatureConfig) -> np.ndarray:
    counts = Counter(t.ne_type for t in _active_tokens(tweet, cfg)
                     if t.ne_type is not None and t.ne_type != "OTHER")
    vec = np.array([counts.get(t, 0) for t in cfg.ne_typeset], dtype=float)
    return max_normalize(vec)


def _qualifying_arcs(tweet: AnnotatedTweet, mode: str, cfg: FeatureConfig):
    """Yield dependency keys for arcs whose child and parent are content POS."""
    tokens = tweet.tokens
    active = set(id(t) for t in _active_tokens(tweet, cfg))
    for tok in tokens:
        if tok.head < 0:
            continue
        parent = tokens[tok.head]
        if id(tok) not in active or id(parent) not in active:
            continue
        if tok.upos not in CONTENT_POS or parent.upos not in CONTENT_POS:
            continue
        if mode == "pair":
            yield (tok.upos, tok.dep_rel)
        else:
            yield (tok.upos, tok.dep_rel, parent.upos)


def build_dep_vocab(training: list[AnnotatedTweet], mode: str = "pair",
                    cfg: FeatureConfig | None = None) -> DepVocab:
    """Collect all qualifying dependency keys seen in training, sorted
    lexicographically for determinism."""
    if cfg is None:
        cfg = FeatureConfig(dep_mode=mode)
    keys = set()
    for tweet in training:
        keys.update(_qualifying_arcs(tweet, mode, cfg))
    if not keys:
        raise FeatureError("no qualifying dependency arcs in training data")
    return DepVocab(entries=tuple(sorted(keys)), mode=mode)


def encode_dep_pairs(tweet: AnnotatedTweet, vocab: DepVocab,
                     cfg: FeatureConfig) -> np.ndarray:
    vec = np.zeros(len(vocab), dtype=float)
    for key in _qualifying_arcs(tweet, vocab.mode, cfg):
        idx = vocab.index(key)
        if idx is not None:
            vec[idx] += 1
    return max_normalize(vec)


def average_word_embeddings(tweet: AnnotatedTweet, table: dict[str, np.ndarray],
                            cfg: FeatureConfig) -> tuple[np.ndarray, bool]:
    """Mean embedding over in-vocabulary tokens; returns (vector, degenerate)."""
    dims = {len(v) for v in table.values()}
    if len(dims) != 1:
        raise FeatureError("word table has inconsistent dimensions")
    dim = dims.pop()
    found = []
    for tok in _active_tokens(tweet, cfg):
        v = table.get(tok.surface.lower())
        if v is not None:
            found.append(np.asarray(v, dtype=float))
    if not found:
        return np.zeros(dim), True
    return np.mean(found, axis=0), False


def pool_transformer_layers(unit: np.ndarray, strategy: str) -> np.ndarray:
    """Pool an (L, T, D) layer stack into one l2-normalized vector.

    concat_last4: per-token concat of last 4 layers, then token mean (4D).
    avg_last4: element mean of last 4 layers, then token mean (D).
    last / second_last: token mean of that layer.
    cls: final layer's vector at token position 0.
    """
    unit = np.asarray(unit, dtype=float)
    if unit.ndim != 3:
        raise FeatureError(f"expected (L, T, D) stack, got shape {unit.shape}")
    n_layers, n_tokens, _ = unit.shape
    if strategy in ("concat_last4", "avg_last4") and n_layers < 4:
        raise FeatureError(f"pooling {strategy!r} needs >= 4 layers, got {n_layers}")
    if strategy == "second_last" and n_layers < 2:
        raise FeatureError("second_last needs >= 2 layers")
    if n_tokens == 0:
        raise FeatureError("empty token axis")
    if strategy == "concat_last4":
        per_token = unit[-4:].transpose(1, 0, 2).reshape(n_tokens, -1)
        pooled = per_token.mean(axis=0)
    elif strategy == "avg_last4":
        pooled = unit[-4:].mean(axis=0).mean(axis=0)
    elif strategy == "last":
        pooled = unit[-1].mean(axis=0)
    elif strategy == "second_last":
        pooled = unit[-2].mean(axis=0)
    elif strategy == "cls":
        pooled = unit[-1, 0]
    else:
        raise FeatureError(f"strategy {strategy!r} is not a layer pooling")
    return l2_normalize(pooled)


def fuse_features(tweet: AnnotatedTweet, cfg: FeatureConfig,
                  vocab: DepVocab | None = None,
                  embedding: np.ndarray | None = None,
                  embedding_degenerate: bool = False) -> FeatureVector:
    """Concatenate enabled segments in fixed order [pos, ne, dep, embedding]."""
    segments = []
    if cfg.use_pos:
        segments.append(("pos", encode_pos_histogram(tweet, cfg)))
    if cfg.use_ne:
        segments.append(("ne", encode_ne_histogram(tweet, cfg)))
    if cfg.use_dep:
        if vocab is None:
            raise FeatureError("dep segment enabled but no DepVocab given")
        segments.append(("dep", encode_dep_pairs(tweet, vocab, cfg)))
    if embedding is not None:
        segments.append(("embedding", np.asarray(embedding, dtype=float)))
    degenerate = tweet.degenerate or embedding_degenerate
    return FeatureVector(segments=segments, degenerate=degenerate)


def tweet_embedding(tweet: AnnotatedTweet, cfg: FeatureConfig,
                    embeddings: EmbeddingTensor | dict) -> tuple[np.ndarray, bool]:
    """Resolve the embedding segment for one tweet from either a word table
    (avg_word) or a token_layers tensor (layer poolings)."""
    if cfg.pooling == "avg_word":
        if isinstance(embeddings, EmbeddingTensor):
            if embeddings.kind != "sentence":
                raise FeatureError("avg_word pooling needs a word-table tensor")
            table = {uid: embeddings.values[i]
                     for i, uid in enumerate(embeddings.unit_ids)}
        else:
            table = embeddings
        return average_word_embeddings(tweet, table, cfg)
    if not isinstance(embeddings, EmbeddingTensor) or embeddings.kind != "token_layers":
        raise FeatureError(f"pooling {cfg.pooling!r} needs a token_layers tensor")
    if tweet.tweet_id not in embeddings:
        raise FeatureError(f"no embedding unit for tweet {tweet.tweet_id!r}")
    return pool_transformer_layers(embeddings.unit(tweet.tweet_id), cfg.pooling), False
