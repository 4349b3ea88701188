"""Data model and loaders for tweets, claims, annotations, embeddings and qrels.

All record interchange is UTF-8 JSON Lines; embedding tensors use a small
binary container (see TENSOR_MAGIC below); qrels are two-column TSV.
Loaders validate fully before returning: a partially valid corpus is never
handed to callers.
"""

from __future__ import annotations

import json
import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "CorpusError",
    "ParseError",
    "ValidationError",
    "EmptyCorpusError",
    "TensorFormatError",
    "TweetRecord",
    "TokenAnnotation",
    "AnnotatedTweet",
    "EmbeddingTensor",
    "ClaimRecord",
    "Qrels",
    "UPOS_TAGS",
    "NE_TYPES",
    "load_tweets",
    "load_annotations",
    "load_claims",
    "load_qrels",
    "load_embeddings",
    "write_embeddings",
    "normalize_text",
]


class CorpusError(Exception):
    """Base class for all corpus loading/validation failures."""


class ParseError(CorpusError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = f"{path}:{line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class ValidationError(CorpusError):
    pass


class EmptyCorpusError(CorpusError):
    pass


class TensorFormatError(CorpusError):
    """Binary tensor container problems; `code` is one of
    'magic', 'version', 'shape', 'nonfinite', 'truncated'."""

    def __init__(self, message, code):
        self.code = code
        super().__init__(message)


# The 17 Universal POS tags; annotations with anything else are rejected.
UPOS_TAGS = frozenset({
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
})

# Closed NE type set; unknown types are mapped to OTHER with a warning.
NE_TYPES = frozenset({
    "GPE", "PERSON", "ORG", "NORP", "LOC", "DATE", "CARDINAL", "TIME",
    "ORDINAL", "FAC", "MONEY", "PER", "MISC", "OTHER",
})

LANGUAGES = ("en", "ar")


@dataclass(frozen=True)
class TweetRecord:
    id: str
    text: str
    language: str
    topic_id: str = ""
    claim_label: int | None = None
    checkworthy_label: int | None = None


@dataclass(frozen=True)
class TokenAnnotation:
    surface: str
    lemma: str
    upos: str
    head: int
    dep_rel: str
    ne_type: str | None = None
    is_stopword: bool = False


@dataclass(frozen=True)
class AnnotatedTweet:
    tweet_id: str
    tokens: tuple[TokenAnnotation, ...]

    @property
    def degenerate(self) -> bool:
        return len(self.tokens) == 0


@dataclass(frozen=True)
class ClaimRecord:
    claim_id: str
    text: str
    title: str


@dataclass(frozen=True)
class Qrels:
    pairs: dict[str, frozenset[str]]

    def relevant(self, tweet_id: str) -> frozenset[str]:
        return self.pairs.get(tweet_id, frozenset())


@dataclass
class EmbeddingTensor:
    """Sentence vectors (units x D) or per-token layer stacks (L x T_i x D).

    For kind 'sentence', `values` is a single (N, D) float32 array and
    `token_counts` is None. For kind 'token_layers', `values` is a list of
    (L, T_i, D) arrays, one per unit.
    """

    unit_ids: list[str]
    kind: str  # "sentence" | "token_layers"
    layers: int
    dim: int
    values: np.ndarray | list[np.ndarray]
    token_counts: list[int] | None = None
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._index:
            self._index = {u: i for i, u in enumerate(self.unit_ids)}

    def unit(self, unit_id: str):
        return self.values[self._index[unit_id]]

    def __contains__(self, unit_id: str) -> bool:
        return unit_id in self._index


# --- text normalization -----------------------------------------------------

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_EMAIL_RE = re.compile(r"\b[\w.+-]+@[\w-]+\.[\w.-]*\w\b")
# Long digit runs or hyphen/dot separated phone shapes; deliberately narrow so
# ordinary small numbers survive.
_PHONE_RE = re.compile(r"\+?\d{7,}|\b\d{3}[-.]\d{3,4}(?:[-.]\d{2,4})?\b")
_MENTION_RE = re.compile(r"@\w+")
_SENTINEL_RE = re.compile(r"<(url|email|phone|user)>")
_NONWORD_RE = re.compile(r"[^\w\s\x00]|_", re.UNICODE)


def normalize_text(raw: str) -> str:
    """Lower-case, replace URLs/emails/phones/@mentions with sentinel tokens,
    strip punctuation and collapse whitespace. Total and idempotent."""
    s = raw.replace("\x00", " ")
    # Protect sentinels already present so the function is idempotent.
    s = _SENTINEL_RE.sub(lambda m: "\x00" + m.group(1) + "\x00", s)
    s = _URL_RE.sub("\x00url\x00", s)
    s = _EMAIL_RE.sub("\x00email\x00", s)
    s = _PHONE_RE.sub("\x00phone\x00", s)
    s = _MENTION_RE.sub("\x00user\x00", s)
    s = s.lower()
    s = _NONWORD_RE.sub(" ", s)
    s = s.replace("\x00", "\x01")  # keep angle brackets distinct from stripped ones
    s = re.sub(r"\x01(url|email|phone|user)\x01", r"<\1>", s)
    s = s.replace("\x01", " ")
    return " ".join(s.split())


# --- JSON Lines helpers ------------------------------------------------------

def _iter_jsonl(path):
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed JSON: {exc.msg}", path, lineno) from exc
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", path, lineno)
            yield lineno, obj


def _check_label(value, key, path, lineno):
    if value is None:
        return None
    if value not in (0, 1):
        raise ParseError(f"{key} must be 0 or 1, got {value!r}", path, lineno)
    return int(value)


def load_tweets(path, language: str) -> list[TweetRecord]:
    """Load TweetRecords from JSON Lines, preserving file order."""
    if language not in LANGUAGES:
        raise ValidationError(f"unknown language {language!r}")
    records = []
    seen = set()
    for lineno, obj in _iter_jsonl(path):
        try:
            tid = str(obj["id"])
            text = str(obj["text"])
        except KeyError as exc:
            raise ParseError(f"missing key {exc.args[0]!r}", path, lineno) from exc
        if not tid:
            raise ParseError("empty tweet id", path, lineno)
        if not text:
            raise ParseError("empty tweet text", path, lineno)
        if tid in seen:
            raise ValidationError(f"duplicate tweet id {tid!r} at {path}:{lineno}")
        seen.add(tid)
        records.append(TweetRecord(
            id=tid,
            text=text,
            language=language,
            topic_id=str(obj.get("topic_id", "")),
            claim_label=_check_label(obj.get("claim_label"), "claim_label", path, lineno),
            checkworthy_label=_check_label(
                obj.get("checkworthy_label"), "checkworthy_label", path, lineno),
        ))
    if not records:
        raise EmptyCorpusError(f"no tweets in {path}")
    return records


def load_annotations(path, tweet_ids=None) -> tuple[list[AnnotatedTweet], int]:
    """Load AnnotatedTweets; returns (tweets, ne_warning_count).

    Unknown ne_type strings are mapped to OTHER and counted; unknown upos or
    dangling heads are hard errors. When `tweet_ids` is given, every
    annotation must reference a known tweet.
    """
    out = []
    warnings = 0
    seen = set()
    for lineno, obj in _iter_jsonl(path):
        try:
            tid = str(obj["tweet_id"])
            raw_tokens = obj["tokens"]
        except KeyError as exc:
            raise ParseError(f"missing key {exc.args[0]!r}", path, lineno) from exc
        if tid in seen:
            raise ValidationError(f"duplicate annotation for tweet {tid!r} at {path}:{lineno}")
        seen.add(tid)
        if tweet_ids is not None and tid not in tweet_ids:
            raise ValidationError(f"annotation references unknown tweet {tid!r} at {path}:{lineno}")
        n = len(raw_tokens)
        tokens = []
        n_roots = 0
        for i, tok in enumerate(raw_tokens):
            upos = str(tok["upos"])
            if upos not in UPOS_TAGS:
                raise ValidationError(f"unknown upos {upos!r} for tweet {tid!r} at {path}:{lineno}")
            head = int(tok["head"])
            if head == -1:
                n_roots += 1
            elif head == i or not (0 <= head < n):
                raise ValidationError(
                    f"invalid head {head} for token {i} of tweet {tid!r} at {path}:{lineno}")
            ne = tok.get("ne_type")
            if ne is not None:
                ne = str(ne)
                if ne not in NE_TYPES:
                    ne = "OTHER"
                    warnings += 1
            tokens.append(TokenAnnotation(
                surface=str(tok["surface"]),
                lemma=str(tok.get("lemma", tok["surface"])),
                upos=upos,
                head=head,
                dep_rel=str(tok.get("dep_rel", "dep")),
                ne_type=ne,
                is_stopword=bool(tok.get("is_stopword", False)),
            ))
        if n > 0 and n_roots == 0:
            raise ValidationError(f"no root token in tweet {tid!r} at {path}:{lineno}")
        out.append(AnnotatedTweet(tweet_id=tid, tokens=tuple(tokens)))
    return out, warnings


def load_claims(path) -> list[ClaimRecord]:
    records = []
    seen = set()
    for lineno, obj in _iter_jsonl(path):
        try:
            cid = str(obj["claim_id"])
        except KeyError as exc:
            raise ParseError(f"missing key {exc.args[0]!r}", path, lineno) from exc
        text = str(obj.get("text", ""))
        title = str(obj.get("title", ""))
        if not cid:
            raise ParseError("empty claim id", path, lineno)
        if not text and not title:
            raise ValidationError(f"claim {cid!r} has neither text nor title at {path}:{lineno}")
        if cid in seen:
            raise ValidationError(f"duplicate claim id {cid!r} at {path}:{lineno}")
        seen.add(cid)
        records.append(ClaimRecord(claim_id=cid, text=text, title=title))
    if not records:
        raise EmptyCorpusError(f"no claims in {path}")
    return records


def load_qrels(path, tweet_ids=None, claim_ids=None) -> Qrels:
    """Load TSV qrels ("tweet_id\\tclaim_id"). When id sets are given every
    referenced id must be known."""
    pairs: dict[str, set[str]] = {}
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"expected 2 TSV columns, got {len(parts)}", path, lineno)
            tid, cid = parts
            if tweet_ids is not None and tid not in tweet_ids:
                raise ValidationError(f"qrels references unknown tweet {tid!r} at {path}:{lineno}")
            if claim_ids is not None and cid not in claim_ids:
                raise ValidationError(f"qrels references unknown claim {cid!r} at {path}:{lineno}")
            pairs.setdefault(tid, set()).add(cid)
    if not pairs:
        raise EmptyCorpusError(f"no judgments in {path}")
    return Qrels(pairs={t: frozenset(c) for t, c in pairs.items()})


# --- binary tensor container -------------------------------------------------

TENSOR_MAGIC = b"CKEM"
TENSOR_VERSION = 1
_KIND_CODES = {"sentence": 0, "token_layers": 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


def write_embeddings(tensor: EmbeddingTensor, path) -> None:
    """Serialize an EmbeddingTensor to the CKEM little-endian container."""
    kind_code = _KIND_CODES[tensor.kind]
    chunks = [TENSOR_MAGIC, struct.pack("<HBHII", TENSOR_VERSION, kind_code,
                                        tensor.layers, tensor.dim, len(tensor.unit_ids))]
    for i, uid in enumerate(tensor.unit_ids):
        raw = uid.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        if kind_code == 1:
            chunks.append(struct.pack("<I", tensor.token_counts[i]))
    if tensor.kind == "sentence":
        payload = np.ascontiguousarray(tensor.values, dtype="<f4").tobytes()
    else:
        payload = b"".join(np.ascontiguousarray(v, dtype="<f4").tobytes()
                           for v in tensor.values)
    chunks.append(payload)
    Path(path).write_bytes(b"".join(chunks))


def load_embeddings(path) -> EmbeddingTensor:
    """Read a CKEM tensor file, verifying magic, shape and finiteness."""
    data = Path(path).read_bytes()
    if data[:4] != TENSOR_MAGIC:
        raise TensorFormatError(f"bad magic in {path}", code="magic")
    if len(data) < 17:
        raise TensorFormatError(f"truncated header in {path}", code="truncated")
    version, kind_code, layers, dim, n_units = struct.unpack_from("<HBHII", data, 4)
    if version != TENSOR_VERSION:
        raise TensorFormatError(f"unsupported version {version}", code="version")
    if kind_code not in _KIND_NAMES:
        raise TensorFormatError(f"unknown kind code {kind_code}", code="shape")
    if layers < 1 or dim < 1:
        raise TensorFormatError(f"invalid layers/dim ({layers}, {dim})", code="shape")
    kind = _KIND_NAMES[kind_code]
    offset = 17
    unit_ids = []
    token_counts = [] if kind == "token_layers" else None
    for _ in range(n_units):
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        unit_ids.append(data[offset:offset + id_len].decode("utf-8"))
        offset += id_len
        if kind == "token_layers":
            (tc,) = struct.unpack_from("<I", data, offset)
            offset += 4
            token_counts.append(tc)
    if len(set(unit_ids)) != len(unit_ids):
        raise ValidationError(f"duplicate unit ids in {path}")
    if kind == "sentence":
        expected = n_units * dim
    else:
        expected = layers * dim * sum(token_counts)
    payload = data[offset:]
    if len(payload) != 4 * expected:
        raise TensorFormatError(
            f"payload length {len(payload)} bytes does not match declared shape "
            f"({4 * expected} expected)", code="shape")
    flat = np.frombuffer(payload, dtype="<f4")
    if kind == "sentence":
        values = flat.reshape(n_units, dim).copy()
        bad = np.flatnonzero(~np.isfinite(values).all(axis=1))
        if bad.size:
            raise TensorFormatError(
                f"non-finite values in unit index {int(bad[0])} of {path}", code="nonfinite")
    else:
        values = []
        pos = 0
        for i, tc in enumerate(token_counts):
            n = layers * tc * dim
            arr = flat[pos:pos + n].reshape(layers, tc, dim).copy()
            pos += n
            if not np.isfinite(arr).all():
                raise TensorFormatError(
                    f"non-finite values in unit index {i} of {path}", code="nonfinite")
            values.append(arr)
    return EmbeddingTensor(unit_ids=unit_ids, kind=kind, layers=layers, dim=dim,
                           values=values, token_counts=token_counts)
