"""Deterministic embedding backend.

"hashrand-v1" stands in for a transformer/sentence encoder: every vector is
drawn from a PRNG seeded by a SHA-256 of (backend, layer, content), so
re-export is bit-identical with no model download. Token-layer tensors carry
the selected hidden layers with a CLS position at index 0 of the token axis;
sentence tensors carry one vector per unit.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .annotate import read_input_rows, tokenize
from .job import ExportJob, ExportError


def _seeded_vector(backend: str, dim: int, *parts: str) -> np.ndarray:
    digest = hashlib.sha256("\x1f".join((backend,) + parts).encode("utf-8"))
    seed = int.from_bytes(digest.digest()[:8], "little")
    return np.random.default_rng(seed).standard_normal(dim).astype(np.float32)


def token_layer_states(tweet_id: str, text: str, job: ExportJob) -> np.ndarray:
    """(layers, tokens+1, dim) hidden states; position 0 is the CLS slot."""
    tokens = tokenize(text)
    if not tokens:
        raise ExportError(f"tweet {tweet_id!r} has no tokens to embed")
    dim = job.embedding_dim
    out = np.empty((len(job.layers), len(tokens) + 1, dim), dtype=np.float32)
    for li, layer in enumerate(job.layers):
        out[li, 0] = _seeded_vector(job.embedding_backend, dim,
                                    f"L{layer}", "cls", text)
        for ti, tok in enumerate(tokens, start=1):
            out[li, ti] = _seeded_vector(job.embedding_backend, dim,
                                         f"L{layer}", "tok", tok.lower())
    return out


def sentence_vector(text: str, job: ExportJob) -> np.ndarray:
    vec = _seeded_vector(job.embedding_backend, job.embedding_dim,
                         "sent", text)
    return vec / np.linalg.norm(vec)


def export_token_layers(job: ExportJob):
    """-> (unit_ids, arrays, token_counts) for a token_layers tensor."""
    ids, arrays, counts = [], [], []
    for uid, obj in read_input_rows(job.input_path):
        states = token_layer_states(uid, str(obj.get("text", "")), job)
        ids.append(uid)
        arrays.append(states)
        counts.append(states.shape[1])
    return ids, arrays, counts


def export_sentences(job: ExportJob, field: str):
    """-> (unit_ids, matrix) of sentence vectors for one claim field; units
    whose field is empty are omitted."""
    ids, vecs = [], []
    for uid, obj in read_input_rows(job.input_path):
        text = str(obj.get(field, ""))
        if not text:
            continue
        ids.append(uid)
        vecs.append(sentence_vector(text, job))
    if not ids:
        raise ExportError(f"no unit has a non-empty {field!r} field")
    return ids, np.stack(vecs)
