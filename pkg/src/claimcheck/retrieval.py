"""Verified-claim retrieval: triplet construction with hard-negative mining,
linear projection training on the hinge triplet loss, and exact nearest
neighbors via a backtracking KD-tree or direct cosine ranking.

The projection replaces transformer fine-tuning: a D x D map, initialized to
the identity, is trained by minibatch gradient descent on
sum_i [ ||W a - W p||^2 - ||W a - W n||^2 + m ]_+  (squared distances, no
square roots). The identity projection reproduces the no-fine-tuning path.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import EmbeddingTensor, Qrels, load_embeddings, write_embeddings

__all__ = [
    "RetrievalError",
    "TripletExample",
    "TrainConfig",
    "ProjectionModel",
    "KdTree",
    "mine_negatives",
    "build_triplets",
    "triplet_loss",
    "triplet_loss_gradient",
    "train_projection",
    "embed_claim",
    "build_kdtree",
    "query_kdtree",
    "cosine_rank",
    "save_projection",
    "load_projection",
]


class RetrievalError(ValueError):
    pass


@dataclass(frozen=True)
class TripletExample:
    anchor_id: str
    positive: tuple[str, str]  # (claim_id, field)
    negative: tuple[str, str]
    s_a: np.ndarray
    s_p: np.ndarray
    s_n: np.ndarray


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    epochs: int = 2
    learning_rate: float = 1e-3
    seed: int = 42

    def __post_init__(self):
        if self.batch_size < 1:
            raise RetrievalError("batch_size must be >= 1")
        if self.epochs < 0:
            raise RetrievalError("epochs must be >= 0")
        if self.learning_rate < 0:
            raise RetrievalError("learning rate must be >= 0")


@dataclass
class ProjectionModel:
    W: np.ndarray
    margin: float = 1.0
    trained_epochs: int = 0
    loss_trace: list[float] = field(default_factory=list)

    def project(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return X @ self.W.T


def mine_negatives(tweet_vec, claim_ids, claim_matrix, true_ids, k: int = 3):
    """Top-k non-true claims by cosine similarity to the anchor, ties by id."""
    q = np.asarray(tweet_vec, dtype=float)
    M = np.asarray(claim_matrix, dtype=float)
    true_ids = set(true_ids)
    candidates = [i for i, cid in enumerate(claim_ids) if cid not in true_ids]
    if len(candidates) < k:
        raise RetrievalError(f"need at least {k} non-true claims, have {len(candidates)}")
    qn = np.linalg.norm(q)
    if qn == 0:
        raise RetrievalError("zero-norm anchor vector")
    norms = np.linalg.norm(M[candidates], axis=1)
    sims = (M[candidates] @ q) / (qn * np.where(norms > 0, norms, 1.0))
    sims = np.where(norms > 0, sims, 0.0)
    order = sorted(range(len(candidates)), key=lambda t: (-sims[t], claim_ids[candidates[t]]))
    return [claim_ids[candidates[t]] for t in order[:k]]


def build_triplets(qrels: Qrels, tweet_vecs: dict, claim_field_vecs: dict,
                   negatives: dict) -> tuple[list[TripletExample], int]:
    """Two triplets (text-field and title-field) per (tweet, true claim,
    negative). Claims missing a field skip that field's triplet; the number
    of skips is returned alongside.
    """
    triplets = []
    skipped = 0
    for tweet_id in sorted(negatives):
        if tweet_id not in tweet_vecs:
            raise RetrievalError(f"no embedding for tweet {tweet_id!r}")
        anchor = np.asarray(tweet_vecs[tweet_id], dtype=float)
        for pos_id in sorted(qrels.relevant(tweet_id)):
            for neg_id in negatives[tweet_id]:
                for fld in ("text", "title"):
                    vecs = claim_field_vecs[fld]
                    if pos_id not in vecs or neg_id not in vecs:
                        skipped += 1
                        continue
                    triplets.append(TripletExample(
                        anchor_id=tweet_id,
                        positive=(pos_id, fld),
                        negative=(neg_id, fld),
                        s_a=anchor,
                        s_p=np.asarray(vecs[pos_id], dtype=float),
                        s_n=np.asarray(vecs[neg_id], dtype=float),
                    ))
    return triplets, skipped


def _stack(batch):
    A = np.stack([t.s_a for t in batch])
    P = np.stack([t.s_p for t in batch])
    N = np.stack([t.s_n for t in batch])
    return A, P, N


def _hinge_terms(A, P, N, W, margin):
    dp = (A - P) @ W.T
    dn = (A - N) @ W.T
    return (dp * dp).sum(axis=1) - (dn * dn).sum(axis=1) + margin


def triplet_loss(batch: list[TripletExample], model: ProjectionModel) -> float:
    """Sum over the batch of [ ||Wa-Wp||^2 - ||Wa-Wn||^2 + m ]_+."""
    if not batch:
        return 0.0
    A, P, N = _stack(batch)
    if not (A.shape == P.shape == N.shape) or A.shape[1] != model.W.shape[1]:
        raise RetrievalError("triplet dimension mismatch")
    terms = _hinge_terms(A, P, N, model.W, model.margin)
    return float(np.maximum(terms, 0.0).sum())


def triplet_loss_gradient(batch: list[TripletExample],
                          model: ProjectionModel) -> np.ndarray:
    """Analytic gradient of the batch loss with respect to W."""
    A, P, N = _stack(batch)
    W = model.W
    terms = _hinge_terms(A, P, N, W, model.margin)
    active = terms > 0
    if not active.any():
        return np.zeros_like(W)
    Up = (A - P)[active]
    Un = (A - N)[active]
    return 2.0 * W @ (Up.T @ Up - Un.T @ Un)


def train_projection(triplets: list[TripletExample],
                     cfg: TrainConfig, margin: float = 1.0) -> ProjectionModel:
    """Minibatch gradient descent from W = identity; per-epoch mean loss
    (per triplet, evaluated before each update) is recorded in loss_trace."""
    if not triplets:
        raise RetrievalError("need at least one triplet")
    dim = len(triplets[0].s_a)
    model = ProjectionModel(W=np.eye(dim), margin=margin)
    rng = np.random.default_rng(cfg.seed)
    n = len(triplets)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = [triplets[i] for i in order[start:start + cfg.batch_size]]
            loss = triplet_loss(batch, model)
            if not np.isfinite(loss):
                raise RetrievalError(
                    f"non-finite loss at epoch {epoch}, batch offset {start}")
            epoch_loss += loss
            if cfg.learning_rate > 0:
                grad = triplet_loss_gradient(batch, model)
                model.W = model.W - cfg.learning_rate * grad
        model.loss_trace.append(epoch_loss / n)
        model.trained_epochs = epoch + 1
    return model


def embed_claim(text_vec=None, title_vec=None) -> np.ndarray:
    """Element-wise mean of claim text and title vectors; falls back to the
    single present vector."""
    if text_vec is None and title_vec is None:
        raise RetrievalError("claim has neither text nor title vector")
    if text_vec is None:
        return np.asarray(title_vec, dtype=float).copy()
    if title_vec is None:
        return np.asarray(text_vec, dtype=float).copy()
    return (np.asarray(text_vec, dtype=float) + np.asarray(title_vec, dtype=float)) / 2.0


# --- KD-tree -----------------------------------------------------------------

@dataclass
class _Node:
    split_dim: int = -1
    split_value: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None
    indices: np.ndarray | None = None  # leaf only


@dataclass
class KdTree:
    ids: list[str]           # sorted ascending; index order == id order
    points: np.ndarray       # (M, D), aligned with ids
    leaf_size: int
    root: _Node = field(repr=False, default=None)


def build_kdtree(ids, points, leaf_size: int = 16) -> KdTree:
    """Median-split tree on the dimension of maximal spread."""
    if leaf_size < 1:
        raise RetrievalError("leaf_size must be >= 1")
    ids = list(ids)
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] != len(ids) or points.shape[0] < 1:
        raise RetrievalError("points must be (M, D) aligned with ids, M >= 1")
    if len(set(ids)) != len(ids):
        raise RetrievalError("duplicate point ids")
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    ids = [ids[i] for i in order]
    points = points[order]

    def build(idx: np.ndarray) -> _Node:
        if len(idx) <= leaf_size:
            return _Node(indices=idx)
        sub = points[idx]
        spread = sub.max(axis=0) - sub.min(axis=0)
        dim = int(np.argmax(spread))
        if spread[dim] == 0:  # all duplicates; cannot split
            return _Node(indices=idx)
        vals = sub[:, dim]
        srt = np.argsort(vals, kind="stable")
        mid = len(idx) // 2
        return _Node(
            split_dim=dim,
            split_value=float(vals[srt[mid]]),
            left=build(idx[srt[:mid]]),
            right=build(idx[srt[mid:]]),
        )

    root = build(np.arange(len(ids)))
    return KdTree(ids=ids, points=points, leaf_size=leaf_size, root=root)


def query_kdtree(tree: KdTree, q, k: int = 1000) -> list[tuple[str, float]]:
    """Exact k nearest neighbors by Euclidean distance ascending, ties by id.
    k larger than the store is clamped."""
    q = np.asarray(q, dtype=float)
    if q.shape != (tree.points.shape[1],):
        raise RetrievalError(f"query dim {q.shape} does not match tree "
                             f"dim {tree.points.shape[1]}")
    k = min(k, len(tree.ids))
    if k < 1:
        raise RetrievalError("k must be >= 1")
    # Max-heap via negation: root holds the current worst (largest d2, then
    # largest index), so ties at the cutoff resolve toward smaller ids.
    heap: list[tuple[float, int]] = []

    def worst():
        return (-heap[0][0], -heap[0][1])

    def visit(node: _Node):
        if node.indices is not None:
            pts = tree.points[node.indices]
            d2 = ((pts - q) ** 2).sum(axis=1)
            for off, i in enumerate(node.indices):
                cand = (float(d2[off]), int(i))
                if len(heap) < k:
                    heapq.heappush(heap, (-cand[0], -cand[1]))
                elif cand < worst():
                    heapq.heapreplace(heap, (-cand[0], -cand[1]))
            return
        delta = q[node.split_dim] - node.split_value
        near, far = (node.left, node.right) if delta <= 0 else (node.right, node.left)
        visit(near)
        # The far side is bounded below by the splitting plane distance; ties
        # cannot be pruned because a smaller id may hide there.
        if len(heap) < k or delta * delta <= worst()[0]:
            visit(far)

    visit(tree.root)
    out = sorted((-d2, -i) for d2, i in heap)
    return [(tree.ids[i], float(np.sqrt(max(d2, 0.0)))) for d2, i in out]


def cosine_rank(q, claim_ids, claim_matrix, k: int) -> list[tuple[str, float]]:
    """Top-k claims by cosine similarity descending, ties by id."""
    q = np.asarray(q, dtype=float)
    M = np.asarray(claim_matrix, dtype=float)
    if M.shape[1] != q.shape[0]:
        raise RetrievalError("dimension mismatch")
    qn = np.linalg.norm(q)
    if qn == 0:
        raise RetrievalError("zero-norm query")
    norms = np.linalg.norm(M, axis=1)
    sims = (M @ q) / (qn * np.where(norms > 0, norms, 1.0))
    sims = np.where(norms > 0, sims, 0.0)
    k = min(k, len(claim_ids))
    order = sorted(range(len(claim_ids)), key=lambda i: (-sims[i], claim_ids[i]))
    return [(claim_ids[i], float(sims[i])) for i in order[:k]]


# --- serialization -------------------------------------------------------------

def save_projection(model: ProjectionModel, path) -> None:
    path = Path(path)
    d = model.W.shape[0]
    tensor = EmbeddingTensor(
        unit_ids=[f"w{i:05d}" for i in range(d)], kind="sentence",
        layers=1, dim=d, values=model.W.astype(np.float32))
    write_embeddings(tensor, path)
    sidecar = {"margin": model.margin, "trained_epochs": model.trained_epochs,
               "loss_trace": model.loss_trace}
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, sort_keys=True), encoding="utf-8")


def load_projection(path) -> ProjectionModel:
    path = Path(path)
    tensor = load_embeddings(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text(encoding="utf-8"))
    return ProjectionModel(W=np.asarray(tensor.values, dtype=float),
                           margin=float(meta["margin"]),
                           trained_epochs=int(meta["trained_epochs"]),
                           loss_trace=list(meta["loss_trace"]))
