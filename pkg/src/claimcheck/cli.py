"""Command-line orchestration of the two-task pipeline.

Subcommands: encode, gridsearch, train, predict, retrieve, evaluate. A single
TOML config file names inputs, feature flags and search ranges; a resolved
snapshot of the configuration is written next to every command's outputs.

Exit codes: 0 success, 1 internal/assertion failure, 2 input error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import corpus, feats, metrics, retrieval, svm
from .decomp import fit_pca

__all__ = ["main", "PipelineConfig", "ConfigError"]


class ConfigError(ValueError):
    pass


class PipelineConfig:
    """Resolved config: raw TOML dict plus CLI overrides."""

    def __init__(self, raw: dict, config_path: str):
        self.raw = raw
        self.config_path = config_path
        self.run_id = str(raw.get("run_id", "run1"))
        if not self.run_id:
            raise ConfigError("run_id must be non-empty")
        self.seed = int(raw.get("seed", 42))
        self.paths = dict(raw.get("paths", {}))
        out = self.paths.get("output_dir")
        if not out:
            raise ConfigError("paths.output_dir is required")
        self.output_dir = Path(out)

    def path(self, key: str, required: bool = True) -> Path | None:
        p = self.paths.get(key)
        if p is None:
            if required:
                raise ConfigError(f"paths.{key} is required for this command")
            return None
        p = Path(p)
        if not p.exists():
            raise ConfigError(f"paths.{key} does not exist: {p}")
        return p

    def feature_config(self) -> feats.FeatureConfig:
        f = dict(self.raw.get("features", {}))
        return feats.FeatureConfig(
            language=f.get("language", "en"),
            use_stopwords=bool(f.get("use_stopwords", True)),
            use_pos=bool(f.get("use_pos", True)),
            use_ne=bool(f.get("use_ne", False)),
            use_dep=bool(f.get("use_dep", True)),
            dep_mode=f.get("dep_mode", "pair"),
            pooling=f.get("pooling", "avg_last4"),
        )

    def snapshot(self, command: str, overrides: dict) -> None:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        snap = {"command": command, "config_file": str(self.config_path),
                "config": self.raw, "overrides": overrides,
                "run_id": self.run_id, "seed": self.seed}
        (self.output_dir / f"config_{command}.json").write_text(
            json.dumps(snap, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_config(path, seed=None, run_id=None) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    if seed is not None:
        raw["seed"] = seed
    if run_id is not None:
        raw["run_id"] = run_id
    return PipelineConfig(raw, str(path))


# --- encode --------------------------------------------------------------------

SPLITS = ("train", "dev", "test")


def _load_split_tweets(cfg: PipelineConfig, language: str):
    out = {}
    for split in SPLITS:
        p = cfg.path(f"{split}_tweets", required=split != "dev")
        if p is not None:
            out[split] = corpus.load_tweets(p, language)
    return out


def cmd_encode(cfg: PipelineConfig) -> int:
    fcfg = cfg.feature_config()
    tweets = _load_split_tweets(cfg, fcfg.language)
    all_ids = {t.id for split in tweets.values() for t in split}
    annotations, _ = corpus.load_annotations(cfg.path("annotations"), tweet_ids=all_ids)
    ann_by_id = {a.tweet_id: a for a in annotations}
    embeddings = corpus.load_embeddings(cfg.path("embeddings"))

    vocab = None
    if fcfg.use_dep:
        train_ann = [ann_by_id[t.id] for t in tweets["train"] if t.id in ann_by_id]
        vocab = feats.build_dep_vocab(train_ann, fcfg.dep_mode, fcfg)

    segment_dims = None
    for split, records in tweets.items():
        vecs, ids = [], []
        for t in records:
            ann = ann_by_id.get(t.id)
            if ann is None:
                raise corpus.ValidationError(f"no annotation for tweet {t.id!r}")
            emb, degen = feats.tweet_embedding(ann, fcfg, embeddings)
            fv = feats.fuse_features(ann, fcfg, vocab, emb, degen)
            vecs.append(fv.concat())
            ids.append(t.id)
            if segment_dims is None:
                segment_dims = [(name, len(v)) for name, v in fv.segments]
        tensor = corpus.EmbeddingTensor(
            unit_ids=ids, kind="sentence", layers=1,
            dim=len(vecs[0]), values=np.asarray(vecs, dtype=np.float32))
        corpus.write_embeddings(tensor, cfg.output_dir / f"features_{split}.ckem")

    sidecar = {
        "segments": [{"name": n, "dim": d} for n, d in segment_dims],
        "total_dim": sum(d for _, d in segment_dims),
        "feature_config": dataclasses.asdict(fcfg),
        "dep_vocab_size": len(vocab) if vocab is not None else 0,
    }
    (cfg.output_dir / "features_meta.json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for seg in sidecar["segments"]:
        print(f"segment {seg['name']}: dim {seg['dim']}")
    print(f"total_dim {sidecar['total_dim']}")
    return 0


# --- gridsearch / train / predict ------------------------------------------------

def _load_features(cfg: PipelineConfig, split: str):
    p = cfg.output_dir / f"features_{split}.ckem"
    if not p.exists():
        raise ConfigError(f"features for split {split!r} not found; run encode first")
    tensor = corpus.load_embeddings(p)
    return tensor.unit_ids, np.asarray(tensor.values, dtype=float)


def _labels_for(cfg: PipelineConfig, split: str, ids):
    fcfg = cfg.feature_config()
    records = corpus.load_tweets(cfg.path(f"{split}_tweets"), fcfg.language)
    by_id = {t.id: t for t in records}
    y = []
    for tid in ids:
        t = by_id.get(tid)
        if t is None or t.checkworthy_label is None:
            raise corpus.ValidationError(f"tweet {tid!r} lacks a check-worthiness label")
        y.append(t.checkworthy_label)
    return np.asarray(y, dtype=int)


def cmd_gridsearch(cfg: PipelineConfig, workers: int) -> int:
    ids_tr, X_tr = _load_features(cfg, "train")
    ids_dv, X_dv = _load_features(cfg, "dev")
    y_tr = _labels_for(cfg, "train", ids_tr)
    y_dv = _labels_for(cfg, "dev", ids_dv)
    g = dict(cfg.raw.get("grid", {}))
    s = dict(cfg.raw.get("svm", {}))
    energies = g.get("energies", svm.default_energies())
    c_values = g.get("c_values") or svm.default_param_grid(int(g.get("c_steps", 30)))
    gamma_values = (g.get("gamma_values")
                    or svm.default_param_grid(int(g.get("gamma_steps", 30))))
    result = svm.grid_search(
        (X_tr, y_tr), (X_dv, y_dv), energies=energies, c_values=c_values,
        gamma_values=gamma_values, tol=float(s.get("tol", 1e-3)),
        max_passes=int(s.get("max_passes", 200)), workers=workers, seed=cfg.seed)
    payload = {
        "seed": result.seed,
        "best": result.best,
        "cells": [dataclasses.asdict(c) for c in result.cells],
    }
    (cfg.output_dir / "grid.json").write_text(
        json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    b = result.best_cell
    print(f"cells {len(result.cells)}")
    print(f"best energy={b.energy} C={b.C:.6g} gamma={b.gamma:.6g} "
          f"dev_metric={b.dev_metric:.4f}")
    return 0


def _best_params(cfg: PipelineConfig):
    grid_path = cfg.output_dir / "grid.json"
    if grid_path.exists():
        payload = json.loads(grid_path.read_text(encoding="utf-8"))
        best = payload["cells"][payload["best"]]
        return int(best["energy"]), float(best["C"]), float(best["gamma"])
    s = dict(cfg.raw.get("svm", {}))
    if "C" in s and "gamma" in s:
        return int(s.get("energy", 100)), float(s["C"]), float(s["gamma"])
    raise ConfigError("no grid.json found and no [svm] C/gamma in config")


def cmd_train(cfg: PipelineConfig, model_out: str | None) -> int:
    ids_tr, X_tr = _load_features(cfg, "train")
    y_tr = _labels_for(cfg, "train", ids_tr)
    energy, C, gamma = _best_params(cfg)
    s = dict(cfg.raw.get("svm", {}))
    pca = fit_pca(X_tr, energy)
    params = svm.SvmParams(C=C, gamma=gamma, tol=float(s.get("tol", 1e-3)),
                           max_passes=int(s.get("max_passes", 200)))
    model = svm.train_smo(
        np.asarray((X_tr - pca.mean) @ pca.components.T),
        np.where(y_tr > 0, 1.0, -1.0), params, seed=cfg.seed)
    pipeline = svm.PipelineModel(pca=pca, svm=model)
    out = Path(model_out) if model_out else cfg.output_dir / "model.bin"
    svm.save_pipeline(pipeline, out)
    print(f"model written to {out} (energy={energy}, C={C:.6g}, gamma={gamma:.6g}, "
          f"support_vectors={model.support_vectors.shape[0]})")
    return 0


def cmd_predict(cfg: PipelineConfig, model_paths: list[str],
                feature_paths: list[str]) -> int:
    if not model_paths:
        model_paths = [str(cfg.output_dir / "model.bin")]
    pipelines = [svm.load_pipeline(p) for p in model_paths]
    if not feature_paths:
        feature_paths = [str(cfg.output_dir / "features_test.ckem")] * len(pipelines)
    elif len(feature_paths) == 1:
        feature_paths = feature_paths * len(pipelines)
    if len(feature_paths) != len(pipelines):
        raise ConfigError("need one feature file per model (or a single shared one)")
    tensors = [corpus.load_embeddings(p) for p in feature_paths]
    ids = tensors[0].unit_ids
    for t in tensors[1:]:
        if t.unit_ids != ids:
            raise ConfigError("feature files disagree on tweet ids/order")
    fs = np.stack([pl.decision_values(np.asarray(t.values, dtype=float))
                   for pl, t in zip(pipelines, tensors)])
    scores = fs.mean(axis=0)

    fcfg = cfg.feature_config()
    records = corpus.load_tweets(cfg.path("test_tweets"), fcfg.language)
    topic = {t.id: (t.topic_id or "all") for t in records}
    by_topic: dict[str, list[tuple[str, float]]] = {}
    for tid, score in zip(ids, scores):
        by_topic.setdefault(topic.get(tid, "all"), []).append((tid, float(score)))
    out = cfg.output_dir / f"predictions_{cfg.run_id}.tsv"
    with open(out, "w", encoding="utf-8") as fh:
        for top in sorted(by_topic):
            ranked = svm.rank_by_score([t for t, _ in by_topic[top]],
                                       [s for _, s in by_topic[top]])
            for rank, (tid, score) in enumerate(ranked, start=1):
                fh.write(f"{top}\t{tid}\t{score:.10g}\t{rank}\t{cfg.run_id}\n")
    print(f"predictions written to {out}")
    return 0


# --- retrieve / evaluate ----------------------------------------------------------

def _sentence_vecs(tensor: corpus.EmbeddingTensor) -> dict[str, np.ndarray]:
    if tensor.kind != "sentence":
        raise ConfigError("expected a sentence-kind tensor")
    vals = np.asarray(tensor.values, dtype=float)
    return {uid: vals[i] for i, uid in enumerate(tensor.unit_ids)}


def cmd_retrieve(cfg: PipelineConfig, fine_tune: bool, exact_cosine: bool) -> int:
    r = dict(cfg.raw.get("retrieve", {}))
    top_k = int(r.get("top_k", 1000))
    n_neg = int(r.get("negatives", 3))
    margin = float(r.get("margin", 1.0))
    normalize = bool(r.get("normalize", False))

    tweet_vecs = _sentence_vecs(corpus.load_embeddings(cfg.path("tweet_embeddings")))
    text_vecs = _sentence_vecs(corpus.load_embeddings(cfg.path("claim_text_embeddings")))
    title_vecs = _sentence_vecs(corpus.load_embeddings(cfg.path("claim_title_embeddings")))
    claims = corpus.load_claims(cfg.path("claims"))
    claim_ids = sorted(c.claim_id for c in claims)
    store = {}
    for cid in claim_ids:
        store[cid] = retrieval.embed_claim(text_vecs.get(cid), title_vecs.get(cid))
    claim_matrix = np.stack([store[cid] for cid in claim_ids])

    fcfg = cfg.feature_config()
    queries = [t.id for t in corpus.load_tweets(cfg.path("test_tweets"), fcfg.language)]
    for q in queries:
        if q not in tweet_vecs:
            raise ConfigError(f"no tweet embedding for query {q!r}")

    projection = retrieval.ProjectionModel(W=np.eye(claim_matrix.shape[1]), margin=margin)
    if fine_tune:
        t = dict(cfg.raw.get("train", {}))
        tcfg = retrieval.TrainConfig(
            batch_size=int(t.get("batch_size", 8)), epochs=int(t.get("epochs", 2)),
            learning_rate=float(t.get("learning_rate", 1e-3)), seed=cfg.seed)
        train_ids = [tw.id for tw in corpus.load_tweets(cfg.path("train_tweets"),
                                                        fcfg.language)]
        qrels = corpus.load_qrels(cfg.path("train_qrels"),
                                  tweet_ids=set(train_ids), claim_ids=set(claim_ids))
        negatives = {}
        for tid in train_ids:
            if tid not in qrels.pairs or tid not in tweet_vecs:
                continue
            negatives[tid] = retrieval.mine_negatives(
                tweet_vecs[tid], claim_ids, claim_matrix, qrels.relevant(tid), k=n_neg)
        field_vecs = {"text": text_vecs, "title": title_vecs}
        triplets, skipped = retrieval.build_triplets(qrels, tweet_vecs, field_vecs,
                                                     negatives)
        projection = retrieval.train_projection(triplets, tcfg, margin=margin)
        retrieval.save_projection(projection, cfg.output_dir / "projection.ckem")
        print(f"trained projection on {len(triplets)} triplets "
              f"({skipped} skipped); loss trace {projection.loss_trace}")

    proj_claims = projection.project(claim_matrix)
    if normalize:
        # Unit-normalize after projection so Euclidean and cosine rankings
        # coincide even when the stored float32 vectors drifted off the sphere.
        proj_claims = proj_claims / np.linalg.norm(proj_claims, axis=1,
                                                   keepdims=True)

    def query_vec(q):
        v = projection.project(tweet_vecs[q])
        return v / np.linalg.norm(v) if normalize else v

    run = metrics.RankedRun()
    if exact_cosine:
        for q in queries:
            ranked = retrieval.cosine_rank(query_vec(q), claim_ids,
                                           proj_claims, k=top_k)
            for cid, sim in ranked:
                run.add(q, cid, sim)
    else:
        tree = retrieval.build_kdtree(claim_ids, proj_claims)
        for q in queries:
            ranked = retrieval.query_kdtree(tree, query_vec(q), k=top_k)
            for cid, dist in ranked:
                run.add(q, cid, -dist)
    out = cfg.output_dir / f"retrieval_{cfg.run_id}.tsv"
    metrics.write_run_file(out, run, cfg.run_id)
    mode = "exact-cosine" if exact_cosine else "kd-tree"
    print(f"{mode} run over {len(queries)} queries written to {out}")
    return 0


def cmd_evaluate(cfg: PipelineConfig, run_path: str | None,
                 metric_names: list[str]) -> int:
    run_path = run_path or str(cfg.output_dir / f"retrieval_{cfg.run_id}.tsv")
    if not Path(run_path).exists():
        raise ConfigError(f"run file not found: {run_path}")
    report = metrics.evaluate_run(run_path, cfg.path("qrels"), metric_names)
    out = cfg.output_dir / f"report_{cfg.run_id}.json"
    metrics.dump_report(report, out)
    for name in metric_names:
        print(f"{name.lower()}: {report['aggregate'][name.lower()]:.4f}")
    return 0


# --- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="claimcheck",
        description="Check-worthiness classification and verified-claim retrieval")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--run-id", default=None)

    common(sub.add_parser("encode", help="extract fused feature tensors"))
    g = sub.add_parser("gridsearch", help="sweep PCA energy, C and gamma")
    common(g)
    g.add_argument("--workers", type=int, default=1)
    t = sub.add_parser("train", help="train a PCA+SVM pipeline at the best cell")
    common(t)
    t.add_argument("--model-out", default=None)
    p = sub.add_parser("predict", help="rank test tweets by (ensembled) decision value")
    common(p)
    p.add_argument("--model", action="append", default=[])
    p.add_argument("--features", action="append", default=[])
    r = sub.add_parser("retrieve", help="rank verified claims per query tweet")
    common(r)
    r.add_argument("--fine-tune", action="store_true")
    r.add_argument("--exact-cosine", action="store_true")
    e = sub.add_parser("evaluate", help="score a run file against qrels")
    common(e)
    e.add_argument("--run", default=None)
    e.add_argument("--metrics", default="map@1,map@3,map@5,map@10")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, run_id=args.run_id)
        overrides = {k: v for k, v in vars(args).items()
                     if k not in ("command",) and v not in (None, [], False)}
        cfg.snapshot(args.command, overrides)
        if args.command == "encode":
            return cmd_encode(cfg)
        if args.command == "gridsearch":
            return cmd_gridsearch(cfg, workers=args.workers)
        if args.command == "train":
            return cmd_train(cfg, model_out=args.model_out)
        if args.command == "predict":
            return cmd_predict(cfg, model_paths=args.model, feature_paths=args.features)
        if args.command == "retrieve":
            return cmd_retrieve(cfg, fine_tune=args.fine_tune,
                                exact_cosine=args.exact_cosine)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, run_path=args.run,
                                metric_names=[m.strip() for m in args.metrics.split(",")])
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, corpus.CorpusError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
