import json

import numpy as np
import pytest

from claimcheck import cli, corpus
from claimcheck.corpus import EmbeddingTensor, write_embeddings
from claimcheck.metrics import read_run_file
from conftest import annotation_row, make_tweet, tweet_row, write_jsonl


def toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(toml_value(x) for x in v) + "]"
    return json.dumps(str(v))


def write_toml(path, table):
    lines = []
    for key, val in table.items():
        if isinstance(val, dict):
            lines.append(f"[{key}]")
            lines.extend(f"{k} = {toml_value(v)}" for k, v in val.items())
        else:
            lines.append(f"{key} = {toml_value(val)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def clf_workspace(tmp_path, rng):
    """Tiny check-worthiness setup: positives carry a shifted embedding."""
    splits = {"train": 16, "dev": 8, "test": 8}
    tweet_paths = {}
    annotations = []
    units, vals, counts = [], [], []
    for split, n in splits.items():
        rows = []
        for i in range(n):
            tid = f"{split}{i:02d}"
            label = i % 2
            rows.append(tweet_row(tid, text=f"tweet {tid}", topic="covid",
                                  worthy=label))
            annotations.append(annotation_row(
                make_tweet(tid, ["NOUN", "VERB", "PROPN"])))
            base = np.full(4, 2.0) if label else np.zeros(4)
            units.append(tid)
            vals.append((base + 0.1 * rng.normal(size=(1, 3, 4)))
                        .astype(np.float32))
            counts.append(3)
        tweet_paths[split] = write_jsonl(tmp_path / f"{split}.jsonl", rows)
    write_jsonl(tmp_path / "annotations.jsonl", annotations)
    write_embeddings(EmbeddingTensor(unit_ids=units, kind="token_layers",
                                     layers=1, dim=4, values=vals,
                                     token_counts=counts),
                     tmp_path / "tokens.ckem")
    out = tmp_path / "out"
    config = {
        "run_id": "trial",
        "seed": 7,
        "paths": {
            "output_dir": str(out),
            "train_tweets": str(tweet_paths["train"]),
            "dev_tweets": str(tweet_paths["dev"]),
            "test_tweets": str(tweet_paths["test"]),
            "annotations": str(tmp_path / "annotations.jsonl"),
            "embeddings": str(tmp_path / "tokens.ckem"),
        },
        "features": {"pooling": "last", "use_ne": False},
        "grid": {"energies": [100, 95], "c_values": [0.1, 1.0, 10.0],
                 "gamma_values": [0.1, 1.0]},
    }
    cfg_path = write_toml(tmp_path / "config.toml", config)
    return {"config": cfg_path, "out": out, "root": tmp_path, "raw": config}


@pytest.fixture
def ret_workspace(tmp_path, rng):
    """Retrieval setup: each query tweet sits next to its true claim on the
    unit sphere."""
    n_claims, n_queries = 20, 5
    claim_ids = [f"c{i:02d}" for i in range(n_claims)]
    C = rng.normal(size=(n_claims, 6))
    C /= np.linalg.norm(C, axis=1, keepdims=True)
    write_jsonl(tmp_path / "claims.jsonl",
                [{"claim_id": cid, "text": f"claim {cid}", "title": f"t {cid}"}
                 for cid in claim_ids])
    for name in ("claim_text", "claim_title"):
        write_embeddings(EmbeddingTensor(unit_ids=claim_ids, kind="sentence",
                                         layers=1, dim=6,
                                         values=C.astype(np.float32)),
                         tmp_path / f"{name}.ckem")
    q_ids = [f"q{i}" for i in range(n_queries)]
    Q = C[:n_queries] + 0.02 * rng.normal(size=(n_queries, 6))
    Q /= np.linalg.norm(Q, axis=1, keepdims=True)
    write_embeddings(EmbeddingTensor(unit_ids=q_ids, kind="sentence", layers=1,
                                     dim=6, values=Q.astype(np.float32)),
                     tmp_path / "tweets.ckem")
    write_jsonl(tmp_path / "queries.jsonl",
                [tweet_row(q, text=f"query {q}") for q in q_ids])
    qrels = "".join(f"{q}\t{claim_ids[i]}\n" for i, q in enumerate(q_ids))
    (tmp_path / "qrels.tsv").write_text(qrels)
    out = tmp_path / "out"
    config = {
        "run_id": "ret1",
        "seed": 7,
        "paths": {
            "output_dir": str(out),
            "test_tweets": str(tmp_path / "queries.jsonl"),
            "train_tweets": str(tmp_path / "queries.jsonl"),
            "tweet_embeddings": str(tmp_path / "tweets.ckem"),
            "claim_text_embeddings": str(tmp_path / "claim_text.ckem"),
            "claim_title_embeddings": str(tmp_path / "claim_title.ckem"),
            "claims": str(tmp_path / "claims.jsonl"),
            "train_qrels": str(tmp_path / "qrels.tsv"),
            "qrels": str(tmp_path / "qrels.tsv"),
        },
        "retrieve": {"top_k": 10},
    }
    cfg_path = write_toml(tmp_path / "config.toml", config)
    return {"config": cfg_path, "out": out, "root": tmp_path}


class TestEncode:
    def test_writes_tensors_and_sidecar(self, clf_workspace):
        ws = clf_workspace
        assert cli.main(["encode", "--config", str(ws["config"])]) == 0
        for split in ("train", "dev", "test"):
            tensor = corpus.load_embeddings(ws["out"] / f"features_{split}.ckem")
            assert tensor.kind == "sentence"
        meta = json.loads((ws["out"] / "features_meta.json").read_text())
        names = [s["name"] for s in meta["segments"]]
        assert "pos" in names and "embedding" in names
        assert meta["total_dim"] == sum(s["dim"] for s in meta["segments"])

    def test_rerun_is_byte_identical(self, clf_workspace):
        ws = clf_workspace
        assert cli.main(["encode", "--config", str(ws["config"])]) == 0
        first = (ws["out"] / "features_train.ckem").read_bytes()
        assert cli.main(["encode", "--config", str(ws["config"])]) == 0
        assert (ws["out"] / "features_train.ckem").read_bytes() == first

    def test_missing_input_exits_2(self, clf_workspace, capsys):
        ws = clf_workspace
        bad = dict(ws["raw"])
        bad["paths"] = dict(bad["paths"], embeddings=str(ws["root"] / "nope.ckem"))
        cfg = write_toml(ws["root"] / "bad.toml", bad)
        assert cli.main(["encode", "--config", str(cfg)]) == 2
        assert "error" in capsys.readouterr().err

    def test_missing_config_exits_2(self, tmp_path):
        assert cli.main(["encode", "--config", str(tmp_path / "none.toml")]) == 2

    def test_snapshot_written(self, clf_workspace):
        ws = clf_workspace
        cli.main(["encode", "--config", str(ws["config"])])
        snap = json.loads((ws["out"] / "config_encode.json").read_text())
        assert snap["command"] == "encode"
        assert snap["run_id"] == "trial"


class TestClassificationPipeline:
    def _run_through_train(self, ws):
        assert cli.main(["encode", "--config", str(ws["config"])]) == 0
        assert cli.main(["gridsearch", "--config", str(ws["config"]),
                         "--workers", "2"]) == 0
        assert cli.main(["train", "--config", str(ws["config"])]) == 0

    def test_gridsearch_records_all_cells(self, clf_workspace):
        ws = clf_workspace
        cli.main(["encode", "--config", str(ws["config"])])
        assert cli.main(["gridsearch", "--config", str(ws["config"])]) == 0
        grid = json.loads((ws["out"] / "grid.json").read_text())
        assert len(grid["cells"]) == 2 * 3 * 2
        assert 0 <= grid["best"] < len(grid["cells"])

    def test_predict_ranks_descending_per_topic(self, clf_workspace):
        ws = clf_workspace
        self._run_through_train(ws)
        assert cli.main(["predict", "--config", str(ws["config"])]) == 0
        lines = (ws["out"] / "predictions_trial.tsv").read_text().splitlines()
        assert len(lines) == 8
        scores, ranks = [], []
        for line in lines:
            topic, tid, score, rank, run_id = line.split("\t")
            assert topic == "covid" and run_id == "trial"
            scores.append(float(score))
            ranks.append(int(rank))
        assert scores == sorted(scores, reverse=True)
        assert ranks == list(range(1, 9))

    def test_predict_separates_planted_classes(self, clf_workspace):
        ws = clf_workspace
        self._run_through_train(ws)
        cli.main(["predict", "--config", str(ws["config"])])
        run = read_run_file(ws["out"] / "predictions_trial.tsv")
        top_half = run.ranking("covid")[:4]
        # Positive tweets carry odd indices in the fixture.
        assert all(int(tid[-2:]) % 2 == 1 for tid in top_half)

    def test_ensemble_of_one_matches_single_model(self, clf_workspace):
        ws = clf_workspace
        self._run_through_train(ws)
        model = str(ws["out"] / "model.bin")
        cli.main(["predict", "--config", str(ws["config"])])
        single = (ws["out"] / "predictions_trial.tsv").read_text()
        assert cli.main(["predict", "--config", str(ws["config"]),
                         "--run-id", "trial",
                         "--model", model, "--model", model]) == 0
        assert (ws["out"] / "predictions_trial.tsv").read_text() == single

    def test_train_without_grid_uses_config_params(self, clf_workspace):
        ws = clf_workspace
        cli.main(["encode", "--config", str(ws["config"])])
        cfg = dict(ws["raw"], svm={"C": 1.0, "gamma": 0.5})
        path = write_toml(ws["root"] / "fixed.toml", cfg)
        assert cli.main(["train", "--config", str(path)]) == 0
        assert (ws["out"] / "model.bin").exists()

    def test_train_without_grid_or_params_exits_2(self, clf_workspace):
        ws = clf_workspace
        cli.main(["encode", "--config", str(ws["config"])])
        assert cli.main(["train", "--config", str(ws["config"])]) == 2


class TestRetrieve:
    def test_exact_and_kdtree_agree_on_unit_sphere(self, ret_workspace):
        ws = ret_workspace
        assert cli.main(["retrieve", "--config", str(ws["config"]),
                         "--exact-cosine"]) == 0
        exact = read_run_file(ws["out"] / "retrieval_ret1.tsv")
        assert cli.main(["retrieve", "--config", str(ws["config"])]) == 0
        kd = read_run_file(ws["out"] / "retrieval_ret1.tsv")
        assert set(exact.queries) == set(kd.queries) == {f"q{i}" for i in range(5)}
        for q in exact.queries:
            assert exact.ranking(q) == kd.ranking(q)

    def test_top_k_clamped_to_store(self, ret_workspace):
        ws = ret_workspace
        assert cli.main(["retrieve", "--config", str(ws["config"])]) == 0
        run = read_run_file(ws["out"] / "retrieval_ret1.tsv")
        assert all(len(run.ranking(q)) == 10 for q in run.queries)

    def test_true_claim_ranked_first(self, ret_workspace):
        ws = ret_workspace
        cli.main(["retrieve", "--config", str(ws["config"]), "--exact-cosine"])
        run = read_run_file(ws["out"] / "retrieval_ret1.tsv")
        for i in range(5):
            assert run.ranking(f"q{i}")[0] == f"c{i:02d}"

    def test_fine_tune_writes_projection(self, ret_workspace, capsys):
        ws = ret_workspace
        assert cli.main(["retrieve", "--config", str(ws["config"]),
                         "--fine-tune"]) == 0
        assert (ws["out"] / "projection.ckem").exists()
        assert "triplets" in capsys.readouterr().out


class TestEvaluate:
    def test_perfect_run_reports_one(self, ret_workspace, capsys):
        ws = ret_workspace
        cli.main(["retrieve", "--config", str(ws["config"]), "--exact-cosine"])
        capsys.readouterr()
        assert cli.main(["evaluate", "--config", str(ws["config"]),
                         "--metrics", "map@5,map"]) == 0
        out = capsys.readouterr().out
        assert "map@5: 1.0000" in out and "map: 1.0000" in out
        report = json.loads((ws["out"] / "report_ret1.json").read_text())
        assert report["aggregate"]["map@5"] == 1.0

    def test_missing_run_exits_2(self, ret_workspace):
        ws = ret_workspace
        assert cli.main(["evaluate", "--config", str(ws["config"])]) == 2

    def test_unknown_metric_is_internal_error(self, ret_workspace):
        ws = ret_workspace
        cli.main(["retrieve", "--config", str(ws["config"])])
        assert cli.main(["evaluate", "--config", str(ws["config"]),
                         "--metrics", "ndcg"]) == 1
