import json
from pathlib import Path

import numpy as np
import pytest

from ckexport import ExportError, ExportJob
from ckexport.annotate import annotate_tweet, export_annotations, tokenize
from ckexport.cli import main_annotations, main_embeddings
from ckexport.embed import export_sentences, export_token_layers

# The consumer package is used here only to verify the file-format contract;
# the exporter sources never import it.
from claimcheck import corpus

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path


class TestJobValidation:
    def test_invalid_language(self, tmp_path):
        with pytest.raises(ExportError):
            ExportJob(input_path=tmp_path, language="fr")

    def test_layer_out_of_range(self, tmp_path):
        with pytest.raises(ExportError):
            ExportJob(input_path=tmp_path, layers=(13,))
        with pytest.raises(ExportError):
            ExportJob(input_path=tmp_path, layers=())

    def test_unknown_stopword_list(self, tmp_path):
        with pytest.raises(ExportError):
            ExportJob(input_path=tmp_path, stopword_list="en-v99")

    def test_default_stopword_list_follows_language(self, tmp_path):
        assert ExportJob(input_path=tmp_path).stopword_list == "en-v1"
        assert ExportJob(input_path=tmp_path,
                         language="ar").stopword_list == "ar-v1"


class TestAnnotate:
    def test_three_tweets_three_valid_lines(self, tmp_path):
        src = write_jsonl(tmp_path / "in.jsonl",
                          [{"id": f"t{i}", "text": f"Tweet number {i} here"}
                           for i in range(3)])
        rows, skipped = export_annotations(ExportJob(input_path=src))
        assert len(rows) == 3 and skipped == 0
        for row in rows:
            for tok in row["tokens"]:
                assert set(tok) == {"surface", "lemma", "upos", "head",
                                    "dep_rel", "ne_type", "is_stopword"}

    def test_exactly_one_root(self, tmp_path):
        job = ExportJob(input_path=tmp_path)
        row = annotate_tweet("t", "The WHO declared an emergency in 2020", job)
        heads = [t["head"] for t in row["tokens"]]
        assert heads.count(-1) == 1

    def test_stopwords_flagged(self, tmp_path):
        job = ExportJob(input_path=tmp_path)
        row = annotate_tweet("t", "the cat sat on a mat", job)
        flags = {t["surface"]: t["is_stopword"] for t in row["tokens"]}
        assert flags["the"] and flags["on"] and flags["a"]
        assert not flags["cat"] and not flags["mat"]

    def test_skip_rate_above_one_percent_aborts(self, tmp_path):
        rows = [{"id": f"t{i}", "text": "ok text"} for i in range(9)]
        rows.append({"id": "bad", "text": "   "})
        src = write_jsonl(tmp_path / "in.jsonl", rows)
        with pytest.raises(ExportError):
            export_annotations(ExportJob(input_path=src))

    def test_rare_failures_skipped_not_fatal(self, tmp_path):
        rows = [{"id": f"t{i}", "text": "ok text"} for i in range(199)]
        rows.append({"id": "bad", "text": ""})
        src = write_jsonl(tmp_path / "in.jsonl", rows)
        out, skipped = export_annotations(ExportJob(input_path=src))
        assert len(out) == 199 and skipped == 1


class TestEmbed:
    def test_token_layers_shape(self, tmp_path):
        src = write_jsonl(tmp_path / "in.jsonl",
                          [{"id": "a", "text": "three word tweet"}])
        job = ExportJob(input_path=src, layers=(9, 10, 11, 12))
        ids, arrays, counts = export_token_layers(job)
        assert ids == ["a"] and counts == [4]  # 3 tokens + CLS slot
        assert arrays[0].shape == (4, 4, job.embedding_dim)

    def test_deterministic_re_export(self, tmp_path):
        src = write_jsonl(tmp_path / "in.jsonl",
                          [{"id": "a", "text": "same tweet text"}])
        job = ExportJob(input_path=src)
        _, a1, _ = export_token_layers(job)
        _, a2, _ = export_token_layers(job)
        np.testing.assert_array_equal(a1[0], a2[0])

    def test_shared_token_shares_state(self, tmp_path):
        src = write_jsonl(tmp_path / "in.jsonl",
                          [{"id": "a", "text": "virus spreads"},
                           {"id": "b", "text": "virus mutates"}])
        _, arrays, _ = export_token_layers(ExportJob(input_path=src))
        np.testing.assert_array_equal(arrays[0][:, 1], arrays[1][:, 1])

    def test_sentence_units_are_normalized(self, tmp_path):
        src = write_jsonl(tmp_path / "in.jsonl",
                          [{"claim_id": "c1", "text": "claim one"},
                           {"claim_id": "c2", "text": "claim two"}])
        ids, matrix = export_sentences(ExportJob(input_path=src), "text")
        assert ids == ["c1", "c2"]
        np.testing.assert_allclose(np.linalg.norm(matrix, axis=1), 1.0,
                                   atol=1e-6)

    def test_empty_field_units_omitted(self, tmp_path):
        src = write_jsonl(tmp_path / "in.jsonl",
                          [{"claim_id": "c1", "text": "x", "title": "a title"},
                           {"claim_id": "c2", "text": "y", "title": ""}])
        ids, _ = export_sentences(ExportJob(input_path=src), "title")
        assert ids == ["c1"]


class TestFixtureRoundTrip:
    def test_annotations_pass_consumer_loader_without_warnings(self):
        tweets = corpus.load_tweets(FIXTURES / "tweets10.jsonl", "en")
        annotated, warnings = corpus.load_annotations(
            FIXTURES / "annotations10.jsonl",
            tweet_ids={t.id for t in tweets})
        assert len(annotated) == 10
        assert warnings == 0
        assert not any(a.degenerate for a in annotated)

    def test_token_tensor_passes_consumer_loader(self):
        tensor = corpus.load_embeddings(FIXTURES / "tokens10.ckem")
        assert tensor.kind == "token_layers"
        assert tensor.layers == 4
        assert len(tensor.unit_ids) == 10
        assert "t001" in tensor

    def test_claim_tensors_pass_consumer_loader(self):
        text = corpus.load_embeddings(FIXTURES / "claims5_text.ckem")
        title = corpus.load_embeddings(FIXTURES / "claims5_title.ckem")
        assert text.kind == title.kind == "sentence"
        assert len(text.unit_ids) == 5
        # vc03 has an empty title and is omitted from the title tensor.
        assert title.unit_ids == ["vc01", "vc02", "vc04", "vc05"]

    def test_re_export_payload_identical(self, tmp_path):
        assert main_annotations(["--input", str(FIXTURES / "tweets10.jsonl"),
                                 "--out", str(tmp_path / "ann.jsonl")]) == 0
        assert (tmp_path / "ann.jsonl").read_bytes() == \
            (FIXTURES / "annotations10.jsonl").read_bytes()
        assert main_embeddings(["--input", str(FIXTURES / "tweets10.jsonl"),
                                "--unit", "tokens",
                                "--out", str(tmp_path / "tok.ckem")]) == 0
        fresh = corpus.load_embeddings(tmp_path / "tok.ckem")
        pinned = corpus.load_embeddings(FIXTURES / "tokens10.ckem")
        assert fresh.unit_ids == pinned.unit_ids
        for a, b in zip(fresh.values, pinned.values):
            np.testing.assert_allclose(a, b, atol=1e-6)

    def test_metadata_names_backend_and_layers(self):
        meta = json.loads(
            (FIXTURES / "tokens10.ckem.meta.json").read_text())
        assert meta["embedding_backend"] == "hashrand-v1"
        assert meta["layers"] == [9, 10, 11, 12]
        assert meta["cls_position"] == 0
        ann_meta = json.loads(
            (FIXTURES / "annotations10.jsonl.meta.json").read_text())
        assert ann_meta["stopword_list"] == "en-v1"


class TestCli:
    def test_invalid_language_exits_2(self, tmp_path, capsys):
        src = write_jsonl(tmp_path / "in.jsonl", [{"id": "a", "text": "x"}])
        code = main_annotations(["--input", str(src), "--language", "xx",
                                 "--out", str(tmp_path / "o.jsonl")])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_missing_input_exits_2(self, tmp_path):
        assert main_embeddings(["--input", str(tmp_path / "none.jsonl"),
                                "--out", str(tmp_path / "o.ckem")]) == 2

    def test_no_partial_file_on_failure(self, tmp_path):
        src = write_jsonl(tmp_path / "in.jsonl",
                          [{"id": "a", "text": ""}])
        out = tmp_path / "o.jsonl"
        assert main_annotations(["--input", str(src),
                                 "--out", str(out)]) == 2
        assert not out.exists()
        assert not list(tmp_path.glob("o.jsonl.*"))
