"""Command-line workflows end to end (in-process invocation)."""
import json

import numpy as np
import pytest

from spanmatch.cli import main
from spanmatch.corpus import SyntheticCorpusConfig, make_synthetic_corpus, write_bio
from spanmatch.episodes import read_episodes

CONFIG = {
    "pipeline": {"d_w": 32, "d": 24, "max_span_len": 4, "dropout": 0.1},
    "train": {"lr": 2e-3},
    "synthetic": {"dim": 32, "seed": 7, "role_scale": 0.25},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A BIO corpus, sampled episodes, a config file, and a trained model."""
    root = tmp_path_factory.mktemp("cliwork")
    corpus = make_synthetic_corpus(SyntheticCorpusConfig(
        classes=("PER", "ORG", "LOC", "EVT"), sentences=90, seed=5))
    with open(root / "corpus.bio", "w", encoding="utf-8") as fh:
        write_bio(corpus, fh)
    (root / "config.json").write_text(json.dumps(CONFIG), encoding="utf-8")

    assert main(["sample", "--data", str(root / "corpus.bio"), "--n", "3", "--k", "1",
                 "--shot-mode", "k2k", "--episodes", "150", "--query-count", "2",
                 "--seed", "11", "--out", str(root / "train.jsonl")]) == 0
    assert main(["sample", "--data", str(root / "corpus.bio"), "--n", "3", "--k", "1",
                 "--shot-mode", "k2k", "--episodes", "8", "--query-count", "2",
                 "--seed", "99", "--out", str(root / "eval.jsonl")]) == 0
    assert main(["train", "--episodes", str(root / "train.jsonl"), "--synthetic",
                 "--config", str(root / "config.json"), "--seed", "3",
                 "--out-model", str(root / "model.bin"),
                 "--loss-curve", str(root / "losses.json")]) == 0
    return root


class TestSample:
    def test_same_seed_byte_identical(self, workdir, tmp_path):
        out1 = tmp_path / "a.jsonl"
        out2 = tmp_path / "b.jsonl"
        args = ["sample", "--data", str(workdir / "corpus.bio"), "--n", "3", "--k", "1",
                "--episodes", "5", "--seed", "4"]
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_k2k_counts_within_bounds(self, workdir):
        with open(workdir / "train.jsonl", encoding="utf-8") as fh:
            episodes = read_episodes(fh)
        assert len(episodes) == 150
        for ep in episodes:
            counts = {c: 0 for c in ep.classes}
            for sent in ep.support:
                for _, _, label in sent.gold_spans:
                    counts[label] += 1
            assert all(1 <= counts[c] <= 2 for c in ep.classes)

    def test_zero_episodes_writes_empty_file(self, workdir, tmp_path):
        out = tmp_path / "none.jsonl"
        assert main(["sample", "--data", str(workdir / "corpus.bio"), "--n", "2",
                     "--k", "1", "--episodes", "0", "--out", str(out)]) == 0
        assert out.read_text() == ""

    def test_infeasible_is_user_error(self, workdir, tmp_path, capsys):
        rc = main(["sample", "--data", str(workdir / "corpus.bio"), "--n", "9",
                   "--k", "1", "--episodes", "1", "--out", str(tmp_path / "x.jsonl")])
        assert rc == 1
        assert "error" in capsys.readouterr().err

    def test_bad_flag_value_is_user_error(self, workdir, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["sample", "--data", str(workdir / "corpus.bio"), "--n", "2",
                  "--k", "1", "--shot-mode", "k3k", "--episodes", "1",
                  "--out", str(tmp_path / "x.jsonl")])
        assert exc.value.code == 1

    def test_env_seed_fallback(self, workdir, tmp_path, monkeypatch):
        """SPANMATCH_SEED stands in when --seed is omitted."""
        flagged = tmp_path / "flagged.jsonl"
        env = tmp_path / "env.jsonl"
        base = ["sample", "--data", str(workdir / "corpus.bio"), "--n", "3",
                "--k", "1", "--episodes", "4"]
        assert main(base + ["--seed", "21", "--out", str(flagged)]) == 0
        monkeypatch.setenv("SPANMATCH_SEED", "21")
        assert main(base + ["--out", str(env)]) == 0
        assert flagged.read_bytes() == env.read_bytes()


class TestTrain:
    def test_model_and_loss_curve_written(self, workdir):
        assert (workdir / "model.bin").stat().st_size > 0
        losses = json.loads((workdir / "losses.json").read_text())
        assert len(losses) == 150
        assert all(np.isfinite(losses))

    def test_same_seed_byte_identical_outputs(self, workdir, tmp_path):
        outs = []
        for name in ("m1", "m2"):
            model = tmp_path / f"{name}.bin"
            curve = tmp_path / f"{name}.json"
            assert main(["train", "--episodes", str(workdir / "train.jsonl"),
                         "--synthetic", "--config", str(workdir / "config.json"),
                         "--seed", "3", "--out-model", str(model),
                         "--loss-curve", str(curve)]) == 0
            outs.append((model.read_bytes(), curve.read_bytes()))
        assert outs[0] == outs[1]
        assert outs[0][0] == (workdir / "model.bin").read_bytes()

    def test_missing_episode_file_is_user_error(self, workdir, tmp_path, capsys):
        rc = main(["train", "--episodes", str(tmp_path / "nope.jsonl"), "--synthetic",
                   "--config", str(workdir / "config.json"),
                   "--out-model", str(tmp_path / "m.bin")])
        assert rc == 1


class TestEval:
    def test_report_written_and_valid(self, workdir, tmp_path):
        report = tmp_path / "report.json"
        assert main(["eval", "--model", str(workdir / "model.bin"),
                     "--episodes", str(workdir / "eval.jsonl"), "--synthetic",
                     "--config", str(workdir / "config.json"),
                     "--threads", "1", "--report", str(report)]) == 0
        data = json.loads(report.read_text())
        assert set(data) == {"style", "precision", "recall", "f1", "episode_f1", "errors"}
        assert data["errors"]["fp_span"] + data["errors"]["fp_type"] == data["errors"]["fp"] \
            if "fp" in data["errors"] else True
        assert 0.0 <= data["f1"] <= 1.0
        assert len(data["episode_f1"]) == 8

    def test_none_equals_bsnms_on_conflict_free_predictions(self, workdir, tmp_path):
        """The trained model is near-perfect on its own training episodes,
        so no conflicts remain and post-processing is a no-op."""
        reports = {}
        for post in ("none", "bsnms"):
            path = tmp_path / f"{post}.json"
            assert main(["eval", "--model", str(workdir / "model.bin"),
                         "--episodes", str(workdir / "train.jsonl"), "--synthetic",
                         "--config", str(workdir / "config.json"), "--post", post,
                         "--threads", "1", "--report", str(path)]) == 0
            reports[post] = json.loads(path.read_text())
        assert reports["none"]["f1"] == reports["bsnms"]["f1"]

    def test_nested_preset_flags_accepted(self, workdir, tmp_path):
        assert main(["eval", "--model", str(workdir / "model.bin"),
                     "--episodes", str(workdir / "eval.jsonl"), "--synthetic",
                     "--config", str(workdir / "config.json"), "--post", "bsnms",
                     "--k", "0.1", "--delta", "0.1", "--u", "0.4",
                     "--threads", "1", "--report", str(tmp_path / "r.json")]) == 0

    def test_snips_style_report(self, workdir, tmp_path):
        report = tmp_path / "snips.json"
        assert main(["eval", "--model", str(workdir / "model.bin"),
                     "--episodes", str(workdir / "eval.jsonl"), "--synthetic",
                     "--config", str(workdir / "config.json"), "--style", "snips",
                     "--snips-batch", "2", "--threads", "1",
                     "--report", str(report)]) == 0
        assert json.loads(report.read_text())["style"] == "snips"

    def test_missing_embeddings_names_the_sentence(self, workdir, tmp_path, capsys):
        from spanmatch.corpus import SyntheticEmbedder, write_embeddings
        with open(workdir / "eval.jsonl", encoding="utf-8") as fh:
            episodes = read_episodes(fh)
        store = SyntheticEmbedder(dim=32, seed=7)
        sentences = [s for ep in episodes for s in ep.support + ep.queries]
        missing = sentences[0]
        emb_path = tmp_path / "partial.jsonl"
        with open(emb_path, "w", encoding="utf-8") as fh:
            write_embeddings(((s, store.matrix_for(s)) for s in sentences[1:]), fh)
        rc = main(["eval", "--model", str(workdir / "model.bin"),
                   "--episodes", str(workdir / "eval.jsonl"),
                   "--embeddings", str(emb_path), "--threads", "1"])
        assert rc == 1
        assert missing.id in capsys.readouterr().err

    def test_dim_mismatch_is_user_error(self, workdir, tmp_path, capsys):
        from spanmatch.corpus import Sentence, SyntheticEmbedder, write_embeddings
        store = SyntheticEmbedder(dim=16, seed=7)
        sent = Sentence("zz", ("a",))
        emb_path = tmp_path / "dim16.jsonl"
        with open(emb_path, "w", encoding="utf-8") as fh:
            write_embeddings([(sent, store.matrix_for(sent))], fh)
        rc = main(["eval", "--model", str(workdir / "model.bin"),
                   "--episodes", str(workdir / "eval.jsonl"),
                   "--embeddings", str(emb_path), "--threads", "1"])
        assert rc == 1
        assert "dim" in capsys.readouterr().err


class TestDecode:
    def test_decode_file_roundtrip(self, tmp_path):
        inp = tmp_path / "scored.jsonl"
        out = tmp_path / "accepted.jsonl"
        inp.write_text(json.dumps(
            {"spans": [{"l": 0, "r": 2, "label": "A", "score": 0.9},
                       {"l": 1, "r": 3, "label": "B", "score": 0.8},
                       {"l": 5, "r": 6, "label": "A", "score": 0.7}]}) + "\n")
        assert main(["decode", "--input", str(inp), "--output", str(out)]) == 0
        rec = json.loads(out.read_text())
        assert {(s["l"], s["r"]) for s in rec["accepted"]} == {(0, 2), (5, 6)}


class TestCheck:
    def test_all_checks_pass(self, capsys):
        assert main(["check", "--gradients", "--decoder-oracle", "50"]) == 0
        out = capsys.readouterr().out
        assert "gradients" in out and "decoder-oracle" in out

    def test_nothing_selected_is_user_error(self, capsys):
        assert main(["check"]) == 1


class TestExperiment:
    def test_single_cell_manifest(self, tmp_path, capsys):
        manifest = {
            "seeds": [1],
            "corpus": {"train_classes": 4, "test_classes": 3,
                       "train_sentences": 60, "test_sentences": 40},
            "episode": {"n_way": 3, "k_shot": 1, "shot_mode": "k-2k",
                        "query_count": 1},
            "train": {"episodes": 10, "lr": 1e-3},
            "eval_episodes": 3,
            "cells": [{"name": "tiny"}],
        }
        mpath = tmp_path / "manifest.json"
        mpath.write_text(json.dumps(manifest))
        report = tmp_path / "results.json"
        assert main(["experiment", "--manifest", str(mpath),
                     "--json-report", str(report)]) == 0
        data = json.loads(report.read_text())
        assert "tiny" in data["cells"]
        assert len(data["cells"]["tiny"]["runs"]) == 1
        assert "tiny" in capsys.readouterr().out
