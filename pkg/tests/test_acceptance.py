"""Acceptance suite: one test per criterion, each printing a PASS/FAIL
line and enforcing its stated tolerance. Run with ``pytest -s`` to see
the lines as they complete."""
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from spanmatch.checks import (decoder_oracle_check, episode_gradient_check,
                              random_decode_instance)
from spanmatch.corpus import SyntheticCorpusConfig, make_synthetic_corpus, write_bio
from spanmatch.decoder import DecoderConfig, bsnms, iou
from spanmatch.evaluation import classify_errors, prf
from spanmatch.experiments import DEFAULT_MANIFEST, run_cell_seed
from spanmatch.prototypes import partition_o_spans
from spanmatch.spans import enumerate_spans

from test_evaluation import PRF_FIXTURES


def _report(num: int, name: str, ok: bool, details: str) -> None:
    print(f"[criterion-{num}] {name}: {'PASS' if ok else 'FAIL'} ({details})")
    assert ok, f"criterion {num} ({name}): {details}"


def test_criterion_1_gradient_fidelity():
    start = time.perf_counter()
    err_eval, n_eval = episode_gradient_check(d_w=8, d=6, n_way=2, seed=0, h=1e-5)
    err_drop, n_drop = episode_gradient_check(d_w=8, d=6, n_way=2, seed=1, h=1e-5,
                                              dropout=0.1)
    elapsed = time.perf_counter() - start
    worst = max(err_eval, err_drop)
    ok = worst < 1e-4 and elapsed < 60.0
    _report(1, "gradient fidelity", ok,
            f"max rel err {worst:.2e} over {n_eval + n_drop} params, {elapsed:.1f}s")


def test_criterion_2_decoder_oracle_equivalence():
    start = time.perf_counter()
    mismatches, total = decoder_oracle_check(instances=500, max_spans=7, seed=0)
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and total == 500 and elapsed < 30.0
    _report(2, "decoder-oracle equivalence", ok,
            f"{total - mismatches}/{total} exact matches, beam 128, {elapsed:.1f}s")


def test_criterion_3_non_nested_guarantee():
    rng = np.random.default_rng(42)
    cfg = DecoderConfig()  # delta=0.1, k=1e-5, u=1e-5
    overlapping = 0
    for _ in range(1000):
        spans, _ = random_decode_instance(rng)
        accepted = bsnms(spans, cfg)
        for i in range(len(accepted)):
            for j in range(i + 1, len(accepted)):
                if iou(accepted[i].span, accepted[j].span) > 0.0:
                    overlapping += 1
    _report(3, "non-nested guarantee", overlapping == 0,
            f"{overlapping} overlapping accepted pairs in 1000 decodes")


def test_criterion_4_o_partition_exhaustiveness():
    # anchor cases: disjoint phrase -> O1; entity sub-span -> O2
    anchors_ok = (
        partition_o_spans([(0, 1, "PER")], [(2, 3)])[(2, 3)] == "O1"
        and partition_o_spans([(0, 1, "PER")], [(0, 0)])[(0, 0)] == "O2")
    rng = np.random.default_rng(7)
    bad = 0
    for _ in range(1000):
        n = int(rng.integers(2, 15))
        gold, pos = [], 0
        while pos < n:
            if rng.random() < 0.35:
                length = int(rng.integers(1, 4))
                if pos + length <= n:
                    gold.append((pos, pos + length - 1, "X"))
                    pos += length + 1
                    continue
            pos += 1
        spans = enumerate_spans(n, 5)
        sub = partition_o_spans(gold, spans)
        gold_bounds = {(l, r) for l, r, _ in gold}
        if set(sub) != set(spans) - gold_bounds:
            bad += 1
        if any(v not in ("O1", "O2", "O3") for v in sub.values()):
            bad += 1
    ok = anchors_ok and bad == 0
    _report(4, "O-partition exhaustiveness", ok,
            f"anchor cases {'ok' if anchors_ok else 'WRONG'}, "
            f"{bad} violations in 1000 sentences")


def test_criterion_5_synthetic_learnability():
    start = time.perf_counter()
    f1s = [run_cell_seed(DEFAULT_MANIFEST, {"name": "learn"}, seed)["f1"]
           for seed in (1, 2, 3)]
    elapsed = time.perf_counter() - start
    mean_f1 = float(np.mean(f1s))
    ok = mean_f1 >= 0.90 and elapsed < 600.0
    _report(5, "synthetic learnability", ok,
            f"5-way 1~2-shot, 500/2000 episodes, mean F1 {mean_f1:.4f} "
            f"over seeds (1,2,3) = {[round(f, 4) for f in f1s]}, {elapsed:.0f}s")


def test_criterion_6_single_episode_overfit():
    from spanmatch.episodes import EpisodeSpec, sample_episode
    from spanmatch.experiments import build_synthetic_setting
    from spanmatch.nn import Parameters
    from spanmatch.spans import PipelineConfig
    from spanmatch.training import TrainConfig, train

    corpus, _, store = build_synthetic_setting({}, 3)
    cfg = PipelineConfig(d_w=32, d=32, max_span_len=5, dropout=0.1)
    episode = sample_episode(corpus, EpisodeSpec(5, 1, "k-2k", 2, seed=21))
    params = Parameters.init(32, 32, cfg.d_ff, np.random.default_rng(5))
    losses = train([episode] * 300, store, params, cfg,
                   TrainConfig(lr=2e-3, seed=9)).losses
    best = min(losses)
    hit = next((i for i, l in enumerate(losses) if l < 0.05), None)
    _report(6, "single-episode overfit", best < 0.05,
            f"loss below 0.05 at step {hit}, best {best:.5f} within 300 steps")


def test_criterion_7_ablation_directions():
    manifest = {
        "corpus": {"anchor_overlap": 0.5},
        "train": {"episodes": 300, "lr": 2e-3},
        "eval_episodes": 40,
    }
    seeds = (1, 2, 3, 4, 5)
    start = time.perf_counter()
    means = {}
    for name, cell in [
        ("full", {"name": "full"}),
        ("rm-insa", {"name": "rm-insa", "pipeline": {"use_insa": False}}),
        ("rm-bsnms", {"name": "rm-bsnms", "decoder": {"mode": "none"}}),
    ]:
        means[name] = float(np.mean(
            [run_cell_seed(manifest, cell, s)["f1"] for s in seeds]))
    elapsed = time.perf_counter() - start
    ok = means["rm-bsnms"] < means["full"] and means["rm-insa"] < means["full"]
    _report(7, "ablation direction", ok,
            f"mean F1 over 5 seeds: full {means['full']:.4f}, "
            f"rm-bsnms {means['rm-bsnms']:.4f}, rm-insa {means['rm-insa']:.4f}, "
            f"{elapsed:.0f}s")


def test_criterion_8_metric_correctness():
    exact = 0
    for pred, gold, p_want, r_want, f1_want in PRF_FIXTURES:
        matched = set(pred) & set(gold)
        tp, fp, fn = len(matched), len(pred) - len(matched), len(gold) - len(matched)
        p, r, f1 = prf(tp, fp, fn)
        if (p, r, f1) == (p_want, r_want, f1_want):
            exact += 1
    rng = np.random.default_rng(3)
    partition_ok = True
    for _ in range(200):
        labels = ["A", "B", "C"]
        def rand(n):
            out = set()
            for _ in range(n):
                l = int(rng.integers(0, 8))
                out.add((l, l + int(rng.integers(0, 3)), labels[int(rng.integers(3))]))
            return sorted(out)
        pred, gold = rand(int(rng.integers(0, 7))), rand(int(rng.integers(0, 7)))
        fp_span, fp_type = classify_errors(pred, gold)
        n_fp = len([x for x in pred if x not in set(gold)])
        if len(fp_span) + len(fp_type) != n_fp:
            partition_ok = False
    ok = exact == len(PRF_FIXTURES) and partition_ok
    _report(8, "metric correctness", ok,
            f"{exact}/{len(PRF_FIXTURES)} fixtures exact, "
            f"FP partition {'holds' if partition_ok else 'BROKEN'} on 200 fuzz cases")


def test_criterion_9_determinism(tmp_path):
    corpus = make_synthetic_corpus(SyntheticCorpusConfig(
        classes=("PER", "ORG", "LOC"), sentences=60, seed=13))
    bio = tmp_path / "corpus.bio"
    with open(bio, "w", encoding="utf-8") as fh:
        write_bio(corpus, fh)
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "pipeline": {"d_w": 32, "d": 16, "max_span_len": 4, "dropout": 0.1},
        "train": {"lr": 2e-3},
        "synthetic": {"dim": 32, "seed": 7},
    }))

    def cli(*args):
        proc = subprocess.run([sys.executable, "-m", "spanmatch.cli", *args],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        return proc

    artifacts = {}
    for run in ("x", "y"):
        eps = tmp_path / f"{run}-episodes.jsonl"
        model = tmp_path / f"{run}-model.bin"
        curve = tmp_path / f"{run}-losses.json"
        report = tmp_path / f"{run}-report.json"
        cli("sample", "--data", str(bio), "--n", "2", "--k", "1",
            "--episodes", "25", "--query-count", "1", "--seed", "5",
            "--out", str(eps))
        cli("train", "--episodes", str(eps), "--synthetic",
            "--config", str(config), "--seed", "5",
            "--out-model", str(model), "--loss-curve", str(curve))
        cli("eval", "--model", str(model), "--episodes", str(eps),
            "--synthetic", "--config", str(config), "--threads", "1",
            "--report", str(report))
        artifacts[run] = (eps.read_bytes(), model.read_bytes(),
                          curve.read_bytes(), report.read_bytes())
    ok = artifacts["x"] == artifacts["y"]
    _report(9, "determinism", ok,
            "episode files, models, loss curves and reports byte-identical "
            "across two --threads 1 runs")
