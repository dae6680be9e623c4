"""Manifest-driven experiment grid over the synthetic benchmark:
ablation switches x decode modes x support-noise ratios x seeds."""
from __future__ import annotations

import json
import traceback
from typing import IO, Optional

import numpy as np

from .corpus import SyntheticCorpusConfig, SyntheticEmbedder, make_synthetic_corpus
from .decoder import DecoderConfig
from .episodes import EpisodeSpec, perturb_support, sample_episodes
from .evaluation import evaluate
from .nn import Parameters
from .spans import PipelineConfig
from .training import TrainConfig, train

DEFAULT_MANIFEST = {
    "seeds": [1, 2, 3],
    "corpus": {"train_classes": 12, "test_classes": 5,
               "train_sentences": 300, "test_sentences": 120,
               "d_w": 32, "anchor_overlap": 0.35, "noise_scale": 0.1,
               "role_scale": 0.25, "min_entity_len": 2, "max_entity_len": 3,
               "corpus_seed": 7},
    "episode": {"n_way": 5, "k_shot": 1, "shot_mode": "k-2k", "query_count": 2},
    "train": {"episodes": 500, "lr": 2e-3},
    "eval_episodes": 30,
    "pipeline": {"d": 32, "max_span_len": 5, "dropout": 0.1},
    "style": "fewnerd",
    "cells": [{"name": "full"}],
}


def build_synthetic_setting(corpus_cfg: dict, seed: int):
    """Disjoint train/test class corpora plus one shared embedder.

    Test classes get fresh names (fresh anchors), so evaluation measures
    adaptation to unseen classes, not memorization.
    """
    cc = dict(DEFAULT_MANIFEST["corpus"])
    cc.update(corpus_cfg)
    base_seed = int(cc["corpus_seed"]) * 100003 + seed
    train_classes = tuple(f"T{i}" for i in range(cc["train_classes"]))
    test_classes = tuple(f"E{i}" for i in range(cc["test_classes"]))
    common = dict(min_sentence_len=8, max_sentence_len=12,
                  min_entity_len=cc["min_entity_len"],
                  max_entity_len=cc["max_entity_len"])
    train_corpus = make_synthetic_corpus(SyntheticCorpusConfig(
        classes=train_classes, sentences=cc["train_sentences"],
        seed=base_seed, **common))
    test_corpus = make_synthetic_corpus(SyntheticCorpusConfig(
        classes=test_classes, sentences=cc["test_sentences"],
        seed=base_seed + 1, **common))
    store = SyntheticEmbedder(dim=cc["d_w"], seed=base_seed + 2,
                              anchor_overlap=cc["anchor_overlap"],
                              noise_scale=cc["noise_scale"],
                              role_scale=cc["role_scale"])
    return train_corpus, test_corpus, store


def run_cell_seed(manifest: dict, cell: dict, seed: int) -> dict:
    """Train and evaluate one (cell, seed) combination."""
    corpus_cfg = {**manifest.get("corpus", {}), **cell.get("corpus", {})}
    train_corpus, test_corpus, store = build_synthetic_setting(corpus_cfg, seed)

    ep_cfg = {**DEFAULT_MANIFEST["episode"], **manifest.get("episode", {}),
              **cell.get("episode", {})}
    pipe_cfg = {**DEFAULT_MANIFEST["pipeline"], **manifest.get("pipeline", {}),
                **cell.get("pipeline", {})}
    train_cfg = {**DEFAULT_MANIFEST["train"], **manifest.get("train", {}),
                 **cell.get("train", {})}
    d_w = corpus_cfg.get("d_w", DEFAULT_MANIFEST["corpus"]["d_w"])
    cfg = PipelineConfig(d_w=d_w, **pipe_cfg)

    n_train = int(train_cfg.pop("episodes"))
    spec = EpisodeSpec(ep_cfg["n_way"], ep_cfg["k_shot"], ep_cfg["shot_mode"],
                       ep_cfg["query_count"], seed=seed * 7919 + 11)
    train_eps = sample_episodes(train_corpus, spec, n_train)
    eval_spec = EpisodeSpec(ep_cfg["n_way"], ep_cfg["k_shot"], ep_cfg["shot_mode"],
                            ep_cfg["query_count"], seed=seed * 7919 + 13)
    n_eval = int(cell.get("eval_episodes", manifest.get("eval_episodes",
                 DEFAULT_MANIFEST["eval_episodes"])))
    eval_eps = sample_episodes(test_corpus, eval_spec, n_eval)

    r_noise = float(cell.get("r_noise", manifest.get("r_noise", 0.0)))
    if r_noise > 0.0:
        eval_eps = [perturb_support(ep, r_noise, seed=seed * 31 + i)
                    for i, ep in enumerate(eval_eps)]

    params = Parameters.init(cfg.d_w, cfg.d, cfg.d_ff,
                             np.random.default_rng(seed * 7919 + 17))
    tcfg = TrainConfig(lr=float(train_cfg.get("lr", 5e-4)),
                       grad_clip=train_cfg.get("grad_clip"), seed=seed)
    result = train(train_eps, store, params, cfg, tcfg)

    dec_cfg = {**manifest.get("decoder", {}), **cell.get("decoder", {})}
    decoder = DecoderConfig(**dec_cfg) if dec_cfg else DecoderConfig()
    style = cell.get("style", manifest.get("style", "fewnerd"))
    report = evaluate(eval_eps, store, result.params, cfg, decoder, style=style)
    return {"seed": seed, "f1": report.f1, "precision": report.precision,
            "recall": report.recall, "final_loss": result.losses[-1],
            "errors": {"fp_span": report.fp_span, "fp_type": report.fp_type,
                       "fn": report.fn}}


def run_experiment(manifest: dict, json_out: Optional[IO[str]] = None,
                   text_out: Optional[IO[str]] = None) -> dict:
    """Run every (cell x seed), aggregating mean and population std of F1.

    A failing cell is recorded with its error and the run continues.
    """
    seeds = manifest.get("seeds", DEFAULT_MANIFEST["seeds"])
    cells = manifest.get("cells", DEFAULT_MANIFEST["cells"])
    results: dict = {"cells": {}}
    for cell in cells:
        name = cell.get("name", "cell")
        runs = []
        errors = []
        for seed in seeds:
            try:
                runs.append(run_cell_seed(manifest, cell, int(seed)))
            except Exception as exc:  # record and continue with other cells
                errors.append({"seed": int(seed), "error": f"{type(exc).__name__}: {exc}",
                               "trace": traceback.format_exc(limit=3)})
        entry: dict = {"runs": runs}
        if errors:
            entry["errors"] = errors
        if runs:
            f1s = [r["f1"] for r in runs]
            entry["f1_mean"] = float(np.mean(f1s))
            entry["f1_std"] = float(np.std(f1s))  # population std
        results["cells"][name] = entry
    if json_out is not None:
        json.dump(results, json_out, indent=2, sort_keys=True)
        json_out.write("\n")
    if text_out is not None:
        text_out.write(format_table(results))
    return results


def format_table(results: dict) -> str:
    rows = [f"{'cell':<20} {'F1 mean':>8} {'F1 std':>8} {'runs':>5}"]
    for name, entry in results["cells"].items():
        if "f1_mean" in entry:
            rows.append(f"{name:<20} {entry['f1_mean']:>8.4f} "
                        f"{entry['f1_std']:>8.4f} {len(entry['runs']):>5}")
        else:
            rows.append(f"{name:<20} {'FAILED':>8} {'-':>8} {0:>5}")
    return "\n".join(rows) + "\n"
