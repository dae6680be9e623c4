"""Self-verification: finite-difference gradient checks and randomized
decoder-vs-oracle equivalence."""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import autodiff as ad
from .corpus import SyntheticCorpusConfig, SyntheticEmbedder, make_synthetic_corpus
from .decoder import DecoderConfig, ScoredSpan, bsnms, exhaustive_oracle
from .episodes import EpisodeSpec, sample_episode
from .matcher import forward_episode
from .nn import Parameters
from .spans import PipelineConfig

GRAD_FILTER = 1e-8  # entries with smaller analytic and numeric grads are skipped


def relative_grad_error(loss_fn: Callable[[np.ndarray], float],
                        grad_fn: Callable[[np.ndarray], np.ndarray],
                        x0: np.ndarray, h: float = 1e-5) -> tuple[float, int]:
    """Max relative error of analytic vs central-difference gradients.

    Returns (max relative error, number of compared entries). Entries where
    both gradients are below the filter magnitude are skipped.
    """
    analytic = grad_fn(x0)
    worst = 0.0
    compared = 0
    for i in range(x0.size):
        x_plus = x0.copy()
        x_plus[i] += h
        x_minus = x0.copy()
        x_minus[i] -= h
        numeric = (loss_fn(x_plus) - loss_fn(x_minus)) / (2 * h)
        a = analytic[i]
        if abs(a) <= GRAD_FILTER and abs(numeric) <= GRAD_FILTER:
            continue
        err = abs(a - numeric) / max(abs(a), abs(numeric))
        worst = max(worst, err)
        compared += 1
    return worst, compared


def toy_setting(d_w: int = 8, d: int = 6, n_way: int = 2, seed: int = 0,
                dropout: float = 0.0):
    """Small episode + params for end-to-end checks."""
    classes = tuple(f"T{i}" for i in range(n_way + 1))
    corpus = make_synthetic_corpus(SyntheticCorpusConfig(
        classes=classes, sentences=24, seed=seed,
        min_sentence_len=5, max_sentence_len=7,
        min_entity_len=1, max_entity_len=2, max_entities=1,
        entity_vocab=4, filler_vocab=10))
    store = SyntheticEmbedder(dim=d_w, seed=seed + 1)
    cfg = PipelineConfig(d_w=d_w, d=d, max_span_len=3, dropout=dropout)
    spec = EpisodeSpec(n_way=n_way, k_shot=1, shot_mode="k-2k",
                       query_count=1, seed=seed + 2)
    episode = sample_episode(corpus, spec)
    params = Parameters.init(d_w, d, cfg.d_ff, np.random.default_rng(seed + 3))
    return episode, store, params, cfg


def episode_gradient_check(d_w: int = 8, d: int = 6, n_way: int = 2,
                           seed: int = 0, h: float = 1e-5,
                           dropout: float = 0.0) -> tuple[float, int]:
    """Finite-difference check of the full episode loss on a toy setting.

    With ``dropout`` set, the forward runs in training mode with a
    freshly-seeded mask generator per call, so the loss stays a
    deterministic function of the parameters and the dropout-mask
    multiply path is covered too.
    """
    episode, store, params, cfg = toy_setting(d_w, d, n_way, seed, dropout=dropout)
    training = dropout > 0.0

    def run(flat: np.ndarray):
        params.load_flat(flat)
        rng = np.random.default_rng(seed + 77) if training else None
        return forward_episode(episode, store, params, cfg,
                               training=training, rng=rng)

    def loss_fn(flat: np.ndarray) -> float:
        return float(run(flat).loss.value)

    def grad_fn(flat: np.ndarray) -> np.ndarray:
        fwd = run(flat)
        ad.backward(fwd.tape, fwd.loss)
        params.zero_grads()
        fwd.bound.export_grads()
        return params.flat_grads()

    x0 = params.flat()
    try:
        return relative_grad_error(loss_fn, grad_fn, x0, h)
    finally:
        params.load_flat(x0)


def random_decode_instance(rng: np.random.Generator, max_spans: int = 7,
                           positions: int = 10) -> tuple[list[ScoredSpan], DecoderConfig]:
    """One randomized candidate set plus a randomized decoder config."""
    n = int(rng.integers(1, max_spans + 1))
    spans = []
    for _ in range(n):
        l = int(rng.integers(positions))
        r = l + int(rng.integers(0, min(4, positions - l)))
        label = f"C{int(rng.integers(3))}"
        score = float(np.round(rng.uniform(0.01, 1.0), 6))
        spans.append(ScoredSpan(l, r, label, score))
    cfg = DecoderConfig(
        beam_size=5,
        filter_threshold=float(rng.choice([0.0, 0.05, 0.1, 0.3])),
        iou_threshold=float(rng.choice([1e-5, 0.1, 0.3, 0.5, 1.0])),
        decay=float(rng.choice([1e-5, 0.2, 0.5, 0.9, 1.0])),
    )
    return spans, cfg


def decoder_oracle_check(instances: int = 500, max_spans: int = 7,
                         seed: int = 0) -> tuple[int, int]:
    """bsnms with an unbounding beam must equal the exhaustive oracle.

    Returns (mismatches, instances run).
    """
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(instances):
        spans, cfg = random_decode_instance(rng, max_spans)
        wide = DecoderConfig(beam_size=2 ** max_spans,
                             filter_threshold=cfg.filter_threshold,
                             iou_threshold=cfg.iou_threshold, decay=cfg.decay)
        got = bsnms(spans, wide)
        want = exhaustive_oracle(spans, wide)
        if got != want:
            mismatches += 1
    return mismatches, instances
