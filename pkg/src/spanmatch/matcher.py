"""Euclidean prototype matching, the episode objective, and scored
per-span predictions over the full pipeline."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from . import kernels as K
from .corpus import Sentence
from .episodes import Episode
from .nn import BoundParams, Parameters
from .prototypes import (NoOPrototypeError, partition_o_spans, prototype_stacks,
                         PrototypeSet)
from .spans import PipelineConfig, SpanBatch, cross_span_attention, init_spans, \
    intra_span_attention

O_LABEL = "O"


@dataclass
class SpanPrediction:
    """One query span with its label distribution over [O, classes...]."""

    span: tuple[int, int]
    label: str
    score: float
    distribution: np.ndarray
    classes: tuple[str, ...]


def match_probabilities(query_rep: np.ndarray, prototypes: PrototypeSet,
                        squared: bool = False) -> np.ndarray:
    """softmax over negated euclidean distances to [O, class_1, ...]."""
    query_rep = np.asarray(query_rep, dtype=np.float64)
    if not np.isfinite(query_rep).all():
        raise ValueError("non-finite query representation")
    stack = prototypes.stacked()
    dists = K.row_l2(np.broadcast_to(query_rep, stack.shape).copy(), stack, squared)
    return K.softmax_rows(-dists[None, :])[0]


def episode_loss(distributions: Sequence[np.ndarray], gold_indices: Sequence[int]) -> float:
    """Mean negative log-probability of the gold labels over all query spans."""
    if len(distributions) != len(gold_indices):
        raise ValueError("one gold label per query span required")
    total = 0.0
    for dist, gold in zip(distributions, gold_indices):
        total -= float(np.log(dist[gold]))
    return total / len(distributions)


@dataclass
class QueryScores:
    sentence: Sentence
    spans: list[tuple[int, int]]
    probabilities: np.ndarray  # (n_spans, 1 + n_classes), column 0 is O
    gold_indices: np.ndarray


@dataclass
class EpisodeForward:
    tape: ad.Tape
    bound: BoundParams
    loss: ad.Node
    queries: list[QueryScores]


def _gold_index(span: tuple[int, int], sentence: Sentence, classes: Sequence[str]) -> int:
    for l, r, label in sentence.gold_spans:
        if (l, r) == span and label in classes:
            return 1 + classes.index(label)
    return 0


def forward_episode(episode: Episode, store, params: Parameters, cfg: PipelineConfig,
                    *, training: bool = False,
                    rng: Optional[np.random.Generator] = None) -> EpisodeForward:
    """Build the full matching graph for one episode.

    Support sentences pass span-init and ISA once; each query sentence then
    runs CSA against the pooled support stack (both directions from the
    post-ISA snapshot), builds its prototypes, and scores all of its spans.
    The loss pools every query span across the episode's query sentences.
    """
    if not training:
        rng = None
    tape = ad.Tape()
    bound = BoundParams(tape, params)
    classes = list(episode.classes)

    support_batches: list[SpanBatch] = []
    for sent in episode.support:
        batch = init_spans(sent, store.matrix_for(sent), bound, cfg,
                           force_gold=True, rng=rng)
        support_batches.append(intra_span_attention(batch, bound, cfg, rng))

    class_rows: dict[str, list[int]] = {c: [] for c in classes}
    o_rows: dict[str, list[int]] = {}
    base = 0
    for batch in support_batches:
        # spans labeled outside the episode's classes count as O spans
        in_episode = [g for g in batch.sentence.gold_spans if g[2] in class_rows]
        gold_label = {(l, r): label for l, r, label in in_episode}
        o_sub = partition_o_spans(in_episode, batch.spans)
        for offset, span in enumerate(batch.spans):
            if span in gold_label:
                class_rows[gold_label[span]].append(base + offset)
            else:
                o_rows.setdefault(o_sub[span], []).append(base + offset)
        base += len(batch.spans)
    for c in classes:
        if not class_rows[c]:
            raise ValueError(f"episode support has no spans for class {c!r}")
    if not any(o_rows.values()):
        raise NoOPrototypeError("no-O-prototype: support set has zero O spans")
    class_idx = {c: np.asarray(v, dtype=np.int64) for c, v in class_rows.items()}
    o_idx = {s: np.asarray(v, dtype=np.int64) for s, v in o_rows.items()}

    support_stack = support_batches[0].reps if len(support_batches) == 1 \
        else ad.vconcat([b.reps for b in support_batches])

    score_nodes = []
    gold_all: list[int] = []
    queries: list[QueryScores] = []
    for sent in episode.queries:
        batch = init_spans(sent, store.matrix_for(sent), bound, cfg, rng=rng)
        batch = intra_span_attention(batch, bound, cfg, rng)
        batch, enhanced_support = cross_span_attention(batch, support_stack, bound, cfg, rng)
        z_o, z_entity = prototype_stacks(batch.reps, enhanced_support, class_idx, o_idx,
                                         classes, cfg.use_insa, cfg.use_o_partition)
        cols = [ad.rowwise_l2(batch.reps, z, cfg.squared_distance)
                for z in [z_o] + z_entity]
        scores = ad.scale(ad.colcat(cols), -1.0)
        probs = K.softmax_rows(scores.value)
        if not np.isfinite(probs).all():
            raise ValueError(f"non-finite probabilities for sentence {sent.id!r}")
        gold = np.asarray([_gold_index(s, sent, classes) for s in batch.spans],
                          dtype=np.int64)
        score_nodes.append(scores)
        gold_all.extend(int(g) for g in gold)
        queries.append(QueryScores(sent, batch.spans, probs, gold))

    pooled = score_nodes[0] if len(score_nodes) == 1 else ad.vconcat(score_nodes)
    loss = ad.cross_entropy_mean(pooled, np.asarray(gold_all, dtype=np.int64))
    return EpisodeForward(tape, bound, loss, queries)


def predictions_from_scores(qs: QueryScores, classes: Sequence[str]) -> list[SpanPrediction]:
    names = (O_LABEL,) + tuple(classes)
    out = []
    for i, span in enumerate(qs.spans):
        dist = qs.probabilities[i]
        k = int(np.argmax(dist))  # first max wins: O, then episode class order
        out.append(SpanPrediction(span, names[k], float(dist[k]), dist.copy(), names))
    return out


def _support_class_counts(episode: Episode, cfg: PipelineConfig) -> dict[str, int]:
    from .spans import sentence_spans
    counts = {c: 0 for c in episode.classes}
    for sent in episode.support:
        spans = set(sentence_spans(sent, cfg.max_span_len, force_gold=True))
        for l, r, label in sent.gold_spans:
            if (l, r) in spans and label in counts:
                counts[label] += 1
    return counts


def score_spans(episode: Episode, store, params: Parameters,
                cfg: PipelineConfig) -> list[list[SpanPrediction]]:
    """Evaluation-mode scoring: one prediction list per query sentence.

    A class with zero support spans (possible after support-noise
    perturbation) is unmatchable: it is dropped from matching and kept in
    the output distributions with probability exactly zero, so its gold
    spans surface as misses downstream.
    """
    counts = _support_class_counts(episode, cfg)
    present = tuple(c for c in episode.classes if counts[c] > 0)
    if len(present) == len(episode.classes):
        fwd = forward_episode(episode, store, params, cfg, training=False)
        return [predictions_from_scores(qs, episode.classes) for qs in fwd.queries]

    reduced = Episode(present, episode.support, episode.queries)
    fwd = forward_episode(reduced, store, params, cfg, training=False)
    out = []
    col = {c: 1 + present.index(c) for c in present}
    names = (O_LABEL,) + tuple(episode.classes)
    for qs in fwd.queries:
        preds = []
        for i, span in enumerate(qs.spans):
            full = np.zeros(1 + len(episode.classes))
            full[0] = qs.probabilities[i][0]
            for c in present:
                full[1 + episode.classes.index(c)] = qs.probabilities[i][col[c]]
            k = int(np.argmax(full))
            preds.append(SpanPrediction(span, names[k], float(full[k]), full, names))
        out.append(preds)
    return out
