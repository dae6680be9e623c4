"""Exact-match micro F1 in the two benchmark styles, plus the
FP-Span/FP-Type error taxonomy."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .corpus import Span
from .decoder import DecoderConfig, decode
from .episodes import Episode
from .matcher import score_spans
from .nn import Parameters
from .spans import PipelineConfig

STYLES = ("fewnerd", "snips")


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def classify_errors(predicted: Sequence[Span], gold: Sequence[Span]
                    ) -> tuple[list[Span], list[Span]]:
    """Split false positives into FP-Type (right boundary, wrong label)
    and FP-Span (wrong boundary)."""
    gold_set = set(gold)
    gold_bounds = {(l, r) for l, r, _ in gold}
    fp_type, fp_span = [], []
    for span in predicted:
        if span in gold_set:
            continue
        l, r, _ = span
        (fp_type if (l, r) in gold_bounds else fp_span).append(span)
    return fp_span, fp_type


@dataclass
class EvalReport:
    style: str
    precision: float
    recall: float
    f1: float
    episode_f1: list[float]
    tp: int
    fp: int
    fn: int
    fp_span: int
    fp_type: int
    task_seconds: list[float] = field(default_factory=list)

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {"style": self.style, "precision": self.precision, "recall": self.recall,
               "f1": self.f1, "episode_f1": self.episode_f1,
               "errors": {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                          "fp_span": self.fp_span, "fp_type": self.fp_type}}
        if include_timing:
            out["task_seconds"] = self.task_seconds
        return out

    def summary(self) -> str:
        return (f"{self.style} micro F1 {self.f1:.4f} "
                f"(P {self.precision:.4f} R {self.recall:.4f}; "
                f"TP {self.tp} FP {self.fp} FN {self.fn}; "
                f"FP-Span {self.fp_span} FP-Type {self.fp_type})")


@dataclass
class _EpisodeCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    fp_span: int = 0
    fp_type: int = 0
    seconds: float = 0.0


def _score_one(episode: Episode, store, params: Parameters, cfg: PipelineConfig,
               decoder_cfg: DecoderConfig) -> _EpisodeCounts:
    start = time.perf_counter()
    counts = _EpisodeCounts()
    per_sentence = score_spans(episode, store, params, cfg)
    for sentence, predictions in zip(episode.queries, per_sentence):
        accepted = decode(predictions, decoder_cfg)
        pred_spans = [(s.l, s.r, s.label) for s in accepted]
        gold = list(sentence.gold_spans)
        matched = set(pred_spans) & set(gold)
        counts.tp += len(matched)
        counts.fn += len(gold) - len(matched)
        fp_span, fp_type = classify_errors(pred_spans, gold)
        counts.fp += len(fp_span) + len(fp_type)
        counts.fp_span += len(fp_span)
        counts.fp_type += len(fp_type)
    counts.seconds = time.perf_counter() - start
    return counts


def evaluate(episodes: Sequence[Episode], store, params: Parameters,
             cfg: PipelineConfig, decoder_cfg: Optional[DecoderConfig] = None,
             style: str = "fewnerd", episodes_per_batch: int = 1,
             threads: int = 1) -> EvalReport:
    """Score and decode every episode, then aggregate.

    fewnerd style pools TP/FP/FN over all episodes before computing F1;
    snips style computes F1 per batch of episodes and averages the batch
    scores. A predicted entity counts as TP only on an exact boundary and
    label match.
    """
    if style not in STYLES:
        raise ValueError(f"style must be one of {STYLES}")
    if episodes_per_batch < 1:
        raise ValueError("episodes_per_batch must be >= 1")
    decoder_cfg = decoder_cfg or DecoderConfig()

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            all_counts = list(pool.map(
                lambda ep: _score_one(ep, store, params, cfg, decoder_cfg), episodes))
    else:
        all_counts = [_score_one(ep, store, params, cfg, decoder_cfg)
                      for ep in episodes]

    episode_f1 = [prf(c.tp, c.fp, c.fn)[2] for c in all_counts]
    tp = sum(c.tp for c in all_counts)
    fp = sum(c.fp for c in all_counts)
    fn = sum(c.fn for c in all_counts)
    fp_span = sum(c.fp_span for c in all_counts)
    fp_type = sum(c.fp_type for c in all_counts)

    if style == "fewnerd":
        precision, recall, f1 = prf(tp, fp, fn)
    else:
        batch_f1 = []
        for i in range(0, len(all_counts), episodes_per_batch):
            chunk = all_counts[i:i + episodes_per_batch]
            batch_f1.append(prf(sum(c.tp for c in chunk), sum(c.fp for c in chunk),
                                sum(c.fn for c in chunk))[2])
        f1 = float(np.mean(batch_f1)) if batch_f1 else 0.0
        precision, recall, _ = prf(tp, fp, fn)

    return EvalReport(style, precision, recall, f1, episode_f1, tp, fp, fn,
                      fp_span, fp_type, [c.seconds for c in all_counts])
