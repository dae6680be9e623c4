"""Span enumeration, span initialization, and the intra/cross span
attention enhancement stages."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import autodiff as ad
from .corpus import Sentence
from .nn import BoundParams, attention_enhance, dropout_mask, ffn_block


@dataclass(frozen=True)
class PipelineConfig:
    """Dimensions, span-length cap, dropout ratio, and ablation switches."""

    d_w: int
    d: int = 100
    d_ff: int = 0  # 0 means 2*d
    max_span_len: int = 8
    dropout: float = 0.1
    use_isa: bool = True
    use_csa: bool = True
    use_insa: bool = True
    use_o_partition: bool = True
    squared_distance: bool = False

    def __post_init__(self):
        if self.d_w < 1 or self.d < 1 or self.max_span_len < 1:
            raise ValueError("dimensions and max_span_len must be positive")
        if self.d_ff == 0:
            object.__setattr__(self, "d_ff", 2 * self.d)

    def to_dict(self) -> dict:
        return {"d_w": self.d_w, "d": self.d, "d_ff": self.d_ff,
                "max_span_len": self.max_span_len, "dropout": self.dropout,
                "use_isa": self.use_isa, "use_csa": self.use_csa,
                "use_insa": self.use_insa, "use_o_partition": self.use_o_partition,
                "squared_distance": self.squared_distance}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})


def enumerate_spans(n_tokens: int, max_len: int) -> list[tuple[int, int]]:
    """All (l, r) with r - l + 1 <= max_len, lexicographic order."""
    if n_tokens < 1:
        raise ValueError("cannot enumerate spans of an empty sentence")
    return [(l, r) for l in range(n_tokens)
            for r in range(l, min(n_tokens, l + max_len))]


def sentence_spans(sentence: Sentence, max_len: int,
                   force_gold: bool = False) -> list[tuple[int, int]]:
    """Enumerated spans; with ``force_gold``, gold spans longer than the cap
    are appended so every annotated support shot is representable."""
    spans = enumerate_spans(len(sentence.tokens), max_len)
    if force_gold:
        extra = sorted({(l, r) for l, r, _ in sentence.gold_spans if r - l + 1 > max_len})
        spans.extend(extra)
    return spans


@dataclass
class SpanBatch:
    """Spans of one sentence with their evolving tape representations."""

    sentence: Sentence
    spans: list[tuple[int, int]]
    reps: ad.Node

    def __post_init__(self):
        if len(self.spans) != self.reps.value.shape[0]:
            raise ValueError("span count does not match representation rows")
        if len(set(self.spans)) != len(self.spans):
            raise ValueError("duplicate spans in batch")


def init_spans(sentence: Sentence, embeddings: np.ndarray, bound: BoundParams,
               cfg: PipelineConfig, *, force_gold: bool = False,
               rng: Optional[np.random.Generator] = None) -> SpanBatch:
    """Boundary-concatenation projection: row (l, r) = [h_l; h_r] @ W."""
    if embeddings.shape != (len(sentence.tokens), cfg.d_w):
        raise ValueError(
            f"embeddings for {sentence.id!r} have shape {embeddings.shape}, "
            f"expected ({len(sentence.tokens)}, {cfg.d_w})")
    spans = sentence_spans(sentence, cfg.max_span_len, force_gold=force_gold)
    left = np.asarray([l for l, _ in spans])
    right = np.asarray([r for _, r in spans])
    feats = np.concatenate([embeddings[left], embeddings[right]], axis=1)
    reps = ad.matmul(ad.constant(bound.tape, feats), bound.node("span_proj"))
    mask = dropout_mask(rng, reps.value.shape, cfg.dropout)
    if mask is not None:
        reps = ad.mul_const(reps, mask)
    return SpanBatch(sentence, spans, reps)


def intra_span_attention(batch: SpanBatch, bound: BoundParams, cfg: PipelineConfig,
                         rng: Optional[np.random.Generator] = None) -> SpanBatch:
    """Enhance every span with attention over all spans of its sentence.
    Identity when the ISA switch is off."""
    if not cfg.use_isa:
        return batch
    aggregated = attention_enhance(batch.reps, batch.reps)
    mask = dropout_mask(rng, (len(batch.spans), cfg.d_ff), cfg.dropout)
    return replace(batch, reps=ffn_block(batch.reps, aggregated, bound, "isa", mask))


def cross_span_attention(query: SpanBatch, support_stack: ad.Node, bound: BoundParams,
                         cfg: PipelineConfig,
                         rng: Optional[np.random.Generator] = None
                         ) -> tuple[SpanBatch, ad.Node]:
    """Mutual query/support enhancement.

    Both directions read the same pre-enhancement snapshot: query rows
    attend over the pooled support rows and vice versa. Returns the
    enhanced query batch and the enhanced support stack. Identity when the
    CSA switch is off.
    """
    if support_stack.value.shape[0] == 0:
        raise ValueError("cross attention requires at least one support span")
    if not cfg.use_csa:
        return query, support_stack
    q_agg = attention_enhance(query.reps, support_stack)
    s_agg = attention_enhance(support_stack, query.reps)
    q_mask = dropout_mask(rng, (query.reps.value.shape[0], cfg.d_ff), cfg.dropout)
    s_mask = dropout_mask(rng, (support_stack.value.shape[0], cfg.d_ff), cfg.dropout)
    enhanced_q = ffn_block(query.reps, q_agg, bound, "csa", q_mask)
    enhanced_s = ffn_block(support_stack, s_agg, bound, "csa", s_mask)
    return replace(query, reps=enhanced_q), enhanced_s
