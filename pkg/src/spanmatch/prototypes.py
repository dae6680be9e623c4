"""O-span partitioning and query-conditioned class prototype aggregation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .corpus import Span
from .nn import attention_aggregate, attention_enhance

O_SUBCLASSES = ("O1", "O2", "O3")


class NoOPrototypeError(ValueError):
    """Raised when the support set contains zero O spans (degenerate)."""


def partition_o_spans(gold_spans: Sequence[Span],
                      spans: Sequence[tuple[int, int]]) -> dict[tuple[int, int], str]:
    """Assign every non-gold span one of three O sub-classes by boundary.

    O1: disjoint from every gold span. O2: contained in some gold span.
    O3: everything else (boundary-crossing). Cases are tested in that
    order, so containment wins over crossing when both could apply.
    """
    gold_bounds = [(l, r) for l, r, _ in gold_spans]
    gold_set = set(gold_bounds)
    out: dict[tuple[int, int], str] = {}
    for lo, ro in spans:
        if (lo, ro) in gold_set:
            continue
        if all(ro < l or lo > r for l, r in gold_bounds):
            out[(lo, ro)] = "O1"
        elif any(lo >= l and ro <= r for l, r in gold_bounds):
            out[(lo, ro)] = "O2"
        else:
            out[(lo, ro)] = "O3"
    return out


def instance_span_attention(query_rep: np.ndarray, class_reps: np.ndarray,
                            use_insa: bool = True) -> np.ndarray:
    """Prototype for one class, conditioned on one query span.

    With the INSA switch off, falls back to the unweighted mean of the
    class's span representations.
    """
    class_reps = np.asarray(class_reps, dtype=np.float64)
    if class_reps.ndim != 2 or class_reps.shape[0] == 0:
        raise ValueError("class must contain at least one span representation")
    if use_insa:
        return attention_aggregate(np.asarray(query_rep, dtype=np.float64), class_reps)
    return class_reps.mean(axis=0)


def insa_stack(queries: ad.Node, class_rows: ad.Node, use_insa: bool) -> ad.Node:
    """Batched tape form: one prototype row per query row."""
    if use_insa:
        return attention_enhance(queries, class_rows)
    n_q = queries.value.shape[0]
    n_k = class_rows.value.shape[0]
    uniform = np.full((n_q, n_k), 1.0 / n_k)
    return ad.matmul(ad.constant(queries.tape, uniform), class_rows)


@dataclass
class PrototypeSet:
    """Per-query-span class vectors: one per entity class plus the O vector."""

    classes: tuple[str, ...]
    entity: dict[str, np.ndarray]
    o_vector: np.ndarray
    nonempty_o_subclasses: tuple[str, ...]

    def stacked(self) -> np.ndarray:
        """Rows ordered [O, class_1, ..., class_N]."""
        return np.stack([self.o_vector] + [self.entity[c] for c in self.classes])


def build_prototype_set(query_rep: np.ndarray,
                        class_groups: Mapping[str, np.ndarray],
                        o_groups: Mapping[str, np.ndarray],
                        classes: Sequence[str],
                        use_insa: bool = True,
                        use_o_partition: bool = True) -> PrototypeSet:
    """Aggregate entity and O prototypes for a single query span.

    Entity prototypes come from instance attention per class. The O vector
    aggregates the nonempty O sub-class prototypes with a second attention
    round; with the partition switch off all O spans act as one class.
    """
    query_rep = np.asarray(query_rep, dtype=np.float64)
    entity = {c: instance_span_attention(query_rep, class_groups[c], use_insa)
              for c in classes}
    nonempty = tuple(s for s in O_SUBCLASSES if s in o_groups and len(o_groups[s]))
    total_o = sum(len(o_groups.get(s, ())) for s in o_groups)
    if total_o == 0:
        raise NoOPrototypeError("no-O-prototype: support set has zero O spans")
    if use_o_partition:
        subs = [instance_span_attention(query_rep, o_groups[s], use_insa) for s in nonempty]
        o_vector = attention_aggregate(query_rep, np.stack(subs))
    else:
        all_o = np.concatenate([np.asarray(o_groups[s]) for s in o_groups if len(o_groups[s])])
        o_vector = instance_span_attention(query_rep, all_o, use_insa)
        nonempty = ("O",)
    return PrototypeSet(tuple(classes), entity, o_vector, nonempty)


def prototype_stacks(queries: ad.Node, support: ad.Node,
                     class_rows: Mapping[str, np.ndarray],
                     o_rows: Mapping[str, np.ndarray],
                     classes: Sequence[str],
                     use_insa: bool,
                     use_o_partition: bool) -> tuple[ad.Node, list[ad.Node]]:
    """Tape form over all query spans at once.

    ``class_rows`` / ``o_rows`` map group names to row-index arrays into the
    ``support`` stack. Returns (O prototype stack, per-class prototype
    stacks), each (n_query_spans, d).
    """
    z_entity = [insa_stack(queries, ad.gather_rows(support, class_rows[c]), use_insa)
                for c in classes]
    o_order = [s for s in O_SUBCLASSES if len(o_rows.get(s, ()))]
    if not o_order:
        raise NoOPrototypeError("no-O-prototype: support set has zero O spans")
    if use_o_partition:
        subs = [insa_stack(queries, ad.gather_rows(support, o_rows[s]), use_insa)
                for s in o_order]
        if len(subs) == 1:
            z_o = subs[0]
        else:
            scores = ad.colcat([ad.rowwise_dot(queries, z) for z in subs])
            weights = ad.row_softmax(scores)
            z_o = ad.weighted_colmix(weights, subs)
    else:
        all_idx = np.concatenate([np.asarray(o_rows[s], dtype=np.int64) for s in o_order])
        z_o = insa_stack(queries, ad.gather_rows(support, np.sort(all_idx)), use_insa)
    return z_o, z_entity
