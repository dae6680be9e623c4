"""Trainable parameters, the shared attention-aggregation operation, and
feed-forward/normalization blocks (plain and tape-recorded forms)."""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import kernels as K

LAYER_NORM_EPS = 1e-5

PARAM_SHAPES = ("span_proj", "isa_w1", "isa_w2", "isa_gain", "isa_bias",
                "csa_w1", "csa_w2", "csa_gain", "csa_bias")


class EmptyAttentionError(ValueError):
    """Attention over zero key rows is undefined; callers must never do it."""


class Parameters:
    """Named trainable arrays with same-shape gradient slots.

    Read-only once training stops; within training, updates happen in place
    on the single training thread.
    """

    def __init__(self, arrays: dict[str, np.ndarray]):
        self.arrays = {k: np.ascontiguousarray(v, dtype=np.float64) for k, v in arrays.items()}
        self.grads = {k: np.zeros_like(v) for k, v in self.arrays.items()}

    @classmethod
    def init(cls, d_w: int, d: int, d_ff: int, rng: np.random.Generator) -> "Parameters":
        def uniform(fan_in, shape):
            bound = 1.0 / math.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        arrays = {
            "span_proj": uniform(2 * d_w, (2 * d_w, d)),
            "isa_w1": uniform(d, (d, d_ff)),
            "isa_w2": uniform(d_ff, (d_ff, d)),
            "isa_gain": np.ones(d),
            "isa_bias": np.zeros(d),
            "csa_w1": uniform(d, (d, d_ff)),
            "csa_w2": uniform(d_ff, (d_ff, d)),
            "csa_gain": np.ones(d),
            "csa_bias": np.zeros(d),
        }
        return cls(arrays)

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[:] = 0.0

    def names(self) -> list[str]:
        return sorted(self.arrays)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.arrays[n].ravel() for n in self.names()])

    def flat_grads(self) -> np.ndarray:
        return np.concatenate([self.grads[n].ravel() for n in self.names()])

    def load_flat(self, vec: np.ndarray) -> None:
        pos = 0
        for n in self.names():
            arr = self.arrays[n]
            arr[...] = vec[pos : pos + arr.size].reshape(arr.shape)
            pos += arr.size
        if pos != vec.size:
            raise ValueError(f"flat vector has {vec.size} values, expected {pos}")

    def copy(self) -> "Parameters":
        return Parameters({k: v.copy() for k, v in self.arrays.items()})


class BoundParams:
    """Per-tape cache of parameter leaf nodes (one leaf per array per pass)."""

    def __init__(self, tape: ad.Tape, params: Parameters):
        self.tape = tape
        self.params = params
        self._leaves: dict[str, ad.Node] = {}

    def node(self, name: str) -> ad.Node:
        if name not in self._leaves:
            self._leaves[name] = ad.leaf(self.tape, self.params.arrays[name])
        return self._leaves[name]

    def export_grads(self) -> None:
        """Add the accumulated leaf gradients into the parameter grad slots."""
        for name, node in self._leaves.items():
            if node.grad is not None:
                self.params.grads[name] += node.grad


def attention_aggregate(query: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Softmax-weighted mix of ``keys`` rows, weighted by raw dot products
    with ``query``. No scaling factor is applied to the dot products."""
    query = np.asarray(query, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    if keys.ndim != 2 or keys.shape[0] == 0:
        raise EmptyAttentionError("empty-attention: need at least one key row")
    if query.shape != (keys.shape[1],):
        raise ValueError(f"query length {query.shape} does not match key width {keys.shape[1]}")
    weights = K.softmax_rows(query[None, :] @ keys.T)
    return (weights @ keys)[0]


def attention_enhance(x: ad.Node, keys: ad.Node) -> ad.Node:
    """Batched tape form: every row of ``x`` attention-aggregated over ``keys``."""
    if keys.value.shape[0] == 0:
        raise EmptyAttentionError("empty-attention: need at least one key row")
    weights = ad.row_softmax(ad.matmul_nt(x, keys))
    return ad.matmul(weights, keys)


def residual_ffn_block(
    x: np.ndarray,
    aggregated: np.ndarray,
    w1: np.ndarray,
    w2: np.ndarray,
    gain: np.ndarray,
    bias: np.ndarray,
) -> np.ndarray:
    """LayerNorm(x + GELU(aggregated @ w1) @ w2) on a single length-d vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != aggregated.shape or x.shape[0] != w1.shape[0]:
        raise ValueError("residual_ffn_block dimension mismatch")
    hidden = K.gelu(np.asarray(aggregated, dtype=np.float64)[None, :] @ w1)
    pre, _, _ = K.layer_norm_rows(x[None, :] + hidden @ w2, gain, bias, LAYER_NORM_EPS)
    return pre[0]


def ffn_block(
    x: ad.Node,
    aggregated: ad.Node,
    bound: BoundParams,
    block: str,
    hidden_mask: Optional[np.ndarray] = None,
) -> ad.Node:
    """Tape form of the residual FFN block for ``block`` in {isa, csa}."""
    hidden = ad.gelu(ad.matmul(aggregated, bound.node(f"{block}_w1")))
    if hidden_mask is not None:
        hidden = ad.mul_const(hidden, hidden_mask)
    summed = ad.add(x, ad.matmul(hidden, bound.node(f"{block}_w2")))
    return ad.layer_norm(summed, bound.node(f"{block}_gain"), bound.node(f"{block}_bias"),
                         LAYER_NORM_EPS)


def dropout_mask(rng: Optional[np.random.Generator], shape, ratio: float):
    """Inverted-dropout mask, or None when dropout is inactive."""
    if rng is None or ratio <= 0.0:
        return None
    keep = rng.random(shape) >= ratio
    return keep / (1.0 - ratio)
