"""Tape-based reverse-mode differentiation over 2-D float64 arrays.

A :class:`Tape` records primitive operations in forward order; reverse
traversal visits each node exactly once and accumulates gradients
additively. Single-threaded by design: one tape per episode forward pass.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import kernels as K


class Tape:
    """Ordered record of one forward pass. Not reusable after backward."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.consumed = False

    def _record(self, node: "Node") -> "Node":
        self.nodes.append(node)
        return node


class Node:
    __slots__ = ("tape", "value", "parents", "backward_fn", "requires_grad", "grad")

    def __init__(self, tape, value, parents=(), backward_fn=None, requires_grad=True):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.grad = None
        tape._record(self)

    @property
    def shape(self):
        return self.value.shape

    def _accum(self, g) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g


def leaf(tape: Tape, value: np.ndarray, requires_grad: bool = True) -> Node:
    arr = np.ascontiguousarray(value, dtype=np.float64)
    return Node(tape, arr, requires_grad=requires_grad)


def constant(tape: Tape, value: np.ndarray) -> Node:
    return leaf(tape, value, requires_grad=False)


def backward(tape: Tape, loss: Node) -> None:
    """Reverse traversal from ``loss``; fills ``grad`` on every reached node.

    Raises if the loss is not a scalar produced on this tape, or if the
    tape has already been traversed (gradients would double-accumulate).
    """
    if loss.tape is not tape or loss not in _tail(tape, loss):
        raise ValueError("loss node was not produced on this tape")
    if np.ndim(loss.value) != 0:
        raise ValueError(f"loss must be scalar, got shape {np.shape(loss.value)}")
    if tape.consumed:
        raise RuntimeError("tape already traversed; build a new tape per backward pass")
    tape.consumed = True
    loss.grad = np.float64(1.0)
    for node in reversed(tape.nodes):
        if node.grad is None or node.backward_fn is None:
            continue
        node.backward_fn(node.grad)


def _tail(tape: Tape, node: Node):
    # cheap membership: identity scan from the end, losses are recorded last
    for cand in reversed(tape.nodes):
        yield cand
        if cand is node:
            return


def _same_tape(*nodes: Node) -> Tape:
    tape = nodes[0].tape
    for n in nodes[1:]:
        if n.tape is not tape:
            raise ValueError("operands recorded on different tapes")
    return tape


def matmul(a: Node, b: Node) -> Node:
    tape = _same_tape(a, b)
    if a.value.shape[1] != b.value.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.value.shape} @ {b.value.shape}")
    y = a.value @ b.value

    def bwd(g):
        a._accum(g @ b.value.T)
        b._accum(a.value.T @ g)

    return Node(tape, y, (a, b), bwd)


def matmul_nt(a: Node, b: Node) -> Node:
    """A @ B.T without materializing a transpose node."""
    tape = _same_tape(a, b)
    if a.value.shape[1] != b.value.shape[1]:
        raise ValueError(f"matmul_nt shape mismatch {a.value.shape} x {b.value.shape}")
    y = a.value @ b.value.T

    def bwd(g):
        a._accum(g @ b.value)
        b._accum(g.T @ a.value)

    return Node(tape, y, (a, b), bwd)


def add(a: Node, b: Node) -> Node:
    tape = _same_tape(a, b)
    if a.value.shape != b.value.shape:
        raise ValueError(f"add shape mismatch {a.value.shape} vs {b.value.shape}")
    y = a.value + b.value

    def bwd(g):
        a._accum(g)
        b._accum(g)

    return Node(tape, y, (a, b), bwd)


def scale(a: Node, c: float) -> Node:
    y = a.value * c

    def bwd(g):
        a._accum(g * c)

    return Node(a.tape, y, (a,), bwd)


def mul_const(a: Node, mask: np.ndarray) -> Node:
    """Elementwise product with a non-differentiable array (dropout masks)."""
    y = a.value * mask

    def bwd(g):
        a._accum(g * mask)

    return Node(a.tape, y, (a,), bwd)


def row_softmax(a: Node) -> Node:
    y = K.softmax_rows(a.value)

    def bwd(g):
        a._accum(K.softmax_rows_grad(y, g))

    return Node(a.tape, y, (a,), bwd)


def gelu(a: Node) -> Node:
    y = K.gelu(a.value)

    def bwd(g):
        a._accum(K.gelu_grad(a.value, g))

    return Node(a.tape, y, (a,), bwd)


def layer_norm(x: Node, gain: Node, bias: Node, eps: float = 1e-5) -> Node:
    tape = _same_tape(x, gain, bias)
    d = x.value.shape[1]
    if gain.value.shape != (d,) or bias.value.shape != (d,):
        raise ValueError(f"layer_norm affine shape mismatch for width {d}")
    y, xhat, rstd = K.layer_norm_rows(x.value, gain.value, bias.value, eps)

    def bwd(g):
        dx, dgain, dbias = K.layer_norm_rows_grad(xhat, rstd, gain.value, g)
        x._accum(dx)
        gain._accum(dgain)
        bias._accum(dbias)

    return Node(tape, y, (x, gain, bias), bwd)


def vconcat(parts: Sequence[Node]) -> Node:
    tape = _same_tape(*parts)
    y = np.concatenate([p.value for p in parts], axis=0)
    offsets = np.cumsum([0] + [p.value.shape[0] for p in parts])

    def bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            p._accum(g[lo:hi])

    return Node(tape, y, tuple(parts), bwd)


def gather_rows(a: Node, idx: np.ndarray) -> Node:
    idx = np.asarray(idx, dtype=np.int64)
    y = np.ascontiguousarray(a.value[idx])

    def bwd(g):
        da = np.zeros_like(a.value)
        np.add.at(da, idx, g)
        a._accum(da)

    return Node(a.tape, y, (a,), bwd)


def colcat(cols: Sequence[Node]) -> Node:
    """Stack (M, 1) nodes into (M, J)."""
    tape = _same_tape(*cols)
    y = np.concatenate([c.value for c in cols], axis=1)

    def bwd(g):
        for j, c in enumerate(cols):
            c._accum(g[:, j : j + 1])

    return Node(tape, y, tuple(cols), bwd)


def rowwise_dot(a: Node, b: Node) -> Node:
    tape = _same_tape(a, b)
    y = (a.value * b.value).sum(axis=1, keepdims=True)

    def bwd(g):
        a._accum(g * b.value)
        b._accum(g * a.value)

    return Node(tape, y, (a, b), bwd)


def rowwise_l2(a: Node, b: Node, squared: bool = False) -> Node:
    """Per-row euclidean (or squared) distance between two (M, d) nodes."""
    tape = _same_tape(a, b)
    if a.value.shape != b.value.shape:
        raise ValueError(f"rowwise_l2 shape mismatch {a.value.shape} vs {b.value.shape}")
    d = K.row_l2(a.value, b.value, squared)

    def bwd(g):
        da = K.row_l2_grad(a.value, b.value, d, g[:, 0], squared)
        a._accum(da)
        b._accum(-da)

    return Node(tape, d[:, None].copy(), (a, b), bwd)


def weighted_colmix(w: Node, zs: Sequence[Node]) -> Node:
    """sum_j w[:, j, None] * Z_j for (M, J) weights and J (M, d) stacks."""
    tape = _same_tape(w, *zs)
    y = np.zeros_like(zs[0].value)
    for j, z in enumerate(zs):
        y += w.value[:, j : j + 1] * z.value

    def bwd(g):
        dw = np.empty_like(w.value)
        for j, z in enumerate(zs):
            dw[:, j] = (g * z.value).sum(axis=1)
            z._accum(w.value[:, j : j + 1] * g)
        w._accum(dw)

    return Node(tape, y, (w, *zs), bwd)


def cross_entropy_mean(scores: Node, gold: np.ndarray) -> Node:
    """Mean negative log-softmax-probability of the gold column per row."""
    gold = np.asarray(gold, dtype=np.int64)
    if gold.shape != (scores.value.shape[0],):
        raise ValueError("one gold index per score row required")
    loss, probs = K.softmax_xent(scores.value, gold)

    def bwd(g):
        scores._accum(K.softmax_xent_grad(probs, gold, float(g) / scores.value.shape[0]))

    return Node(scores.tape, np.float64(loss), (scores,), bwd)
