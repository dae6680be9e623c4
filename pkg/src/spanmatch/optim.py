"""Adam optimizer over named parameter collections."""
from __future__ import annotations

import numpy as np

from . import kernels as K
from .nn import Parameters

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    def __init__(self, params: Parameters):
        self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.t = 0


def adam_step(params: Parameters, grads: dict[str, np.ndarray], state: AdamState,
              lr: float) -> Parameters:
    """One bias-corrected Adam update, in place. Returns ``params``."""
    state.t += 1
    for name, p in params.arrays.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"grad shape {g.shape} != param shape {p.shape} for {name!r}")
        mat_p = p if p.ndim == 2 else p[None, :]
        mat_g = g if g.ndim == 2 else g[None, :]
        mat_m = state.m[name] if p.ndim == 2 else state.m[name][None, :]
        mat_v = state.v[name] if p.ndim == 2 else state.v[name][None, :]
        K.adam_update(mat_p, np.ascontiguousarray(mat_g), mat_m, mat_v,
                      state.t, lr, BETA1, BETA2, EPS)
    return params


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``.

    Returns the pre-clip norm.
    """
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = np.sqrt(total)
    if norm > max_norm and norm > 0.0:
        factor = max_norm / norm
        for g in grads.values():
            g *= factor
    return float(norm)
