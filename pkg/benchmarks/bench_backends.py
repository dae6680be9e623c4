#!/usr/bin/env python3
"""Compare the numba and pure-numpy kernel backends.

Times each hot kernel on episode-shaped arrays, then a full training step
(forward + backward + Adam) under both backends.

Usage: python benchmarks/bench_backends.py [--repeats 200]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from spanmatch import kernels as K
from spanmatch.experiments import build_synthetic_setting
from spanmatch.episodes import EpisodeSpec, sample_episodes
from spanmatch.matcher import forward_episode
from spanmatch.nn import Parameters
from spanmatch.optim import AdamState, adam_step
from spanmatch.spans import PipelineConfig
from spanmatch import autodiff as ad


def time_fn(fn, repeats):
    fn()  # warm (JIT + cache effects)
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def kernel_cases(rng):
    x = rng.standard_normal((220, 100))   # support-stack-sized activations
    y = rng.standard_normal((220, 100))
    att = rng.standard_normal((50, 220))  # query x support attention logits
    gain = rng.standard_normal(100)
    bias = rng.standard_normal(100)
    gold = rng.integers(0, 6, size=120).astype(np.int64)
    scores = rng.standard_normal((120, 6))
    probs = K._np_softmax_rows(scores)
    soft = K._np_softmax_rows(att)
    ln = K._np_layer_norm_rows(x, gain, bias, 1e-5)
    dist = K._np_row_l2(x, y, False)
    p = x.copy()
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    return [
        ("softmax_rows", lambda impl: impl(att)),
        ("softmax_rows_grad", lambda impl: impl(soft, att)),
        ("gelu", lambda impl: impl(x)),
        ("gelu_grad", lambda impl: impl(x, y)),
        ("layer_norm_rows", lambda impl: impl(x, gain, bias, 1e-5)),
        ("layer_norm_rows_grad", lambda impl: impl(ln[1], ln[2], gain, y)),
        ("row_l2", lambda impl: impl(x, y, False)),
        ("row_l2_grad", lambda impl: impl(x, y, dist, dist, False)),
        ("softmax_xent", lambda impl: impl(scores, gold)),
        ("softmax_xent_grad", lambda impl: impl(probs, gold, 0.01)),
        ("adam_update", lambda impl: impl(p, y, m, v, 3, 1e-3, 0.9, 0.999, 1e-8)),
    ]


def train_step_case():
    corpus, _, store = build_synthetic_setting({}, seed=1)
    cfg = PipelineConfig(d_w=32, d=100, max_span_len=5, dropout=0.1)
    episodes = sample_episodes(corpus, EpisodeSpec(5, 1, "k-2k", 2, seed=3), 4)
    params = Parameters.init(32, 100, cfg.d_ff, np.random.default_rng(0))
    state = AdamState(params)

    def step():
        for i, ep in enumerate(episodes):
            fwd = forward_episode(ep, store, params, cfg, training=True,
                                  rng=np.random.default_rng(i))
            ad.backward(fwd.tape, fwd.loss)
            params.zero_grads()
            fwd.bound.export_grads()
            adam_step(params, params.grads, state, 1e-3)

    return step


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    if not K.HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(42)
    print(f"{'kernel':<22} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for name, call in kernel_cases(rng):
        t_np = time_fn(lambda: call(K._NUMPY_IMPLS[name]), args.repeats)
        t_nb = time_fn(lambda: call(K._NUMBA_IMPLS[name]), args.repeats)
        print(f"{name:<22} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us "
              f"{t_np / t_nb:>8.2f}x")

    print()
    step = train_step_case()
    results = {}
    for backend in ("numpy", "numba"):
        K.use_backend(backend)
        results[backend] = time_fn(step, max(5, args.repeats // 20))
    K.use_backend("auto")
    print(f"{'train step (4 episodes)':<22} {results['numpy'] * 1e3:>10.2f}ms "
          f"{results['numba'] * 1e3:>10.2f}ms "
          f"{results['numpy'] / results['numba']:>8.2f}x")


if __name__ == "__main__":
    main()
