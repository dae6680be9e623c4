"""Episodic meta-training loop."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .decoder import DecoderConfig
from .episodes import Episode
from .evaluation import evaluate
from .matcher import forward_episode
from .nn import Parameters
from .optim import AdamState, adam_step, clip_gradients
from .spans import PipelineConfig


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-4
    grad_clip: Optional[float] = None
    seed: int = 0
    eval_every: int = 0  # 0 disables validation checkpoints

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")


@dataclass
class TrainResult:
    params: Parameters
    losses: list[float]
    best_f1: Optional[float] = None


def train(episodes: Sequence[Episode], store, params: Parameters,
          cfg: PipelineConfig, tcfg: TrainConfig,
          val_episodes: Optional[Sequence[Episode]] = None,
          val_decoder: Optional[DecoderConfig] = None,
          log: Optional[Callable[[str], None]] = None) -> TrainResult:
    """One Adam step per episode: forward (dropout on) -> loss -> backward.

    With a validation stream and ``eval_every`` set, keeps the parameters
    of the best-validation-F1 checkpoint. Deterministic given the seed.
    """
    state = AdamState(params)
    seedseq = np.random.SeedSequence(tcfg.seed)
    losses: list[float] = []
    best_f1 = None
    best_params = None

    for step, episode in enumerate(episodes):
        rng = np.random.default_rng(seedseq.spawn(1)[0])
        fwd = forward_episode(episode, store, params, cfg, training=True, rng=rng)
        loss = float(fwd.loss.value)
        if not math.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite loss {loss!r} at step {step} "
                f"(episode classes {episode.classes})")
        losses.append(loss)
        if tcfg.lr > 0.0:
            ad.backward(fwd.tape, fwd.loss)
            params.zero_grads()
            fwd.bound.export_grads()
            if tcfg.grad_clip is not None:
                clip_gradients(params.grads, tcfg.grad_clip)
            adam_step(params, params.grads, state, tcfg.lr)

        if (val_episodes and tcfg.eval_every
                and (step + 1) % tcfg.eval_every == 0):
            report = evaluate(val_episodes, store, params, cfg, val_decoder)
            if best_f1 is None or report.f1 > best_f1:
                best_f1 = report.f1
                best_params = params.copy()
            if log:
                log(f"step {step + 1}: loss {loss:.4f} val F1 {report.f1:.4f}")
        elif log and (step + 1) % 100 == 0:
            log(f"step {step + 1}: loss {loss:.4f}")

    final = best_params if best_params is not None else params
    return TrainResult(final, losses, best_f1)
