"""N-way K-shot episode sampling, serialization, and support-set noise."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .corpus import Sentence

SHOT_MODES = ("exact", "k-2k")


class InfeasibleSamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class EpisodeSpec:
    n_way: int
    k_shot: int
    shot_mode: str = "k-2k"
    query_count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_way < 1 or self.k_shot < 1 or self.query_count < 1:
            raise ValueError("n_way, k_shot and query_count must all be >= 1")
        if self.shot_mode not in SHOT_MODES:
            raise ValueError(f"shot_mode must be one of {SHOT_MODES}")


@dataclass(frozen=True)
class Episode:
    classes: tuple[str, ...]
    support: tuple[Sentence, ...]
    queries: tuple[Sentence, ...]

    def support_entity_count(self) -> int:
        return sum(len(s.gold_spans) for s in self.support)


def _keep_episode_spans(sentence: Sentence, classes: Sequence[str]) -> Sentence:
    """Drop gold spans outside the episode's classes (they become O)."""
    kept = tuple(s for s in sentence.gold_spans if s[2] in classes)
    return sentence.with_spans(kept)


def sample_episode(corpus: Sequence[Sentence], spec: EpisodeSpec) -> Episode:
    """Greedy shuffle-then-fill sampling.

    Sentences are visited in a seed-shuffled order; one is added to the
    support set when no per-class entity count would exceed the cap (K in
    exact mode, 2K in K~2K mode), until every class holds at least K
    entities. Queries come from the remaining sentences that contain at
    least one in-episode entity. Deterministic given (corpus order, seed).
    """
    rng = np.random.default_rng(spec.seed)
    inventory = sorted({label for sent in corpus for label in sent.labels()
                        if label != "O"})
    if len(inventory) < spec.n_way:
        raise InfeasibleSamplingError(
            f"corpus has {len(inventory)} entity classes, need {spec.n_way}")
    classes = tuple(sorted(rng.choice(inventory, size=spec.n_way, replace=False).tolist()))

    cap = spec.k_shot if spec.shot_mode == "exact" else 2 * spec.k_shot
    floor = spec.k_shot
    counts = {c: 0 for c in classes}
    order = rng.permutation(len(corpus))
    support_idx: list[int] = []
    for idx in order:
        sent = corpus[idx]
        contrib = {c: 0 for c in classes}
        for _, _, label in sent.gold_spans:
            if label in contrib:
                contrib[label] += 1
        if not any(contrib.values()):
            continue
        if any(counts[c] + contrib[c] > cap for c in classes):
            continue
        support_idx.append(int(idx))
        for c in classes:
            counts[c] += contrib[c]
        if all(counts[c] >= floor for c in classes):
            break
    if any(counts[c] < floor for c in classes):
        short = {c: counts[c] for c in classes if counts[c] < floor}
        raise InfeasibleSamplingError(f"support floors unmet after full pass: {short}")

    taken = set(support_idx)
    query_idx = []
    for idx in order:
        if int(idx) in taken:
            continue
        sent = corpus[idx]
        if any(label in classes for label in sent.labels()):
            query_idx.append(int(idx))
            if len(query_idx) == spec.query_count:
                break
    if len(query_idx) < spec.query_count:
        raise InfeasibleSamplingError(
            f"only {len(query_idx)} query sentences available, need {spec.query_count}")

    support = tuple(_keep_episode_spans(corpus[i], classes) for i in support_idx)
    queries = tuple(_keep_episode_spans(corpus[i], classes) for i in query_idx)
    return Episode(classes, support, queries)


def sample_episodes(corpus: Sequence[Sentence], spec: EpisodeSpec, count: int) -> list[Episode]:
    """``count`` independent episodes with per-episode derived seeds."""
    children = np.random.SeedSequence(spec.seed).spawn(count)
    out = []
    for child in children:
        child_seed = int(child.generate_state(1)[0])
        out.append(sample_episode(corpus, EpisodeSpec(
            spec.n_way, spec.k_shot, spec.shot_mode, spec.query_count, child_seed)))
    return out


def perturb_support(episode: Episode, r_noise: float, seed: int) -> Episode:
    """Relabel a uniform ⌊r_noise * entities⌋ sample of support spans to a
    different in-episode class. Boundaries and queries are untouched."""
    if not 0.0 <= r_noise <= 1.0:
        raise ValueError("r_noise must lie in [0, 1]")
    slots = [(si, gi) for si, sent in enumerate(episode.support)
             for gi in range(len(sent.gold_spans))]
    n_flip = int(r_noise * len(slots))
    if n_flip == 0:
        return episode
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(slots), size=n_flip, replace=False)
    flips: dict[tuple[int, int], str] = {}
    for slot in sorted(int(c) for c in chosen):
        si, gi = slots[slot]
        old = episode.support[si].gold_spans[gi][2]
        alternatives = [c for c in episode.classes if c != old]
        if not alternatives:  # 1-way episode: no different class exists
            continue
        flips[(si, gi)] = alternatives[int(rng.integers(len(alternatives)))]
    support = []
    for si, sent in enumerate(episode.support):
        spans = list(sent.gold_spans)
        for gi, (l, r, _) in enumerate(spans):
            if (si, gi) in flips:
                spans[gi] = (l, r, flips[(si, gi)])
        support.append(sent.with_spans(spans))
    return Episode(episode.classes, tuple(support), episode.queries)


# ---------------------------------------------------------------------------
# JSONL serialization
# ---------------------------------------------------------------------------

def _sentence_rec(sentence: Sentence) -> dict:
    return {"id": sentence.id, "tokens": list(sentence.tokens),
            "spans": [[l, r, label] for l, r, label in sentence.gold_spans]}


def _sentence_from_rec(rec: dict) -> Sentence:
    spans = tuple((int(l), int(r), str(label)) for l, r, label in rec["spans"])
    return Sentence(rec["id"], tuple(rec["tokens"]), spans)


def write_episodes(episodes: Iterable[Episode], stream: IO[str]) -> None:
    for ep in episodes:
        rec = {"classes": list(ep.classes),
               "support": [_sentence_rec(s) for s in ep.support],
               "queries": [_sentence_rec(s) for s in ep.queries]}
        stream.write(json.dumps(rec) + "\n")


def read_episodes(stream: IO[str]) -> list[Episode]:
    episodes = []
    for line in stream:
        if not line.strip():
            continue
        rec = json.loads(line)
        episodes.append(Episode(
            tuple(rec["classes"]),
            tuple(_sentence_from_rec(s) for s in rec["support"]),
            tuple(_sentence_from_rec(s) for s in rec["queries"])))
    return episodes
