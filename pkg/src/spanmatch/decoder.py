"""Span-conflict resolution: IoU, multiplicative score decay, Beam
Soft-NMS and its ablation variants, plus an exhaustive search oracle."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Callable, IO, Iterable, Optional, Sequence

DecayFn = Callable[[float, int], float]  # (original score, conflict count) -> decayed

MODES = ("bsnms", "softnms", "beam", "none")
PATH_COMBINERS = ("sum", "product")


@dataclass(frozen=True)
class ScoredSpan:
    l: int
    r: int
    label: str
    score: float

    @property
    def span(self) -> tuple[int, int]:
        return (self.l, self.r)


@dataclass(frozen=True)
class DecoderConfig:
    beam_size: int = 5
    filter_threshold: float = 0.1   # delta: a span joins only if decayed score exceeds this
    iou_threshold: float = 1e-5     # k: overlap at or above this counts as a conflict
    decay: float = 1e-5             # u: multiplicative decay per conflicting accepted span
    mode: str = "bsnms"
    path_combiner: str = "sum"

    def __post_init__(self):
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay ratio must lie in (0, 1]")
        if not 0.0 <= self.filter_threshold < 1.0:
            raise ValueError("filter threshold must lie in [0, 1)")
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError("IoU threshold must lie in (0, 1]")
        if self.beam_size < 1:
            raise ValueError("beam size must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.path_combiner not in PATH_COMBINERS:
            raise ValueError(f"path_combiner must be one of {PATH_COMBINERS}")

    @classmethod
    def nested(cls, **overrides) -> "DecoderConfig":
        """Preset tuned for nested decoding: k=0.1, delta=0.1, u=0.4."""
        base = dict(iou_threshold=0.1, filter_threshold=0.1, decay=0.4)
        base.update(overrides)
        return cls(**base)


def iou(a: tuple[int, int], b: tuple[int, int]) -> float:
    """Token-set Jaccard overlap of two inclusive index ranges."""
    inter = min(a[1], b[1]) - max(a[0], b[0]) + 1
    if inter <= 0:
        return 0.0
    union = (a[1] - a[0] + 1) + (b[1] - b[0] + 1) - inter
    return inter / union


def decayed_score(span: tuple[int, int], score: float,
                  accepted: Iterable[tuple[int, int]], cfg: DecoderConfig) -> float:
    """score * u^eta where eta counts accepted spans with IoU >= k."""
    eta = sum(1 for other in accepted if iou(span, other) >= cfg.iou_threshold)
    return score * cfg.decay ** eta


@dataclass(frozen=True)
class DecodeState:
    """A set of accepted candidate indices with decayed-at-acceptance scores.

    ``members`` is the canonical sorted tuple; ``path_score`` combines the
    stored decayed scores (sum by default).
    """

    members: tuple[int, ...]
    decayed: tuple[float, ...]  # aligned with members
    path_score: float


def _canonical(candidates: Sequence[ScoredSpan]) -> list[int]:
    """Candidate ordering used for indices and tie-breaking: score-major."""
    return sorted(range(len(candidates)),
                  key=lambda i: (-candidates[i].score, candidates[i].l,
                                 candidates[i].r, candidates[i].label))


def _combine(path: float, dec: float, combiner: str) -> float:
    return path + dec if combiner == "sum" else path * dec


def _expansions(members: tuple[int, ...], cands: Sequence[ScoredSpan],
                cfg: DecoderConfig, decay_fn: Optional[DecayFn],
                hard: bool) -> list[tuple[int, float]]:
    """Admissible (candidate index, decayed score) additions to a state."""
    member_set = set(members)
    out = []
    for i, cand in enumerate(cands):
        if i in member_set:
            continue
        eta = sum(1 for t in members
                  if iou(cand.span, cands[t].span) >= cfg.iou_threshold)
        if hard and eta > 0:
            continue
        dec = decay_fn(cand.score, eta) if decay_fn else cand.score * cfg.decay ** eta
        if dec > cfg.filter_threshold:
            out.append((i, dec))
    return out


def _insert_sorted(state: DecodeState, idx: int, dec: float,
                   combiner: str) -> DecodeState:
    merged = sorted(zip(state.members + (idx,), state.decayed + (dec,)))
    members = tuple(m for m, _ in merged)
    decayed = tuple(d for _, d in merged)
    return DecodeState(members, decayed, _combine(state.path_score, dec, combiner))


def _beam_search(cands: Sequence[ScoredSpan], cfg: DecoderConfig,
                 decay_fn: Optional[DecayFn], hard: bool,
                 beam_size: int) -> Optional[DecodeState]:
    """Shared transition system for bsnms/beam modes.

    Singleton states obey the same admissibility rule as expansions (a
    lone span must itself clear the filter threshold). States that expand
    are replaced by their children; states that cannot expand persist and
    stay eligible for final selection. Duplicate member-sets keep the
    larger path score.
    """
    def prune(states: dict[tuple[int, ...], DecodeState]) -> list[DecodeState]:
        ordered = sorted(states.values(), key=lambda s: (-s.path_score, s.members))
        return ordered[:beam_size]

    init: dict[tuple[int, ...], DecodeState] = {}
    for i, cand in enumerate(cands):
        if cand.score > cfg.filter_threshold:
            init[(i,)] = DecodeState((i,), (cand.score,), cand.score)
    pool = prune(init)

    while pool:
        nxt: dict[tuple[int, ...], DecodeState] = {}

        def merge(state: DecodeState) -> None:
            prev = nxt.get(state.members)
            if prev is None or state.path_score > prev.path_score:
                nxt[state.members] = state

        expanded_any = False
        for state in pool:
            exps = _expansions(state.members, cands, cfg, decay_fn, hard)
            if exps:
                expanded_any = True
                for i, dec in exps:
                    merge(_insert_sorted(state, i, dec, cfg.path_combiner))
            else:
                merge(state)
        pool = prune(nxt)
        if not expanded_any:
            break

    if not pool:
        return None
    return min(pool, key=lambda s: (-s.path_score, s.members))


def bsnms(predictions: Sequence[ScoredSpan], cfg: DecoderConfig,
          decay_fn: Optional[DecayFn] = None) -> list[ScoredSpan]:
    """Beam Soft-NMS over non-O scored spans; returns the accepted spans."""
    cands = [predictions[i] for i in _canonical(predictions)]
    best = _beam_search(cands, cfg, decay_fn, hard=False, beam_size=cfg.beam_size)
    return [] if best is None else [cands[i] for i in best.members]


def beam_decode(predictions: Sequence[ScoredSpan], cfg: DecoderConfig) -> list[ScoredSpan]:
    """Hard-conflict variant: any IoU >= k against the state is inadmissible."""
    cands = [predictions[i] for i in _canonical(predictions)]
    best = _beam_search(cands, cfg, None, hard=True, beam_size=cfg.beam_size)
    return [] if best is None else [cands[i] for i in best.members]


def softnms(predictions: Sequence[ScoredSpan], cfg: DecoderConfig) -> list[ScoredSpan]:
    """Greedy Soft-NMS: accept the best remaining span while it clears the
    filter, decaying every conflicting remaining score per acceptance."""
    order = _canonical(predictions)
    cands = [predictions[i] for i in order]
    scores = [c.score for c in cands]
    remaining = list(range(len(cands)))
    accepted: list[int] = []
    while remaining:
        best = max(remaining, key=lambda i: (scores[i], -i))
        if scores[best] <= cfg.filter_threshold:
            break
        remaining.remove(best)
        accepted.append(best)
        for i in remaining:
            if iou(cands[i].span, cands[best].span) >= cfg.iou_threshold:
                scores[i] *= cfg.decay
    return [cands[i] for i in sorted(accepted)]


def exhaustive_oracle(predictions: Sequence[ScoredSpan], cfg: DecoderConfig,
                      max_candidates: int = 10) -> list[ScoredSpan]:
    """Unbounded-beam reference: dynamic program over every reachable
    member-set, maximizing path score over insertion orders, then the best
    terminal set under the same tie rule. Exponential; refuses large inputs.
    """
    if len(predictions) > max_candidates:
        raise ValueError(f"oracle refuses {len(predictions)} candidates "
                         f"(limit {max_candidates})")
    cands = [predictions[i] for i in _canonical(predictions)]
    n = len(cands)

    best: dict[frozenset, float] = {}
    by_size: list[list[frozenset]] = [[] for _ in range(n + 1)]
    for i, cand in enumerate(cands):
        if cand.score > cfg.filter_threshold:
            s = frozenset((i,))
            best[s] = cand.score
            by_size[1].append(s)

    terminals: list[tuple[float, tuple[int, ...]]] = []
    for size in range(1, n + 1):
        for members in by_size[size]:
            exps = _expansions(tuple(sorted(members)), cands, cfg, None, hard=False)
            if not exps:
                terminals.append((best[members], tuple(sorted(members))))
                continue
            for i, dec in exps:
                child = members | {i}
                path = _combine(best[members], dec, cfg.path_combiner)
                if child not in best:
                    best[child] = path
                    by_size[size + 1].append(child)
                elif path > best[child]:
                    best[child] = path
    if not terminals:
        return []
    _, members = min(terminals, key=lambda t: (-t[0], t[1]))
    return [cands[i] for i in members]


def decode(predictions: Sequence, cfg: DecoderConfig) -> list[ScoredSpan]:
    """Mode dispatch over the non-O candidates of one sentence."""
    cands = [_as_scored(p) for p in predictions if _label_of(p) != "O"]
    if cfg.mode == "none":
        return sorted(cands, key=lambda c: (c.l, c.r, c.label))
    if cfg.mode == "softnms":
        return softnms(cands, cfg)
    if cfg.mode == "beam":
        return beam_decode(cands, cfg)
    return bsnms(cands, cfg)


def _label_of(p) -> str:
    return p.label


def _as_scored(p) -> ScoredSpan:
    if isinstance(p, ScoredSpan):
        return p
    l, r = p.span
    return ScoredSpan(int(l), int(r), p.label, float(p.score))


# ---------------------------------------------------------------------------
# Standalone scored-span interchange (JSONL)
# ---------------------------------------------------------------------------

def decode_stream(instream: IO[str], outstream: IO[str], base: DecoderConfig) -> int:
    """Decode one JSON record per line; per-record config overrides the base.

    Input:  {"spans": [{"l", "r", "label", "score"}, ...], "config": {...}}
    Output: {"accepted": [{"l", "r", "label"}, ...]}
    Returns the number of records processed.
    """
    count = 0
    for line in instream:
        if not line.strip():
            continue
        rec = json.loads(line)
        cfg = base
        overrides = rec.get("config", {})
        if overrides:
            cfg = replace(base, **{_CONFIG_KEYS[k]: v for k, v in overrides.items()})
        spans = [ScoredSpan(int(s["l"]), int(s["r"]), str(s["label"]), float(s["score"]))
                 for s in rec["spans"]]
        accepted = decode(spans, cfg)
        outstream.write(json.dumps(
            {"accepted": [{"l": s.l, "r": s.r, "label": s.label} for s in accepted]}) + "\n")
        count += 1
    return count


_CONFIG_KEYS = {
    "beam_size": "beam_size", "b": "beam_size",
    "filter_threshold": "filter_threshold", "delta": "filter_threshold",
    "iou_threshold": "iou_threshold", "k": "iou_threshold",
    "decay": "decay", "u": "decay",
    "mode": "mode", "path_combiner": "path_combiner",
}
