"""Sentence ingestion (BIO), the frozen token-embedding store, and the
deterministic synthetic embedder used as the default test encoder."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

Span = tuple[int, int, str]  # (l, r, label), token indices, inclusive


class BioParseError(ValueError):
    pass


class NotBioRepresentableError(ValueError):
    pass


class EmbeddingFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Sentence:
    """Tokens plus gold span annotations; indices are 0-based inclusive."""

    id: str
    tokens: tuple[str, ...]
    gold_spans: tuple[Span, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "gold_spans", tuple(tuple(s) for s in self.gold_spans))
        n = len(self.tokens)
        for l, r, label in self.gold_spans:
            if not (0 <= l <= r < n):
                raise ValueError(f"span ({l},{r}) out of range for {n} tokens in {self.id!r}")
            if not label:
                raise ValueError(f"empty span label in sentence {self.id!r}")

    @property
    def nested(self) -> bool:
        """True when any two gold spans overlap (nested-mode sentences)."""
        spans = sorted((l, r) for l, r, _ in self.gold_spans)
        return any(spans[i][1] >= spans[i + 1][0] for i in range(len(spans) - 1))

    def labels(self) -> set[str]:
        return {label for _, _, label in self.gold_spans}

    def with_spans(self, spans: Sequence[Span]) -> "Sentence":
        return Sentence(self.id, self.tokens, tuple(spans))


def parse_bio(stream: Iterable[str]) -> list[Sentence]:
    """Parse token<TAB>tag lines into sentences.

    Tags must be O, B-X or I-X. A dangling I-X (no matching open span)
    opens a new X span, the lenient CoNLL convention.
    """
    sentences: list[Sentence] = []
    tokens: list[str] = []
    tags: list[str] = []

    def flush():
        if tokens:
            sid = f"s{len(sentences)}"
            sentences.append(Sentence(sid, tuple(tokens), tuple(_tags_to_spans(tags))))
            tokens.clear()
            tags.clear()

    for lineno, raw in enumerate(stream, 1):
        line = raw.rstrip("\n")
        if not line.strip():
            flush()
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise BioParseError(f"line {lineno}: expected TOKEN<TAB>TAG, got {line!r}")
        token, tag = parts
        if tag != "O" and not (tag.startswith(("B-", "I-")) and len(tag) > 2):
            raise BioParseError(f"line {lineno}: malformed BIO tag {tag!r}")
        tokens.append(token)
        tags.append(tag)
    flush()
    return sentences


def _tags_to_spans(tags: Sequence[str]) -> list[Span]:
    spans: list[Span] = []
    start = None
    label = None
    for i, tag in enumerate(tags):
        if tag == "O":
            if start is not None:
                spans.append((start, i - 1, label))
                start = None
            continue
        prefix, name = tag.split("-", 1)
        if prefix == "B" or start is None or name != label:
            if start is not None:
                spans.append((start, i - 1, label))
            start, label = i, name
    if start is not None:
        spans.append((start, len(tags) - 1, label))
    return spans


def spans_to_bio(sentence: Sentence) -> list[str]:
    """Inverse of parse_bio for non-nested sentences."""
    if sentence.nested:
        raise NotBioRepresentableError(
            f"sentence {sentence.id!r} has overlapping spans; not BIO-representable")
    tags = ["O"] * len(sentence.tokens)
    for l, r, label in sorted(sentence.gold_spans):
        tags[l] = f"B-{label}"
        for i in range(l + 1, r + 1):
            tags[i] = f"I-{label}"
    return tags


def write_bio(sentences: Iterable[Sentence], stream: IO[str]) -> None:
    for sent in sentences:
        for token, tag in zip(sent.tokens, spans_to_bio(sent)):
            stream.write(f"{token}\t{tag}\n")
        stream.write("\n")


# ---------------------------------------------------------------------------
# Embedding store (interchange JSONL)
# ---------------------------------------------------------------------------

class EmbeddingStore:
    """Frozen per-sentence token-vector matrices, keyed by sentence id."""

    def __init__(self, dim: int):
        self.dim = dim
        self._matrices: dict[str, np.ndarray] = {}

    def add(self, sentence_id: str, matrix: np.ndarray) -> None:
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != self.dim:
            raise EmbeddingFormatError(
                f"record {sentence_id!r}: expected width {self.dim}, got {matrix.shape}")
        self._matrices[sentence_id] = matrix

    def __contains__(self, sentence_id: str) -> bool:
        return sentence_id in self._matrices

    def __len__(self) -> int:
        return len(self._matrices)

    def matrix_for(self, sentence: Sentence) -> np.ndarray:
        if sentence.id not in self._matrices:
            raise KeyError(f"no embeddings for sentence id {sentence.id!r}")
        matrix = self._matrices[sentence.id]
        if matrix.shape[0] != len(sentence.tokens):
            raise EmbeddingFormatError(
                f"record {sentence.id!r}: {matrix.shape[0]} vectors for "
                f"{len(sentence.tokens)} tokens")
        return matrix


def load_embeddings(path) -> EmbeddingStore:
    """Read the JSONL interchange format; rejects malformed records."""
    store: EmbeddingStore | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EmbeddingFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            for key in ("id", "tokens", "dim", "vectors"):
                if key not in rec:
                    raise EmbeddingFormatError(f"{path}:{lineno}: missing field {key!r}")
            if len(rec["vectors"]) != len(rec["tokens"]):
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: record {rec['id']!r} has {len(rec['vectors'])} "
                    f"vectors for {len(rec['tokens'])} tokens")
            if store is None:
                store = EmbeddingStore(int(rec["dim"]))
            elif int(rec["dim"]) != store.dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: dimension {rec['dim']} differs from {store.dim}")
            matrix = np.asarray(rec["vectors"], dtype=np.float64)
            if matrix.size and matrix.shape[1] != int(rec["dim"]):
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: vector width {matrix.shape[1]} != dim {rec['dim']}")
            store.add(rec["id"], matrix.reshape(len(rec["tokens"]), int(rec["dim"])))
    if store is None:
        raise EmbeddingFormatError(f"{path}: no embedding records found")
    return store


def write_embeddings(records: Iterable[tuple[Sentence, np.ndarray]], stream: IO[str]) -> None:
    """Emit interchange JSONL; values are written at 32-bit precision."""
    for sentence, matrix in records:
        if matrix.shape[0] != len(sentence.tokens):
            raise EmbeddingFormatError(
                f"record {sentence.id!r}: {matrix.shape[0]} vectors for "
                f"{len(sentence.tokens)} tokens")
        vectors = [[float(np.float32(v)) for v in row] for row in matrix]
        rec = {"id": sentence.id, "tokens": list(sentence.tokens),
               "dim": matrix.shape[1], "vectors": vectors}
        stream.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------------------
# Synthetic embedder (desk-scale test substrate)
# ---------------------------------------------------------------------------

def _hash_rng(seed: int, *parts: str) -> np.random.Generator:
    h = hashlib.blake2b(digest_size=8)
    h.update(str(seed).encode())
    for p in parts:
        h.update(b"\x1f")
        h.update(p.encode())
    return np.random.default_rng(int.from_bytes(h.digest(), "little"))


@dataclass(frozen=True)
class SyntheticEmbedder:
    """Deterministic class-anchored token vectors.

    Tokens inside a gold span of class ``c`` map to that class's anchor
    plus small token-keyed noise; all other tokens map to token-keyed
    noise alone. Two structural components mimic a contextual encoder at
    desk scale:

    * the anchor is rotated slightly toward a boundary-role direction
      (span start / end / interior / single-token), shared across classes,
      so span boundaries are identifiable;
    * half of the token-noise budget goes to one of two per-token
      "dialect" directions, so instances of a class form two sub-clusters
      and query-conditioned aggregation has something to exploit.

    ``anchor_overlap`` blends a shared direction into every class anchor
    so classes are only partially separated.
    """

    dim: int = 32
    seed: int = 0
    anchor_overlap: float = 0.0
    noise_scale: float = 0.1
    role_scale: float = 0.25

    def _unit(self, *parts: str) -> np.ndarray:
        v = _hash_rng(self.seed, *parts).standard_normal(self.dim)
        return v / np.linalg.norm(v)

    def class_direction(self, label: str) -> np.ndarray:
        v = self._unit("anchor", label)
        if self.anchor_overlap > 0.0:
            shared = self._unit("shared-anchor")
            v = math.sqrt(self.anchor_overlap) * shared \
                + math.sqrt(1.0 - self.anchor_overlap) * v
            v /= np.linalg.norm(v)
        return v

    def anchor(self, label: str, first: bool = True, last: bool = True) -> np.ndarray:
        if first and last:
            role = (self._unit("role", "S") + self._unit("role", "E")) / math.sqrt(2.0)
        elif first:
            role = self._unit("role", "S")
        elif last:
            role = self._unit("role", "E")
        else:
            role = self._unit("role", "M")
        v = self.class_direction(label) + self.role_scale * role
        return v / np.linalg.norm(v)

    def _token_noise(self, token: str) -> np.ndarray:
        dialect = self._unit("dialect", str(sum(token.encode()) % 2))
        v = _hash_rng(self.seed, "token-noise", token).standard_normal(self.dim)
        mixed = dialect + v / np.linalg.norm(v)
        return mixed * (self.noise_scale / np.linalg.norm(mixed))

    def _filler(self, token: str) -> np.ndarray:
        return self._unit("filler", token)

    def matrix_for(self, sentence: Sentence) -> np.ndarray:
        out = np.empty((len(sentence.tokens), self.dim))
        role_at: dict[int, tuple[str, bool, bool]] = {}
        for l, r, label in sentence.gold_spans:
            for i in range(l, r + 1):
                role_at[i] = (label, i == l, i == r)
        for i, token in enumerate(sentence.tokens):
            if i in role_at:
                label, first, last = role_at[i]
                out[i] = self.anchor(label, first, last) + self._token_noise(token)
            else:
                out[i] = self._filler(token)
        return out


def synth_embed(sentence: Sentence, class_seed: int, dim: int = 32,
                anchor_overlap: float = 0.0) -> np.ndarray:
    """Deterministic (sentence, seed) -> token-vector matrix."""
    return SyntheticEmbedder(dim=dim, seed=class_seed,
                             anchor_overlap=anchor_overlap).matrix_for(sentence)


@dataclass(frozen=True)
class SyntheticCorpusConfig:
    classes: tuple[str, ...]
    sentences: int = 100
    seed: int = 0
    min_sentence_len: int = 8
    max_sentence_len: int = 12
    min_entity_len: int = 2
    max_entity_len: int = 3
    max_entities: int = 2
    entity_vocab: int = 6
    filler_vocab: int = 40


def make_synthetic_corpus(cfg: SyntheticCorpusConfig) -> list[Sentence]:
    """Random sentences with class-tagged entity tokens and filler tokens.

    Entity tokens are drawn from a small per-class pool so the same surface
    forms recur across support and query sentences.
    """
    rng = np.random.default_rng(cfg.seed)
    sentences = []
    for i in range(cfg.sentences):
        n = int(rng.integers(cfg.min_sentence_len, cfg.max_sentence_len + 1))
        tokens = [f"w{int(rng.integers(cfg.filler_vocab))}" for _ in range(n)]
        spans: list[Span] = []
        cursor = 0
        n_entities = int(rng.integers(1, cfg.max_entities + 1))
        for _ in range(n_entities):
            length = int(rng.integers(cfg.min_entity_len, cfg.max_entity_len + 1))
            if cursor + length > n:
                break
            start = cursor + int(rng.integers(0, max(1, n - cursor - length + 1)))
            if start + length > n:
                break
            label = cfg.classes[int(rng.integers(len(cfg.classes)))]
            for j in range(length):
                tokens[start + j] = f"{label.lower()}_t{int(rng.integers(cfg.entity_vocab))}"
            spans.append((start, start + length - 1, label))
            cursor = start + length + 1
        if not spans:
            label = cfg.classes[int(rng.integers(len(cfg.classes)))]
            length = min(cfg.min_entity_len, n)
            for j in range(length):
                tokens[j] = f"{label.lower()}_t{int(rng.integers(cfg.entity_vocab))}"
            spans.append((0, length - 1, label))
        sentences.append(Sentence(f"syn{cfg.seed}-{i}", tuple(tokens), tuple(spans)))
    return sentences
