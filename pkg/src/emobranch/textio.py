"""Pretrained text embedding files and their frame/context projections.

Two on-disk formats are the contract here:

* word table: plain text, one line per word, ``token v1 v2 ... vD``
  (whitespace separated);
* sentence store: one line per utterance, ``utterance_id<TAB>v1 v2 ... vD``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import FormatError, InvalidAlignment, InvalidInput
from .features import FeatureMatrix, StreamTag

WORD_DIM = 50
SENTENCE_DIM = 768


@dataclass
class WordEmbeddingTable:
    """Case-folded word -> vector lookup with a zero-vector OOV fallback."""

    vectors: dict[str, np.ndarray]
    dim: int

    def lookup(self, word: str) -> np.ndarray:
        vec = self.vectors.get(word.casefold())
        if vec is None:
            return np.zeros(self.dim)
        return vec

    def __contains__(self, word: str) -> bool:
        return word.casefold() in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass
class SentenceEmbeddingStore:
    """Utterance id -> sentence vector map; ids may be missing (ASR failures)."""

    vectors: dict[str, np.ndarray]
    dim: int = SENTENCE_DIM

    def get(self, utt_id: str) -> np.ndarray | None:
        return self.vectors.get(utt_id)

    def __contains__(self, utt_id: str) -> bool:
        return utt_id in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass(frozen=True)
class WordAlignment:
    """One word's time span within an utterance, in milliseconds."""

    word: str
    start_ms: float
    end_ms: float

    def __post_init__(self):
        if not (0.0 <= self.start_ms < self.end_ms):
            raise InvalidAlignment(
                f"word {self.word!r}: need 0 <= start < end, got [{self.start_ms}, {self.end_ms})"
            )


@dataclass
class ContextWindow:
    """Sentence vectors for dialogue positions p-c1 .. p+c2 with a presence mask."""

    vectors: np.ndarray  # (c1 + c2 + 1) x dim
    mask: np.ndarray     # (c1 + c2 + 1,), 1.0 where a vector is present
    span: tuple[int, int]

    @property
    def size(self) -> int:
        return self.vectors.shape[0]


def load_word_table(path: str | Path) -> WordEmbeddingTable:
    """Parse a word table file; duplicate tokens keep the last entry."""
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            fields = line.split()
            if not fields:
                continue
            token, values = fields[0].casefold(), fields[1:]
            if dim is None:
                if not values:
                    raise FormatError(f"{path}:{lineno}: no embedding values")
                dim = len(values)
            if len(values) != dim:
                raise FormatError(
                    f"{path}:{lineno}: expected {dim} values, found {len(values)}"
                )
            try:
                vec = np.array(values, dtype=np.float64)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric value ({exc})") from None
            if token in vectors:
                warnings.warn(f"{path}:{lineno}: duplicate token {token!r}, keeping the last entry")
            vectors[token] = vec
    if dim is None:
        raise FormatError(f"{path}: empty word table")
    return WordEmbeddingTable(vectors, dim)


def save_word_table(path: str | Path, table: Mapping[str, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for token, vec in table.items():
            handle.write(token + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def load_sentence_store(path: str | Path) -> SentenceEmbeddingStore:
    """Parse a sentence store TSV; an empty file is a valid empty store."""
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            fields = line.split()
            utt_id, values = fields[0], fields[1:]
            if utt_id in vectors:
                raise FormatError(f"{path}:{lineno}: duplicate utterance id {utt_id!r}")
            if dim is None:
                if not values:
                    raise FormatError(f"{path}:{lineno}: no embedding values")
                dim = len(values)
            if len(values) != dim:
                raise FormatError(
                    f"{path}:{lineno}: expected {dim} values, found {len(values)}"
                )
            try:
                vectors[utt_id] = np.array(values, dtype=np.float64)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric value ({exc})") from None
    if dim is None:
        warnings.warn(f"{path}: empty sentence store")
        return SentenceEmbeddingStore({}, SENTENCE_DIM)
    return SentenceEmbeddingStore(vectors, dim)


def save_sentence_store(path: str | Path, vectors: Mapping[str, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for utt_id, vec in vectors.items():
            handle.write(utt_id + "\t" + " ".join(repr(float(v)) for v in vec) + "\n")


def words_to_frames(alignments: Sequence[WordAlignment], table: WordEmbeddingTable,
                    t_count: int, frame_shift_ms: float) -> FeatureMatrix:
    """Per-frame word vectors: frame t carries the vector of the word whose
    half-open span ``[start, end)`` contains the frame center ``t * shift``;
    frames inside no word carry the zero vector.
    """
    if t_count < 1:
        raise InvalidInput(f"frame count must be >= 1, got {t_count}")
    ordered = sorted(alignments, key=lambda a: a.start_ms)
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start_ms < prev.end_ms:
            raise InvalidAlignment(
                f"words {prev.word!r} and {cur.word!r} overlap "
                f"([{prev.start_ms}, {prev.end_ms}) vs [{cur.start_ms}, {cur.end_ms}))"
            )
    out = np.zeros((t_count, table.dim))
    centers = np.arange(t_count) * frame_shift_ms
    for alignment in ordered:
        inside = (centers >= alignment.start_ms) & (centers < alignment.end_ms)
        if inside.any():
            out[inside] = table.lookup(alignment.word)
    return FeatureMatrix(out, frame_shift_ms, StreamTag.COMBINED)


def assemble_context(store: SentenceEmbeddingStore, dialogue: Sequence[str],
                     position: int, span: tuple[int, int]) -> ContextWindow:
    """Context window of sentence vectors around one dialogue position.

    Slots outside the dialogue or absent from the store (e.g. utterances
    with no usable ASR output) are zero vectors with ``mask = 0``; the
    window always includes a slot for the center utterance itself.
    """
    c_before, c_after = span
    if c_before < 0 or c_after < 0:
        raise InvalidInput(f"span components must be nonnegative, got {span}")
    if not 0 <= position < len(dialogue):
        raise InvalidInput(
            f"position {position} outside dialogue of {len(dialogue)} utterances"
        )
    size = c_before + c_after + 1
    vectors = np.zeros((size, store.dim))
    mask = np.zeros(size)
    for slot, q in enumerate(range(position - c_before, position + c_after + 1)):
        if 0 <= q < len(dialogue):
            vec = store.get(dialogue[q])
            if vec is not None:
                vectors[slot] = vec
                mask[slot] = 1.0
    return ContextWindow(vectors, mask, (c_before, c_after))
