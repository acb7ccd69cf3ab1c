"""Turning a manifest plus embedding files into ready model inputs."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import featio
from .audio import read_wav
from .errors import InvalidInput, MissingData
from .features import (FeatureMatrix, FramingSpec, StreamTag, append_deltas,
                       concat_streams, extract_fbank, normalize_features)
from .manifest import UtteranceRecord, dialogue_order, read_manifest
from .model import ModelInput
from .pitch import extract_pitch
from .textio import (SentenceEmbeddingStore, WordEmbeddingTable,
                     assemble_context, load_sentence_store, load_word_table,
                     words_to_frames)

AUDIO_FEATURES = ("audio25", "fbk250")
ALL_FEATURES = ("audio25", "fbk250", "glove", "bert")
TEXT_SOURCES = ("ref", "asr")

SHORT_SPEC = FramingSpec(frame_shift_ms=10.0, frame_length_ms=25.0)
LONG_SPEC = FramingSpec(frame_shift_ms=10.0, frame_length_ms=250.0)


def extract_audio25(path: str | Path) -> FeatureMatrix:
    """82-d stream: 40-d short-window log filterbanks + pitch, with deltas."""
    signal = read_wav(path)
    fbk = extract_fbank(signal, SHORT_SPEC, stream_tag=StreamTag.FBK25)
    pitch = extract_pitch(signal, SHORT_SPEC)
    return append_deltas(concat_streams([fbk, pitch]))


def extract_fbk250(path: str | Path) -> FeatureMatrix:
    """40-d long-window log filterbank stream on the same 10 ms grid."""
    return extract_fbank(read_wav(path), LONG_SPEC, stream_tag=StreamTag.FBK250)


@dataclass
class CorpusData:
    """All per-utterance model inputs for one manifest, ready to assemble."""

    records: list[UtteranceRecord]
    features: tuple[str, ...]
    streams: dict[str, dict[str, np.ndarray]]          # stream -> utt_id -> T x D
    stores: dict[str, SentenceEmbeddingStore] = field(default_factory=dict)
    dialogues: dict[str, list[str]] = field(default_factory=dict)
    positions: dict[str, int] = field(default_factory=dict)

    @property
    def by_id(self) -> dict[str, UtteranceRecord]:
        return {r.utt_id: r for r in self.records}


def _resolve(path: str, base: Path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else base / p


def build_corpus(manifest_path: str | Path,
                 features: Sequence[str] = ("audio25", "bert"),
                 word_table_path: str | Path | None = None,
                 ref_store_path: str | Path | None = None,
                 asr_store_path: str | Path | None = None,
                 feature_dir: str | Path | None = None) -> CorpusData:
    """Load a manifest and materialize every requested feature stream.

    Audio streams are extracted from the manifest's WAV files (or loaded
    from ``feature_dir`` when it holds pre-extracted files) and then pass
    through dialogue-level variance normalization plus utterance-level mean
    subtraction. Word-vector frames come from the reference alignments;
    sentence stores are loaded for whichever sources exist. Paths default
    to the layout the synthesizer writes next to the manifest
    (``embeddings/ref.tsv``, ``embeddings/asr.tsv``, ``word_table.txt``).
    """
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    for name in features:
        if name not in ALL_FEATURES:
            raise InvalidInput(f"unknown feature {name!r} (expected one of {ALL_FEATURES})")
    records = read_manifest(manifest_path)
    if not records:
        raise InvalidInput(f"{manifest_path}: empty manifest")
    dialogues = dialogue_order(records)
    positions = {utt: i for utts in dialogues.values() for i, utt in enumerate(utts)}
    dialogue_of = {r.utt_id: r.dialogue_id for r in records}

    streams: dict[str, dict[str, np.ndarray]] = {}
    extractors = {"audio25": extract_audio25, "fbk250": extract_fbk250}
    for name in AUDIO_FEATURES:
        if name not in features:
            continue
        raw: dict[str, FeatureMatrix] = {}
        for record in records:
            feat_file = None
            if feature_dir is not None:
                feat_file = Path(feature_dir) / f"{record.utt_id}.{name}.feat"
            if feat_file is not None and feat_file.exists():
                raw[record.utt_id] = featio.read_features(feat_file)
            else:
                raw[record.utt_id] = extractors[name](_resolve(record.audio_path, base))
        normalized = normalize_features(raw, dialogue_of)
        streams[name] = {utt: feat.values for utt, feat in normalized.items()}

    if "glove" in features:
        table_path = _resolve(str(word_table_path), base) if word_table_path \
            else base / "word_table.txt"
        if not Path(table_path).exists():
            raise MissingData(f"word table not found at {table_path}")
        table = load_word_table(table_path)
        glove: dict[str, np.ndarray] = {}
        for record in records:
            t_count = _frame_count(record, streams, base)
            mat = words_to_frames(record.ref_alignments, table, t_count,
                                  SHORT_SPEC.frame_shift_ms)
            glove[record.utt_id] = mat.values
        streams["glove"] = glove

    stores: dict[str, SentenceEmbeddingStore] = {}
    if "bert" in features:
        defaults = {"ref": base / "embeddings" / "ref.tsv",
                    "asr": base / "embeddings" / "asr.tsv"}
        explicit = {"ref": ref_store_path, "asr": asr_store_path}
        for source in TEXT_SOURCES:
            path = _resolve(str(explicit[source]), base) if explicit[source] \
                else defaults[source]
            if Path(path).exists():
                stores[source] = load_sentence_store(path)

    return CorpusData(records=records, features=tuple(features), streams=streams,
                      stores=stores, dialogues=dialogues, positions=positions)


def _frame_count(record: UtteranceRecord, streams: Mapping[str, Mapping[str, np.ndarray]],
                 base: Path) -> int:
    for name in AUDIO_FEATURES:
        if name in streams and record.utt_id in streams[name]:
            return streams[name][record.utt_id].shape[0]
    signal = read_wav(_resolve(record.audio_path, base))
    return signal.samples.size // SHORT_SPEC.shift_samples(signal.sample_rate)


def assemble_inputs(corpus: CorpusData,
                    labeled: Sequence[tuple[UtteranceRecord, int]],
                    span: tuple[int, int] = (3, 3),
                    text_source: str = "ref") -> list[ModelInput]:
    """Build ModelInput objects for labeled records under one text source.

    ``text_source`` selects which sentence-embedding store fills the context
    windows; it does not affect the frame-level streams (word-vector frames
    always come from the reference alignments, so callers must reject
    configurations that would need ASR-side alignments).
    """
    if text_source not in TEXT_SOURCES:
        raise InvalidInput(f"unknown text source {text_source!r}")
    use_context = "bert" in corpus.features
    if use_context and text_source not in corpus.stores:
        raise MissingData(f"no sentence store loaded for source {text_source!r}")
    tsb_streams = [f for f in corpus.features if f in ("audio25", "fbk250", "glove")]
    out = []
    for record, label in labeled:
        streams = {name: corpus.streams[name][record.utt_id] for name in tsb_streams}
        context = None
        if use_context:
            context = assemble_context(
                corpus.stores[text_source],
                corpus.dialogues[record.dialogue_id],
                corpus.positions[record.utt_id],
                span,
            )
        out.append(ModelInput(utt_id=record.utt_id, streams=streams,
                              context=context, label=label))
    return out
