"""Synthetic desk-scale corpus with a controlled division of labor.

Every utterance carries two independent factors:

* an acoustic contour (rising vs falling pitch sweep) audible only in the
  waveform, and
* a lexical valence (positive vs negative vocabulary) visible only in the
  token sequence and therefore in the sentence embeddings.

The class label is ``2 * contour + valence``. "Ambiguous" utterances use a
fixed non-valenced phrase; their valence, and hence their label, is
inherited from the previous utterance's tokens, so resolving them requires
dialogue context. Dialogues are built from mirrored positive/negative runs,
which keeps labels balanced by construction, per session and within the
ambiguous subset.

A configurable fraction of utterances gets an empty ASR transcript and no
entry in the ASR-side sentence store. Failure slots are chosen only at run
positions whose in-dialogue neighbors carry the same valence, so a model
with a context window can recover what a context-free model cannot.
"""
from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioSignal, write_wav
from .errors import InvalidInput
from .manifest import UtteranceRecord, write_manifest
from .textio import WordAlignment, save_sentence_store, save_word_table

SAMPLE_RATE = 16000
FRAME_MS = 10
SENTENCE_DIM = 768
WORD_DIM = 50

POS_WORDS = ("glad", "bright", "sweet", "warm", "lucky", "cheer", "shine", "win")
NEG_WORDS = ("bleak", "harsh", "bitter", "cold", "gloomy", "drag", "ache", "lose")
FILLER_WORDS = ("so", "well", "then", "quite")
AMBIGUOUS_TOKENS = ("yes", "exactly")
AMBIGUOUS_PHRASE = " ".join(AMBIGUOUS_TOKENS)

RISING, FALLING = 1, 0
F0_LOW, F0_HIGH = 150.0, 250.0

# raw label for (contour, valence); a slice of rising-positive utterances is
# emitted as "excited" to exercise the merge in the four-way label scheme
RAW_LABEL = {(RISING, 1): "happy", (RISING, 0): "angry",
             (FALLING, 1): "neutral", (FALLING, 0): "sad"}
ACOUSTIC_OF_RAW = {"happy": RISING, "excited": RISING, "angry": RISING,
                   "neutral": FALLING, "sad": FALLING}

# run templates: "L" = lexical utterance, "A" = ambiguous; every "A" follows
# a lexical utterance, and the 4-slot template has an interior slot (index 1)
# whose dialogue neighbors are both lexical with the same valence; those
# slots are the ASR-failure candidates
TEMPLATES = {2: ("L", "A"), 3: ("L", "A", "L"), 4: ("L", "L", "L", "A")}
FAILURE_TEMPLATE_LEN = 4
FAILURE_SLOT = 1


def _word_seed(salt: str, word: str) -> int:
    digest = hashlib.sha256(f"{salt}:{word}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def word_vector(word: str, dim: int, salt: str) -> np.ndarray:
    """Deterministic pseudo-embedding for a word (stable across runs)."""
    rng = np.random.default_rng(_word_seed(salt, word))
    return rng.standard_normal(dim) / np.sqrt(dim)


def sentence_vector(tokens: tuple[str, ...]) -> np.ndarray:
    """Sentence embedding: the mean of its word vectors."""
    vecs = [word_vector(tok, SENTENCE_DIM, "sent768") for tok in tokens]
    return np.mean(vecs, axis=0)


def _template_lengths(per_valence: int) -> list[int]:
    """Template length multiset summing to the per-valence utterance budget.

    Includes one 4-slot run (the ASR-failure candidate template) whenever the
    budget allows, then tiles the remainder with 2- and 3-slot runs.
    """
    lengths: list[int] = []
    remaining = per_valence
    if remaining >= 4 and remaining - 4 != 1:
        lengths.append(4)
        remaining -= 4
    while remaining > 0:
        if remaining == 3 or remaining % 2 == 1:
            lengths.append(3)
            remaining -= 3
        else:
            lengths.append(2)
            remaining -= 2
    if remaining != 0:
        raise InvalidInput(f"cannot tile {per_valence} utterances per valence")
    return lengths


@dataclass
class _UttPlan:
    dialogue: int
    session: int
    position: int
    ambiguous: bool
    valence: int
    contour: int = 0
    failure_candidate: bool = False
    asr_failed: bool = False
    tokens: tuple[str, ...] = ()


@dataclass
class SynthCorpus:
    """Paths and bookkeeping for one generated corpus."""

    out_dir: Path
    manifest_path: Path
    word_table_path: Path
    ref_store_path: Path
    asr_store_path: Path
    n_utterances: int
    n_failures: int
    class_counts: dict[str, int] = field(default_factory=dict)


def generate(out_dir: str | Path, seed: int = 0, n_dialogues: int = 50,
             utterances_per_dialogue: int = 12, asr_failure_rate: float = 0.1,
             n_sessions: int = 5) -> SynthCorpus:
    """Write a complete synthetic corpus under ``out_dir``.

    Produces the manifest, one WAV per utterance, reference and ASR sentence
    stores, and a word table, all in the engine's documented formats; output
    is byte-identical for identical arguments.
    """
    if n_dialogues < 1 or utterances_per_dialogue < 1:
        raise InvalidInput("corpus sizes must be >= 1")
    if utterances_per_dialogue % 2 != 0 or utterances_per_dialogue < 4:
        raise InvalidInput("utterances_per_dialogue must be even and >= 4")
    if n_dialogues < n_sessions:
        n_sessions = n_dialogues

    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    (out_dir / "embeddings").mkdir(parents=True, exist_ok=True)

    plan_rng = np.random.default_rng([seed, 0x5EED])
    per_valence = utterances_per_dialogue // 2

    # -- plan dialogues from mirrored valence runs -----------------------
    plans: list[list[_UttPlan]] = []
    for d in range(n_dialogues):
        session = d * n_sessions // n_dialogues
        lengths = _template_lengths(per_valence)
        runs = [(length, valence) for length in lengths for valence in (1, 0)]
        order = plan_rng.permutation(len(runs))
        utts: list[_UttPlan] = []
        for run_index in order:
            length, valence = runs[run_index]
            for slot, kind in enumerate(TEMPLATES[length]):
                utts.append(_UttPlan(
                    dialogue=d, session=session, position=len(utts),
                    ambiguous=(kind == "A"), valence=valence,
                    failure_candidate=(length == FAILURE_TEMPLATE_LEN and slot == FAILURE_SLOT),
                ))
        plans.append(utts)

    # -- assign contours with per-(session, valence, ambiguity) alternation --
    toggles: dict[tuple[int, int, bool], int] = {}
    for utts in plans:
        for utt in utts:
            key = (utt.session, utt.valence, utt.ambiguous)
            turn = toggles.get(key, 0)
            utt.contour = RISING if turn % 2 == 0 else FALLING
            toggles[key] = turn + 1

    # -- choose ASR failures per session, alternating valence ------------
    all_utts = [utt for utts in plans for utt in utts]
    n_failures = 0
    for session in range(n_sessions):
        session_utts = [u for u in all_utts if u.session == session]
        target = int(round(asr_failure_rate * len(session_utts)))
        pools = {v: [u for u in session_utts if u.failure_candidate and u.valence == v]
                 for v in (1, 0)}
        for pool in pools.values():
            plan_rng.shuffle(pool)
        picked: list[_UttPlan] = []
        while len(picked) < target and (pools[1] or pools[0]):
            source = pools[1] if (len(picked) % 2 == 0 and pools[1]) or not pools[0] else pools[0]
            picked.append(source.pop())
        if len(picked) < target:
            warnings.warn(
                f"session {session}: only {len(picked)} ASR-failure candidates "
                f"for a target of {target}"
            )
        for utt in picked:
            utt.asr_failed = True
        n_failures += len(picked)

    # -- tokens ----------------------------------------------------------
    token_rng = np.random.default_rng([seed, 0x70C5])
    excited_toggle = 0
    for utt in all_utts:
        if utt.ambiguous:
            utt.tokens = AMBIGUOUS_TOKENS
        else:
            pool = POS_WORDS if utt.valence == 1 else NEG_WORDS
            picks = token_rng.choice(len(pool), size=2, replace=False)
            filler = FILLER_WORDS[int(token_rng.integers(len(FILLER_WORDS)))]
            utt.tokens = (pool[picks[0]], filler, pool[picks[1]])

    # -- materialize audio, records, embeddings --------------------------
    records: list[UtteranceRecord] = []
    ref_vectors: dict[str, np.ndarray] = {}
    asr_vectors: dict[str, np.ndarray] = {}
    class_counts: dict[str, int] = {}
    for utt in all_utts:
        utt_id = f"d{utt.dialogue:03d}_u{utt.position:02d}"
        audio_rng = np.random.default_rng([seed, 0xA0D10, utt.dialogue, utt.position])
        n_frames = int(audio_rng.integers(45, 66))
        wav_rel = f"audio/{utt_id}.wav"
        _write_audio(out_dir / wav_rel, utt.contour, n_frames, audio_rng)

        duration_ms = n_frames * FRAME_MS
        step = duration_ms / len(utt.tokens)
        alignments = [WordAlignment(tok, i * step, (i + 1) * step)
                      for i, tok in enumerate(utt.tokens)]

        raw = RAW_LABEL[(utt.contour, utt.valence)]
        if raw == "happy":
            if excited_toggle % 4 == 3:
                raw = "excited"
            excited_toggle += 1
        class_counts[RAW_LABEL[(utt.contour, utt.valence)]] = \
            class_counts.get(RAW_LABEL[(utt.contour, utt.valence)], 0) + 1

        transcript = " ".join(utt.tokens)
        records.append(UtteranceRecord(
            utt_id=utt_id,
            dialogue_id=f"d{utt.dialogue:03d}",
            session=utt.session + 1,
            speaker=f"spk{utt.session * 2 + utt.position % 2:02d}",
            position=utt.position,
            audio_path=wav_rel,
            ref_transcript=transcript,
            ref_alignments=alignments,
            asr_transcript="" if utt.asr_failed else transcript,
            raw_label=raw,
        ))
        ref_vectors[utt_id] = sentence_vector(utt.tokens)
        if not utt.asr_failed:
            asr_vectors[utt_id] = ref_vectors[utt_id]

    manifest_path = out_dir / "manifest.jsonl"
    write_manifest(manifest_path, records)
    word_table_path = out_dir / "word_table.txt"
    vocab = sorted(set(POS_WORDS + NEG_WORDS + FILLER_WORDS + AMBIGUOUS_TOKENS))
    save_word_table(word_table_path, {w: word_vector(w, WORD_DIM, "word50") for w in vocab})
    ref_store_path = out_dir / "embeddings" / "ref.tsv"
    asr_store_path = out_dir / "embeddings" / "asr.tsv"
    save_sentence_store(ref_store_path, ref_vectors)
    save_sentence_store(asr_store_path, asr_vectors)

    return SynthCorpus(out_dir=out_dir, manifest_path=manifest_path,
                       word_table_path=word_table_path,
                       ref_store_path=ref_store_path, asr_store_path=asr_store_path,
                       n_utterances=len(records), n_failures=n_failures,
                       class_counts=class_counts)


def _write_audio(path: Path, contour: int, n_frames: int, rng: np.random.Generator) -> None:
    n_samples = n_frames * (SAMPLE_RATE * FRAME_MS // 1000)
    t = np.arange(n_samples) / SAMPLE_RATE
    lo, hi = np.log(F0_LOW), np.log(F0_HIGH)
    ramp = t / t[-1]
    log_f0 = lo + (hi - lo) * (ramp if contour == RISING else 1.0 - ramp)
    f0 = np.exp(log_f0)
    phase = 2.0 * np.pi * np.cumsum(f0) / SAMPLE_RATE
    wave = (0.55 * np.sin(phase) + 0.25 * np.sin(2 * phase) + 0.12 * np.sin(3 * phase)
            + 0.04 * rng.standard_normal(n_samples))
    write_wav(path, AudioSignal(0.5 * wave, SAMPLE_RATE))
