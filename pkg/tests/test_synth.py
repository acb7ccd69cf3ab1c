import collections
import filecmp
from pathlib import Path

import numpy as np
import pytest

from emobranch import synth
from emobranch.audio import read_wav
from emobranch.errors import InvalidInput
from emobranch.manifest import read_manifest
from emobranch.pitch import extract_pitch
from emobranch.textio import load_sentence_store, load_word_table


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth") / "corpus"
    return synth.generate(out, seed=5, n_dialogues=10, utterances_per_dialogue=8)


def _merged(label):
    return "happy" if label in ("happy", "excited") else label


def test_same_seed_gives_byte_identical_corpora(tmp_path):
    a = synth.generate(tmp_path / "a", seed=9, n_dialogues=2, utterances_per_dialogue=8)
    b = synth.generate(tmp_path / "b", seed=9, n_dialogues=2, utterances_per_dialogue=8)
    for rel in ["manifest.jsonl", "word_table.txt", "embeddings/ref.tsv",
                "embeddings/asr.tsv"] + [f"audio/{r.utt_id}.wav"
                                         for r in read_manifest(a.manifest_path)]:
        assert filecmp.cmp(a.out_dir / rel, b.out_dir / rel, shallow=False), rel


def test_label_distribution_balanced_within_two_percent(corpus):
    records = read_manifest(corpus.manifest_path)
    counts = collections.Counter(_merged(r.raw_label) for r in records)
    for count in counts.values():
        assert abs(count / len(records) - 0.25) <= 0.02


def test_ambiguous_subset_balanced_and_never_first(corpus):
    records = read_manifest(corpus.manifest_path)
    ambiguous = [r for r in records if r.ref_transcript == synth.AMBIGUOUS_PHRASE]
    assert ambiguous, "corpus must contain ambiguous utterances"
    counts = collections.Counter(_merged(r.raw_label) for r in ambiguous)
    assert max(counts.values()) - min(counts.values()) <= 2
    by_dialogue = collections.defaultdict(list)
    for r in records:
        by_dialogue[r.dialogue_id].append(r)
    for members in by_dialogue.values():
        members.sort(key=lambda r: r.position)
        assert members[0].ref_transcript != synth.AMBIGUOUS_PHRASE
        for prev, cur in zip(members, members[1:]):
            if cur.ref_transcript == synth.AMBIGUOUS_PHRASE:
                assert prev.ref_transcript != synth.AMBIGUOUS_PHRASE


def test_ambiguous_label_follows_previous_lexical_valence(corpus):
    records = read_manifest(corpus.manifest_path)
    positive = {"happy", "neutral"}
    by_dialogue = collections.defaultdict(list)
    for r in records:
        by_dialogue[r.dialogue_id].append(r)
    pos_words = set(synth.POS_WORDS)
    for members in by_dialogue.values():
        members.sort(key=lambda r: r.position)
        for prev, cur in zip(members, members[1:]):
            if cur.ref_transcript != synth.AMBIGUOUS_PHRASE:
                continue
            prev_positive = bool(set(prev.ref_transcript.split()) & pos_words)
            assert (_merged(cur.raw_label) in positive) == prev_positive


def test_asr_failures_have_empty_transcript_and_no_embedding(corpus):
    records = read_manifest(corpus.manifest_path)
    failed = [r for r in records if r.asr_transcript == ""]
    assert len(failed) == corpus.n_failures > 0
    ref = load_sentence_store(corpus.ref_store_path)
    asr = load_sentence_store(corpus.asr_store_path)
    assert len(ref) == len(records)
    assert len(asr) == len(records) - len(failed)
    for r in failed:
        assert r.utt_id in ref and r.utt_id not in asr
        # deleted slots sit between two same-valence lexical neighbors
        assert r.ref_transcript != synth.AMBIGUOUS_PHRASE


def test_embeddings_deterministic_functions_of_tokens(corpus):
    records = read_manifest(corpus.manifest_path)
    store = load_sentence_store(corpus.ref_store_path)
    by_transcript = collections.defaultdict(list)
    for r in records:
        by_transcript[r.ref_transcript].append(r.utt_id)
    repeated = [ids for ids in by_transcript.values() if len(ids) > 1]
    assert repeated, "ambiguous phrase repeats"
    for ids in repeated:
        base = store.get(ids[0])
        for other in ids[1:]:
            np.testing.assert_array_equal(store.get(other), base)
    want = synth.sentence_vector(tuple(records[0].ref_transcript.split()))
    got = store.get(records[0].utt_id)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_word_table_loads_with_engine_dimensions(corpus):
    table = load_word_table(corpus.word_table_path)
    assert table.dim == 50
    for word in synth.POS_WORDS + synth.NEG_WORDS + synth.AMBIGUOUS_TOKENS:
        assert word in table


def test_pitch_contour_recoverable_by_front_end(corpus):
    records = read_manifest(corpus.manifest_path)
    hits = 0
    for r in records:
        signal = read_wav(corpus.out_dir / r.audio_path)
        values = extract_pitch(signal).values[:, 0]
        slope = np.polyfit(np.arange(values.size), values, 1)[0]
        rising = r.raw_label in ("happy", "excited", "angry")
        hits += (slope > 0) == rising
    assert hits / len(records) > 0.99


def test_sessions_and_speakers_laid_out_for_cv(corpus):
    records = read_manifest(corpus.manifest_path)
    sessions = sorted({r.session for r in records})
    assert sessions == [1, 2, 3, 4, 5]
    for session in sessions:
        speakers = {r.speaker for r in records if r.session == session}
        assert len(speakers) == 2
    assert len({r.speaker for r in records}) == 10


def test_bad_sizes_rejected(tmp_path):
    with pytest.raises(InvalidInput):
        synth.generate(tmp_path / "x", n_dialogues=0)
    with pytest.raises(InvalidInput):
        synth.generate(tmp_path / "y", utterances_per_dialogue=5)
