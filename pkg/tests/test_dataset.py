import numpy as np
import pytest

from emobranch import synth
from emobranch.dataset import assemble_inputs, build_corpus, extract_audio25
from emobranch.errors import InvalidInput, MissingData
from emobranch.evaluation import LabelScheme, map_labels
from emobranch.featio import write_features
from emobranch.features import FeatureMatrix


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "corpus"
    synth.generate(out, seed=2, n_dialogues=4, utterances_per_dialogue=8)
    return out


@pytest.fixture(scope="module")
def corpus(corpus_dir):
    return build_corpus(corpus_dir / "manifest.jsonl",
                        features=("audio25", "fbk250", "glove", "bert"))


def test_streams_share_frame_counts_and_dims(corpus):
    for record in corpus.records:
        audio25 = corpus.streams["audio25"][record.utt_id]
        fbk250 = corpus.streams["fbk250"][record.utt_id]
        glove = corpus.streams["glove"][record.utt_id]
        assert audio25.shape[0] == fbk250.shape[0] == glove.shape[0]
        assert audio25.shape[1] == 82
        assert fbk250.shape[1] == 40
        assert glove.shape[1] == 50


def test_audio_streams_are_normalized_per_utterance(corpus):
    for name in ("audio25", "fbk250"):
        for values in corpus.streams[name].values():
            np.testing.assert_allclose(values.mean(axis=0), 0.0, atol=1e-9)


def test_glove_rows_are_word_vectors_or_zero(corpus, corpus_dir):
    from emobranch.textio import load_word_table
    table = load_word_table(corpus_dir / "word_table.txt")
    vocab_rows = {tuple(np.round(v, 9)) for v in table.vectors.values()}
    vocab_rows.add(tuple(np.zeros(50)))
    for values in corpus.streams["glove"].values():
        for row in values:
            assert tuple(np.round(row, 9)) in vocab_rows


def test_assemble_inputs_under_conditions(corpus):
    labeled = map_labels(corpus.records, LabelScheme("four_way"))
    ref_inputs = assemble_inputs(corpus, labeled, span=(1, 1), text_source="ref")
    asr_inputs = assemble_inputs(corpus, labeled, span=(1, 1), text_source="asr")
    assert len(ref_inputs) == len(labeled)
    n_masked_ref = sum(s.context.mask[1] == 0.0 for s in ref_inputs)
    n_masked_asr = sum(s.context.mask[1] == 0.0 for s in asr_inputs)
    assert n_masked_ref == 0
    assert n_masked_asr > 0  # the ASR store is missing the failure utterances


def test_unknown_feature_rejected(corpus_dir):
    with pytest.raises(InvalidInput):
        build_corpus(corpus_dir / "manifest.jsonl", features=("mfcc",))


def test_missing_store_rejected(corpus_dir, tmp_path):
    corpus = build_corpus(corpus_dir / "manifest.jsonl", features=("bert",),
                          asr_store_path=tmp_path / "absent.tsv")
    labeled = map_labels(corpus.records, LabelScheme("four_way"))
    with pytest.raises(MissingData):
        assemble_inputs(corpus, labeled, span=(0, 0), text_source="asr")


def test_feature_dir_shortcut_roundtrip(corpus_dir, tmp_path):
    from emobranch.manifest import read_manifest
    records = read_manifest(corpus_dir / "manifest.jsonl")
    feature_dir = tmp_path / "feats"
    feature_dir.mkdir()
    for record in records:
        feats = extract_audio25(corpus_dir / record.audio_path)
        write_features(feature_dir / f"{record.utt_id}.audio25.feat", feats)
    direct = build_corpus(corpus_dir / "manifest.jsonl", features=("audio25",))
    loaded = build_corpus(corpus_dir / "manifest.jsonl", features=("audio25",),
                          feature_dir=feature_dir)
    # f32 storage: loaded values match direct extraction to float precision
    for utt_id, values in direct.streams["audio25"].items():
        np.testing.assert_allclose(loaded.streams["audio25"][utt_id], values, atol=1e-5)
