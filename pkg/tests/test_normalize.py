import numpy as np
import pytest

from emobranch.errors import InvalidInput
from emobranch.features import FeatureMatrix, normalize_features


def _corpus(rng, dialogues=2, utts_per=3, dim=4):
    feats, dialogue_of = {}, {}
    for d in range(dialogues):
        for u in range(utts_per):
            utt = f"d{d}u{u}"
            feats[utt] = FeatureMatrix(rng.standard_normal((10 + u, dim)) * (d + 1) + d, 10.0)
            dialogue_of[utt] = f"d{d}"
    return feats, dialogue_of


def test_utterance_means_are_zero():
    feats, dialogue_of = _corpus(np.random.default_rng(0))
    out = normalize_features(feats, dialogue_of)
    for utt, feat in out.items():
        np.testing.assert_allclose(feat.values.mean(axis=0), 0.0, atol=1e-9)


def test_dialogue_variance_is_one_before_mean_subtraction():
    rng = np.random.default_rng(1)
    feats, dialogue_of = _corpus(rng, dialogues=1)
    stacked = np.concatenate([f.values for f in feats.values()])
    std = stacked.std(axis=0)
    out_scaled = {u: f.values * 0 + feats[u].values / std for u, f in feats.items()}
    scaled_stack = np.concatenate(list(out_scaled.values()))
    np.testing.assert_allclose(scaled_stack.std(axis=0), 1.0, atol=1e-6)
    # the engine's output equals scaling followed by utterance mean subtraction
    out = normalize_features(feats, dialogue_of)
    for utt in feats:
        want = out_scaled[utt] - out_scaled[utt].mean(axis=0)
        np.testing.assert_allclose(out[utt].values, want, atol=1e-12)


def test_constant_dimension_passes_through_with_warning():
    values = np.random.default_rng(2).standard_normal((8, 3))
    values[:, 1] = 4.2
    feats = {"u0": FeatureMatrix(values, 10.0)}
    with pytest.warns(UserWarning, match="constant dimension"):
        out = normalize_features(feats, {"u0": "d0"})
    # constant dim: unscaled, then mean-subtracted to zero
    np.testing.assert_array_equal(out["u0"].values[:, 1], 0.0)
    assert np.isfinite(out["u0"].values).all()


def test_all_finite_for_any_finite_input():
    rng = np.random.default_rng(3)
    a = np.concatenate([np.zeros((5, 3)), rng.standard_normal((5, 3)) * 1e8])
    b = np.full((4, 3), -7.0)
    a[:, 2] = 0.5  # constant across the whole dialogue
    b[:, 2] = 0.5
    feats = {"a": FeatureMatrix(a, 10.0), "b": FeatureMatrix(b, 10.0)}
    with pytest.warns(UserWarning):
        out = normalize_features(feats, {"a": "d", "b": "d"})
    for feat in out.values():
        assert np.isfinite(feat.values).all()


def test_missing_dialogue_assignment_rejected():
    feats = {"u0": FeatureMatrix(np.ones((2, 2)), 10.0)}
    with pytest.raises(InvalidInput):
        normalize_features(feats, {})
