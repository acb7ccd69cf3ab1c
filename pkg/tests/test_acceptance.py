"""Acceptance suite: one test per acceptance criterion.

Each test prints a `[ACCEPTANCE] <criterion>: PASS` line (visible with -s or
in captured output) after its assertions hold at the stated tolerances. The
experiment-level criteria run on the synthetic corpus with fixed seeds, so
they are deterministic.
"""
import time

import numpy as np
import pytest

from emobranch import synth
from emobranch.autograd import Tensor
from emobranch.dataset import assemble_inputs, build_corpus
from emobranch.evaluation import (LabelScheme, audit_folds, carve_validation,
                                  compute_metrics, make_folds, map_labels)
from emobranch.experiments import run_cv
from emobranch.gradcheck import gradient_suite
from emobranch.layers import (AttentionConfig, MarginConfig, attention_penalty,
                              large_margin_softmax_loss, normalized_class_weights,
                              self_attentive_pool, softmax_cross_entropy)
from emobranch.model import (FusionConfig, ModelConfig, TabConfig, TsbConfig,
                             TwoBranchModel)
from emobranch.training import INITIAL_LR, NewbobState, TrainConfig, fit, newbob_step

from test_evaluation import brute_force_metrics, synthetic_manifest
from test_fbank import dft_oracle_fbank


def _ok(name):
    print(f"[ACCEPTANCE] {name}: PASS")


# ---------------------------------------------------------------------------
# shared synthetic corpus + frozen experiment recipe
# ---------------------------------------------------------------------------

ATTN = AttentionConfig(attn_hidden=16, penalty_weight=0.05)
TRAIN = TrainConfig(batch_size=8, max_epochs=40, seed=3, dropout=0.0, momentum=0.9,
                    initial_lr=1e-3, improve_threshold=-0.10, validation_fraction=0.15)


def experiment_model(span, tsb=True):
    return ModelConfig(
        tsb=TsbConfig(use_audio25=True, use_fbk250=False, use_glove=False,
                      encoder_dim=16, n_blocks=1, attention=ATTN) if tsb else None,
        tab=TabConfig(span=span, proj_dim=24, attention=ATTN),
        fusion=FusionConfig(hidden_dim=48, n_classes=4, margin=MarginConfig(1, 2.0)))


@pytest.fixture(scope="module")
def synth_experiment(tmp_path_factory):
    """Corpus (10% ASR failures) + assembled splits + a train/eval closure."""
    t0 = time.time()
    out = tmp_path_factory.mktemp("accept") / "corpus"
    summary = synth.generate(out, seed=7, n_dialogues=50, utterances_per_dialogue=12,
                             asr_failure_rate=0.1)
    corpus = build_corpus(summary.manifest_path, features=("audio25", "bert"))
    scheme = LabelScheme("four_way")
    labeled = {r.utt_id: (r, label) for r, label in map_labels(corpus.records, scheme)}
    plan = make_folds(corpus.records, "single_session5")
    train_ids, test_ids = plan.folds[0]
    rng = np.random.default_rng([TRAIN.seed, 0xCA7])
    core_ids, val_ids = carve_validation(train_ids, TRAIN.validation_fraction, rng)
    setup_seconds = time.time() - t0

    def train_and_score(model_cfg, span, source):
        train_inputs = assemble_inputs(corpus, [labeled[u] for u in core_ids], span, source)
        val_inputs = assemble_inputs(corpus, [labeled[u] for u in val_ids], span, source)
        test_inputs = assemble_inputs(corpus, [labeled[u] for u in test_ids], span, source)
        model = TwoBranchModel(model_cfg, seed=11)
        result = fit(model, train_inputs, val_inputs, TRAIN)
        model.load_state(result.best_state)
        predictions, _ = model.predict(test_inputs)
        labels = np.array([s.label for s in test_inputs])
        report = compute_metrics(predictions, labels, 4)
        return report, predictions, test_inputs

    ambiguous_ids = {r.utt_id for r in corpus.records
                     if r.ref_transcript == synth.AMBIGUOUS_PHRASE}
    return {"train_and_score": train_and_score, "setup_seconds": setup_seconds,
            "ambiguous_ids": ambiguous_ids, "corpus": corpus}


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def test_gradient_suite_layers_and_full_model():
    t0 = time.time()
    results = dict(gradient_suite(layer_tolerance=1e-5, model_tolerance=1e-4))
    elapsed = time.time() - t0
    for name, report in results.items():
        bound = 1e-4 if name == "full_model" else 1e-5
        assert report.max_error < bound, (name, report.lines())
    assert elapsed < 120.0, f"gradient suite took {elapsed:.1f}s"
    _ok(f"gradient suite (max layer err "
        f"{max(r.max_error for n, r in results.items() if n != 'full_model'):.2e}, "
        f"full model {results['full_model'].max_error:.2e}, {elapsed:.1f}s)")


def test_attention_invariants():
    rng = np.random.default_rng(42)
    for trial in range(25):
        t_count = int(rng.integers(2, 10))
        mask = (rng.random(t_count) > 0.3).astype(float)
        if mask.sum() == 0:
            mask[0] = 1.0
        hidden = Tensor(rng.standard_normal((t_count, 6)))
        w1 = Tensor(rng.standard_normal((4, 6)))
        w2 = Tensor(rng.standard_normal((5, 4)))
        pooled, attention = self_attentive_pool(hidden, mask, w1, w2)
        np.testing.assert_allclose(attention.data.sum(axis=1), 1.0, atol=1e-6)
        assert (attention.data[:, mask == 0.0] < 1e-12).all()
        hacked = hidden.data.copy()
        hacked[mask == 0.0] = rng.standard_normal((int((mask == 0).sum()), 6)) * 1e8
        pooled_b, attention_b = self_attentive_pool(Tensor(hacked), mask, w1, w2)
        np.testing.assert_allclose(pooled.data, pooled_b.data, atol=1e-12, rtol=0)
        np.testing.assert_allclose(attention.data, attention_b.data, atol=1e-12, rtol=0)

    cfg = AttentionConfig(n_heads=5, spiky_heads=3, smooth_heads=2,
                          penalty_weight=1.0, attn_hidden=4)
    attention = np.zeros((5, 7))
    attention[:3, 4] = 1.0
    attention[3:, :] = 1.0 / 7.0
    assert float(attention_penalty(Tensor(attention), np.ones(7), cfg).data) == 0.0
    _ok("attention invariants (row sums, masked-slot invariance, penalty zeros)")


def test_dsp_oracles(tone_200hz, tone_1khz_1s):
    from emobranch.features import (FeatureMatrix, FramingSpec, append_deltas,
                                    frame_signal, log_mel_fbank)
    from emobranch.pitch import track_pitch

    rng = np.random.default_rng(3)
    frames = rng.standard_normal((3, 400))
    got = log_mel_fbank(frames, 16000).values
    want = dft_oracle_fbank(frames, 16000)
    fbank_err = float(np.max(np.abs(got - want) / np.maximum(np.abs(want), 1e-12)))
    assert fbank_err < 1e-6

    log_pitch, _ = track_pitch(tone_200hz)
    target = np.log(200.0)
    assert np.all(np.abs(log_pitch[20:-20] - target) / target < 0.05)

    deltas = append_deltas(FeatureMatrix(np.full((25, 7), 1.23), 10.0)).values[:, 7:]
    assert (deltas == 0.0).all()

    short = frame_signal(tone_1khz_1s, FramingSpec(10.0, 25.0))
    long = frame_signal(tone_1khz_1s, FramingSpec(10.0, 250.0))
    assert short.shape[0] == long.shape[0]
    _ok(f"DSP oracles (filterbank vs direct DFT {fbank_err:.2e}, pitch within 5%, "
        "zero deltas, equal frame counts)")


def test_loss_identities():
    rng = np.random.default_rng(17)
    worst = 0.0
    for trial in range(200):
        x = Tensor(rng.standard_normal((4, 7)))
        w = Tensor(rng.standard_normal((4, 7)))
        labels = rng.integers(0, 4, size=4)
        cfg = MarginConfig(margin=1, scale=30.0)
        got = float(large_margin_softmax_loss(x, w, labels, cfg).data)
        logits = (x.data @ normalized_class_weights(w).data.T) * cfg.scale
        want = float(softmax_cross_entropy(Tensor(logits), labels).data)
        worst = max(worst, abs(got - want))
    assert worst < 1e-12

    violations = 0
    for trial in range(1000):
        x = Tensor(rng.standard_normal((2, 6)))
        w = Tensor(rng.standard_normal((4, 6)))
        labels = rng.integers(0, 4, size=2)
        loss1 = float(large_margin_softmax_loss(x, w, labels, MarginConfig(1, 30.0)).data)
        loss2 = float(large_margin_softmax_loss(x, w, labels, MarginConfig(2, 30.0)).data)
        violations += loss2 < loss1 - 1e-12
    assert violations == 0
    _ok(f"loss identities (m=1 equals cross-entropy to {worst:.1e}; "
        "m=2 >= m=1 on 1000 draws)")


def test_metric_oracle():
    rng = np.random.default_rng(23)
    for trial in range(1000):
        k = int(rng.integers(2, 6))
        n = int(rng.integers(k, 60))
        labels = rng.integers(0, k, size=n)
        labels[:k] = np.arange(k)
        predictions = rng.integers(0, k, size=n)
        report = compute_metrics(predictions, labels, k)
        wa, ua = brute_force_metrics(predictions.tolist(), labels.tolist(), k)
        assert report.wa == wa and report.ua == ua

    for trial in range(200):
        k = int(rng.integers(2, 6))
        per = int(rng.integers(2, 25))
        labels = np.repeat(np.arange(k), per)
        predictions = rng.integers(0, k, size=labels.size)
        report = compute_metrics(predictions, labels, k)
        assert abs(report.wa - report.ua) < 1e-12
    _ok("metric oracle (1000 brute-force matches exact; WA=UA on balanced supports)")


def test_fold_audits():
    records = synthetic_manifest(sessions=5, dialogues_per=2, utts_per=10)
    assert len({r.speaker for r in records}) == 10
    for scheme, n_folds in (("session5", 5), ("speaker10", 10)):
        plan = make_folds(records, scheme)
        assert len(plan.folds) == n_folds
        audit_folds(plan, records)
        tested = sorted(u for _, test in plan.folds for u in test)
        assert tested == sorted(r.utt_id for r in records)
    _ok("fold audits (session5 and speaker10: speaker exclusivity, exact coverage)")


def test_newbob_trace():
    state = NewbobState()
    metric = 0.40
    state = newbob_step(state, metric)
    lr_trace, halted = [], False
    for delta in [0.05, 0.05, 0.001, 0.02, 0.001]:
        metric += delta
        state = newbob_step(state, metric)
        lr_trace.append(state.lr)
        halted = state.halt
    assert lr_trace == [5e-5, 5e-5, 2.5e-5, 1.25e-5, 6.25e-6]
    assert halted
    assert INITIAL_LR == 5e-5
    _ok("newbob trace (exact lr sequence and halt)")


def test_synthetic_end_to_end(synth_experiment):
    t0 = time.time()
    run = synth_experiment["train_and_score"]

    report, _, _ = run(experiment_model((1, 0)), (1, 0), "ref")
    assert report.wa > 0.95, f"span (1,0) test WA {report.wa:.3f}"

    probe_report, predictions, test_inputs = run(
        experiment_model((0, 0), tsb=False), (0, 0), "ref")
    ambiguous = [i for i, s in enumerate(test_inputs)
                 if s.utt_id in synth_experiment["ambiguous_ids"]]
    assert len(ambiguous) >= 30
    labels = np.array([test_inputs[i].label for i in ambiguous])
    ambiguous_acc = float((predictions[ambiguous] == labels).mean())
    assert abs(ambiguous_acc - 0.25) <= 0.05, f"ambiguous accuracy {ambiguous_acc:.3f}"

    elapsed = synth_experiment["setup_seconds"] + (time.time() - t0)
    assert elapsed < 900.0, f"end-to-end took {elapsed:.0f}s"
    _ok(f"synthetic end-to-end (span(1,0) WA {report.wa:.3f} > 0.95; context-free "
        f"ambiguous accuracy {ambiguous_acc:.3f} within 0.25 +/- 0.05; {elapsed:.0f}s)")


def test_asr_robustness_structure(synth_experiment):
    run = synth_experiment["train_and_score"]
    drops = {}
    for span in ((1, 1), (0, 0)):
        wa = {}
        for source in ("ref", "asr"):
            report, _, _ = run(experiment_model(span), span, source)
            wa[source] = report.wa
        drops[span] = wa["ref"] - wa["asr"]
    assert drops[(1, 1)] < drops[(0, 0)], drops
    _ok(f"ASR-robustness structure (WA drop with context {drops[(1, 1)]:+.3f} < "
        f"without context {drops[(0, 0)]:+.3f})")


def test_determinism_bit_identical_runs(tmp_path):
    out = tmp_path / "c"
    synth.generate(out, seed=12, n_dialogues=4, utterances_per_dialogue=8)
    corpus = build_corpus(out / "manifest.jsonl", features=("fbk250", "bert"))
    labeled = [r for r, _ in map_labels(corpus.records, LabelScheme("four_way"))]
    plan = make_folds(labeled, "single_session5")
    model_cfg = ModelConfig(
        tsb=TsbConfig(use_audio25=False, use_fbk250=True, use_glove=False,
                      encoder_dim=6, n_blocks=1, offsets=(-1, 0, 1),
                      attention=AttentionConfig(attn_hidden=4)),
        tab=TabConfig(span=(1, 0), proj_dim=4,
                      attention=AttentionConfig(attn_hidden=4)),
        fusion=FusionConfig(hidden_dim=8, n_classes=4, margin=MarginConfig(1, 4.0)))
    train_cfg = TrainConfig(batch_size=8, max_epochs=2, seed=5, dropout=0.3,
                            initial_lr=1e-3, improve_threshold=-1.0,
                            validation_fraction=0.2)
    dirs = [tmp_path / "run_a", tmp_path / "run_b"]
    for out_dir in dirs:
        run_cv(corpus, model_cfg, train_cfg, plan, "ref", out_dir=out_dir)
    ckpt_a = (dirs[0] / "fold0.ckpt").read_bytes()
    ckpt_b = (dirs[1] / "fold0.ckpt").read_bytes()
    report_a = (dirs[0] / "report.kv").read_bytes()
    report_b = (dirs[1] / "report.kv").read_bytes()
    assert ckpt_a == ckpt_b
    assert report_a == report_b
    _ok("determinism (bit-identical checkpoints and reports across same-seed runs)")
