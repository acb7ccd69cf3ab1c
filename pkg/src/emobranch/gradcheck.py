"""Finite-difference verification of analytic gradients."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .autograd import Tensor


@dataclass
class GradCheckReport:
    """Per-tensor maximum relative error between analytic and numeric gradients."""

    errors: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-6

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def lines(self) -> list[str]:
        out = []
        for name, err in self.errors.items():
            verdict = "ok" if err < self.tolerance else "FAIL"
            out.append(f"{name:<28s} max rel err {err:.3e}  [{verdict}]")
        out.append(f"{'overall':<28s} max rel err {self.max_error:.3e}  "
                   f"[{'ok' if self.passed else 'FAIL'}]")
        return out


def check_gradients(fn: Callable[[], Tensor], tensors: Mapping[str, Tensor],
                    eps: float = 1e-5, tolerance: float = 1e-6) -> GradCheckReport:
    """Compare backward() gradients of a scalar function against central differences.

    ``fn`` must rebuild the forward pass from the given leaf tensors on every
    call (their ``data`` is perturbed in place). The report never raises; it
    records the max relative error per tensor.
    """
    for tensor in tensors.values():
        tensor.zero_grad()
    out = fn()
    out.backward()
    analytic = {name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
                for name, t in tensors.items()}

    report = GradCheckReport(tolerance=tolerance)
    for name, tensor in tensors.items():
        flat = tensor.data.ravel()
        worst = 0.0
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            f_plus = float(fn().data)
            flat[i] = original - eps
            f_minus = float(fn().data)
            flat[i] = original
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = analytic[name].ravel()[i]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
        report.errors[name] = worst
    return report


def gradient_suite(layer_tolerance: float = 1e-5,
                   model_tolerance: float = 1e-4) -> list[tuple[str, GradCheckReport]]:
    """Gradient checks for every layer plus the assembled model at small dims."""
    from .layers import (AttentionConfig, MarginConfig, affine, attention_penalty,
                         large_margin_softmax_loss, self_attentive_pool,
                         tdnn_residual_block)
    from .model import (FusionConfig, ModelConfig, ModelInput, TabConfig,
                        TsbConfig, TwoBranchModel)
    from .textio import ContextWindow

    rng = np.random.default_rng(20240)
    results: list[tuple[str, GradCheckReport]] = []

    def weighted_sum(out: Tensor, key: str) -> Tensor:
        # random constant projection keeps the scalar loss sensitive everywhere
        const = np.random.default_rng(zlib.crc32(key.encode())).standard_normal(out.shape)
        return (out * Tensor(const)).sum()

    x = Tensor(rng.standard_normal((3, 4)))
    weight = Tensor(rng.standard_normal((4, 5)))
    bias = Tensor(rng.standard_normal(5))
    results.append(("affine", check_gradients(
        lambda: weighted_sum(affine(x, weight, bias), "affine"),
        {"x": x, "W": weight, "b": bias}, tolerance=layer_tolerance)))

    tx = Tensor(rng.standard_normal((5, 4)))
    tw = Tensor(rng.standard_normal((20, 4)) * 0.3)
    tb = Tensor(rng.standard_normal(4) * 0.1)
    results.append(("tdnn_residual_block", check_gradients(
        lambda: weighted_sum(tdnn_residual_block(tx, (-2, -1, 0, 1, 2), tw, tb), "tdnn"),
        {"x": tx, "W": tw, "b": tb}, tolerance=layer_tolerance)))

    attn_cfg = AttentionConfig(n_heads=5, spiky_heads=3, smooth_heads=2,
                               penalty_weight=0.07, attn_hidden=3)
    hidden = Tensor(rng.standard_normal((6, 4)))
    w1 = Tensor(rng.standard_normal((3, 4)))
    w2 = Tensor(rng.standard_normal((5, 3)))
    mask = np.array([1.0, 1.0, 0.0, 1.0, 1.0, 1.0])

    def pool_loss():
        pooled, attention = self_attentive_pool(hidden, mask, w1, w2)
        return weighted_sum(pooled, "pool") + attention_penalty(attention, mask, attn_cfg)

    results.append(("self_attentive_pool+penalty", check_gradients(
        pool_loss, {"H": hidden, "W1": w1, "W2": w2}, tolerance=layer_tolerance)))

    mx = Tensor(rng.standard_normal((4, 5)))
    mw = Tensor(rng.standard_normal((4, 5)))
    labels = np.array([0, 2, 1, 3])
    for m in (1, 2, 3):
        cfg = MarginConfig(margin=m, scale=12.0)
        results.append((f"large_margin_softmax(m={m})", check_gradients(
            lambda cfg=cfg: large_margin_softmax_loss(mx, mw, labels, cfg),
            {"x": mx, "W": mw}, tolerance=layer_tolerance)))

    model_cfg = ModelConfig(
        tsb=TsbConfig(use_audio25=False, use_fbk250=True, use_glove=False,
                      encoder_dim=6, n_blocks=2, offsets=(-1, 0, 1),
                      attention=AttentionConfig(attn_hidden=4, penalty_weight=0.05)),
        tab=TabConfig(span=(1, 1), proj_dim=5, input_dim=10,
                      attention=AttentionConfig(attn_hidden=4, penalty_weight=0.05)),
        fusion=FusionConfig(hidden_dim=7, n_classes=4, margin=MarginConfig(margin=2, scale=8.0)),
    )
    model = TwoBranchModel(model_cfg, seed=5)
    samples = []
    for i in range(2):
        window = ContextWindow(rng.standard_normal((3, 10)),
                               np.array([1.0, 1.0, 0.0] if i == 0 else [0.0, 1.0, 1.0]), (1, 1))
        samples.append(ModelInput(utt_id=f"u{i}", context=window, label=i + 1,
                                  streams={"fbk250": rng.standard_normal((4, 40))}))

    def model_fn():
        model.zero_grad()
        loss, _ = model.loss_batch(samples, train=False)
        return loss

    results.append(("full_model", check_gradients(
        model_fn, model.params, tolerance=model_tolerance)))
    return results
