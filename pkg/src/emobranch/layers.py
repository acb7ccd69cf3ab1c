"""Layers used by the two-branch model, built on the gradient engine."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, concat, log_sum_exp_rows, softmax_rows, take_rows
from .errors import InvalidConfig, InvalidInput, ShapeError

MASKED_SCORE = -1e30


@dataclass(frozen=True)
class AttentionConfig:
    """Multi-head self-attentive pooling setup.

    ``spiky_heads`` heads are penalized toward concentrated (one-hot-like)
    weight rows, the remaining ``smooth_heads`` toward uniform rows;
    ``penalty_weight`` scales the combined penalty added to the loss.
    """

    n_heads: int = 5
    spiky_heads: int = 3
    smooth_heads: int = 2
    penalty_weight: float = 0.05
    attn_hidden: int = 64

    def __post_init__(self):
        if self.spiky_heads + self.smooth_heads != self.n_heads:
            raise InvalidConfig(
                f"spiky ({self.spiky_heads}) + smooth ({self.smooth_heads}) "
                f"heads must equal n_heads ({self.n_heads})"
            )
        if self.penalty_weight < 0:
            raise InvalidConfig("penalty_weight must be nonnegative")


@dataclass(frozen=True)
class MarginConfig:
    """Angular-margin softmax setup; ``margin=1`` is plain cross-entropy."""

    margin: int = 2
    scale: float = 30.0

    def __post_init__(self):
        if not isinstance(self.margin, int) or self.margin < 1:
            raise InvalidConfig(f"margin must be an integer >= 1, got {self.margin}")
        if self.scale <= 0:
            raise InvalidConfig(f"scale must be positive, got {self.scale}")


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """y = x @ W + b for x of shape (.., in), W (in, out), b (out,)."""
    if x.shape[-1] != weight.shape[0] or weight.shape[1] != bias.shape[0]:
        raise ShapeError(
            f"affine mismatch: x {x.shape}, W {weight.shape}, b {bias.shape}"
        )
    return x @ weight + bias


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None,
            train: bool) -> Tensor:
    """Inverted dropout: identity in eval mode, mean-preserving in training."""
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise InvalidInput("training-mode dropout needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * Tensor(keep)


def tdnn_residual_block(x: Tensor, offsets: tuple[int, ...], weight: Tensor,
                        bias: Tensor, dropout_rate: float = 0.0,
                        rng: np.random.Generator | None = None,
                        train: bool = False) -> Tensor:
    """Residual time-delay layer over frames: y = ReLU(TDNN(x)) + x.

    For each frame t, the frames at ``t + o`` for the configured offsets are
    concatenated (edges replicated) and passed through an affine + ReLU; the
    input is added back, so the layer width must equal the input width.
    Dropout applies to the block output in training mode.
    """
    t_count, dim = x.shape
    if weight.shape != (len(offsets) * dim, dim):
        raise ShapeError(
            f"tdnn block needs W of {(len(offsets) * dim, dim)} for input {x.shape}, "
            f"got {weight.shape}"
        )
    idx = np.clip(np.arange(t_count)[:, None] + np.asarray(offsets)[None, :], 0, t_count - 1)
    context = take_rows(x, idx.ravel()).reshape(t_count, len(offsets) * dim)
    hidden = affine(context, weight, bias).relu()
    return dropout(hidden + x, dropout_rate, rng, train)


def self_attentive_pool(hidden: Tensor, mask: np.ndarray, w1: Tensor,
                        w2: Tensor) -> tuple[Tensor, Tensor]:
    """Multi-head self-attentive pooling of a (T, d) sequence.

    Head scores are ``W2 tanh(W1 H^T)``; masked positions are replaced by a
    large negative constant before the row softmax, so their weight
    underflows to zero and their content cannot influence the output.
    Returns the (1, n_heads*d) pooled embedding and the (n_heads, T)
    attention matrix.
    """
    mask = np.asarray(mask, dtype=np.float64)
    t_count = hidden.shape[0]
    if mask.shape != (t_count,):
        raise ShapeError(f"mask shape {mask.shape} does not match T={t_count}")
    if mask.sum() < 1:
        raise InvalidInput("self-attentive pooling over a fully masked sequence")
    scores = w2 @ (w1 @ hidden.T).tanh()            # (n_heads, T)
    keep = Tensor(mask[None, :])
    masked = scores * keep + Tensor((1.0 - mask[None, :]) * MASKED_SCORE)
    attention = softmax_rows(masked)                 # rows sum to 1 over unmasked
    pooled = (attention @ hidden).reshape(1, -1)     # concat of per-head weighted sums
    return pooled, attention


def attention_penalty(attention: Tensor, mask: np.ndarray, cfg: AttentionConfig) -> Tensor:
    """Spiky/smooth attention penalty.

    First ``spiky_heads`` rows pay ``(1 - max_t A[h,t])^2``; the remaining
    rows pay the squared distance to the uniform distribution over unmasked
    positions. Scaled by ``penalty_weight``.
    """
    mask = np.asarray(mask, dtype=np.float64)
    n_unmasked = float(mask.sum())
    spiky = attention[:cfg.spiky_heads]
    smooth = attention[cfg.spiky_heads:]
    spiky_term = ((1.0 - spiky.max(axis=1)) ** 2).sum()
    uniform = Tensor(mask[None, :] / n_unmasked)
    smooth_term = (((smooth - uniform) * Tensor(mask[None, :])) ** 2).sum()
    return (spiky_term + smooth_term) * cfg.penalty_weight


def normalized_class_weights(weight: Tensor) -> Tensor:
    """Rows of the class-weight matrix scaled to unit norm (zero rows stay zero)."""
    norms = ((weight ** 2).sum(axis=1, keepdims=True) + 1e-24).sqrt()
    return weight / norms


def class_logits(x: Tensor, weight: Tensor, cfg: MarginConfig) -> Tensor:
    """Plain (margin-free) logits against unit-norm class weights."""
    return (x @ normalized_class_weights(weight).T) * cfg.scale


def large_margin_softmax_loss(x: Tensor, weight: Tensor, labels: np.ndarray,
                              cfg: MarginConfig) -> Tensor:
    """Mean angular-margin cross-entropy over a batch.

    With ``cos(theta)`` the angle between the input and its target class
    weight row (rows unit-normalized every forward pass), the target logit
    ``|x| cos(theta)`` is replaced by ``|x| psi(theta)`` where
    ``psi(theta) = (-1)^k cos(m theta) - 2k`` on ``theta in [k pi/m, (k+1) pi/m]``;
    all logits are then multiplied by ``cfg.scale``. ``margin=1`` leaves the
    logits untouched and reduces to standard softmax cross-entropy.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = weight.shape[0]
    if labels.min() < 0 or labels.max() >= n_classes:
        raise InvalidInput(f"labels out of range [0, {n_classes})")
    w_hat = normalized_class_weights(weight)
    logits = x @ w_hat.T                                   # (B, K), = |x| cos(theta_j)
    onehot = np.zeros((labels.size, n_classes))
    onehot[np.arange(labels.size), labels] = 1.0

    if cfg.margin == 1:
        scaled = logits * cfg.scale
    else:
        x_norm = ((x ** 2).sum(axis=1, keepdims=True) + 1e-24).sqrt()
        target = (logits * Tensor(onehot)).sum(axis=1, keepdims=True)
        # clamp strictly inside (-1, 1): arccos' gradient diverges at the ends
        cos_theta = (target / x_norm).clip(-1.0 + 1e-12, 1.0 - 1e-12)
        theta = cos_theta.arccos()
        k = np.minimum(np.floor(cfg.margin * theta.data / np.pi), cfg.margin - 1)
        sign = Tensor((-1.0) ** k)                          # piecewise constant in theta
        psi = sign * (theta * float(cfg.margin)).cos() - Tensor(2.0 * k)
        new_target = x_norm * psi
        scaled = (logits * Tensor(1.0 - onehot) + new_target * Tensor(onehot)) * cfg.scale

    per_sample = log_sum_exp_rows(scaled) - (scaled * Tensor(onehot)).sum(axis=1, keepdims=True)
    return per_sample.mean()


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy straight from logits (reference path)."""
    labels = np.asarray(labels, dtype=np.int64)
    onehot = np.zeros(logits.shape)
    onehot[np.arange(labels.size), labels] = 1.0
    per_sample = log_sum_exp_rows(logits) - (logits * Tensor(onehot)).sum(axis=1, keepdims=True)
    return per_sample.mean()
