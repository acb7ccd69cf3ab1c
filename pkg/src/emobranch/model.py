"""The two-branch classifier.

One branch fuses frame-synchronous streams (audio features plus per-frame
word vectors), encodes them with residual time-delay layers and pools across
frames with multi-head self-attention. The other branch projects the
sentence embeddings of a cross-utterance context window through a shared
affine layer and pools across the window slots. Both pooled embeddings are
fused by a fully connected layer feeding an angular-margin softmax.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .autograd import Tensor, concat, softmax_rows
from .errors import InvalidConfig, InvalidInput, ShapeError
from .layers import (AttentionConfig, MarginConfig, affine, attention_penalty,
                     class_logits, dropout, glorot, large_margin_softmax_loss,
                     normalized_class_weights, self_attentive_pool,
                     tdnn_residual_block)
from .textio import ContextWindow

STREAM_DIMS = {"audio25": 82, "fbk250": 40, "glove": 50}
STREAM_ORDER = ("audio25", "fbk250", "glove")


@dataclass(frozen=True)
class TsbConfig:
    """Frame-synchronous branch: streams, encoder size, pooling heads."""

    use_audio25: bool = True
    use_fbk250: bool = False
    use_glove: bool = True
    encoder_dim: int = 256
    n_blocks: int = 4
    offsets: tuple[int, ...] = (-2, -1, 0, 1, 2)
    attention: AttentionConfig = field(default_factory=AttentionConfig)

    def __post_init__(self):
        if not (self.use_audio25 or self.use_fbk250 or self.use_glove):
            raise InvalidConfig("frame-synchronous branch needs at least one input stream")

    @property
    def streams(self) -> tuple[str, ...]:
        enabled = {"audio25": self.use_audio25, "fbk250": self.use_fbk250,
                   "glove": self.use_glove}
        return tuple(name for name in STREAM_ORDER if enabled[name])

    @property
    def input_dim(self) -> int:
        return sum(STREAM_DIMS[name] for name in self.streams)

    @property
    def output_dim(self) -> int:
        return self.attention.n_heads * self.encoder_dim


MAX_CONTEXT = 8


@dataclass(frozen=True)
class TabConfig:
    """Cross-utterance branch: context span and shared projection size."""

    span: tuple[int, int] = (3, 3)
    proj_dim: int = 128
    input_dim: int = 768
    attention: AttentionConfig = field(default_factory=AttentionConfig)

    def __post_init__(self):
        before, after = self.span
        if before < 0 or after < 0 or before > MAX_CONTEXT or after > MAX_CONTEXT:
            raise InvalidConfig(f"context span must be within [0, {MAX_CONTEXT}], got {self.span}")

    @property
    def output_dim(self) -> int:
        return self.attention.n_heads * self.proj_dim


@dataclass(frozen=True)
class FusionConfig:
    """Fusion head: hidden width, class count and margin-softmax setup."""

    hidden_dim: int = 256
    n_classes: int = 4
    margin: MarginConfig = field(default_factory=MarginConfig)

    def __post_init__(self):
        if self.n_classes not in (4, 5):
            raise InvalidConfig(f"n_classes must be 4 or 5, got {self.n_classes}")


@dataclass(frozen=True)
class ModelConfig:
    tsb: TsbConfig | None = field(default_factory=TsbConfig)
    tab: TabConfig | None = field(default_factory=TabConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)

    def __post_init__(self):
        if self.tsb is None and self.tab is None:
            raise InvalidConfig("at least one branch must be enabled")

    @property
    def fusion_input_dim(self) -> int:
        dim = 0
        if self.tsb is not None:
            dim += self.tsb.output_dim
        if self.tab is not None:
            dim += self.tab.output_dim
        return dim


@dataclass
class ModelInput:
    """One utterance as the model consumes it."""

    utt_id: str
    streams: dict[str, np.ndarray]
    context: ContextWindow | None
    label: int


@dataclass
class ForwardResult:
    hidden: Tensor           # (1, fusion hidden dim), post-ReLU
    penalty: Tensor          # scalar attention penalty for this utterance


class TwoBranchModel:
    """Parameter container plus forward/loss passes for the architecture."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng([seed, 0xE40])
        params: dict[str, Tensor] = {}
        if cfg.tsb is not None:
            tsb = cfg.tsb
            params["tsb.in.W"] = Tensor(glorot(rng, tsb.input_dim, tsb.encoder_dim))
            params["tsb.in.b"] = Tensor(np.zeros(tsb.encoder_dim))
            for i in range(tsb.n_blocks):
                fan_in = len(tsb.offsets) * tsb.encoder_dim
                params[f"tsb.block{i}.W"] = Tensor(glorot(rng, fan_in, tsb.encoder_dim))
                params[f"tsb.block{i}.b"] = Tensor(np.zeros(tsb.encoder_dim))
            params["tsb.attn.W1"] = Tensor(glorot(rng, tsb.attention.attn_hidden, tsb.encoder_dim))
            params["tsb.attn.W2"] = Tensor(glorot(rng, tsb.attention.n_heads, tsb.attention.attn_hidden))
        if cfg.tab is not None:
            tab = cfg.tab
            params["tab.proj.W"] = Tensor(glorot(rng, tab.input_dim, tab.proj_dim))
            params["tab.proj.b"] = Tensor(np.zeros(tab.proj_dim))
            params["tab.attn.W1"] = Tensor(glorot(rng, tab.attention.attn_hidden, tab.proj_dim))
            params["tab.attn.W2"] = Tensor(glorot(rng, tab.attention.n_heads, tab.attention.attn_hidden))
        params["fuse.hidden.W"] = Tensor(glorot(rng, cfg.fusion_input_dim, cfg.fusion.hidden_dim))
        params["fuse.hidden.b"] = Tensor(np.zeros(cfg.fusion.hidden_dim))
        params["fuse.out.W"] = Tensor(glorot(rng, cfg.fusion.n_classes, cfg.fusion.hidden_dim))
        self.params = params

    # -- branches ---------------------------------------------------------

    def tsb_forward(self, streams: Mapping[str, np.ndarray], train: bool = False,
                    rng: np.random.Generator | None = None,
                    dropout_rate: float = 0.0) -> tuple[Tensor, Tensor]:
        """Frame-synchronous branch: concat streams, encode, pool across time."""
        cfg = self.cfg.tsb
        if cfg is None:
            raise InvalidConfig("frame-synchronous branch is disabled")
        parts = []
        t_counts = set()
        for name in cfg.streams:
            if name not in streams:
                raise InvalidInput(f"missing input stream {name!r}")
            values = np.asarray(streams[name], dtype=np.float64)
            if values.ndim != 2 or values.shape[1] != STREAM_DIMS[name]:
                raise ShapeError(
                    f"stream {name!r} must be T x {STREAM_DIMS[name]}, got {values.shape}"
                )
            t_counts.add(values.shape[0])
            parts.append(values)
        if len(t_counts) != 1:
            raise ShapeError(f"streams disagree on frame count: {sorted(t_counts)}")
        t_count = t_counts.pop()
        if t_count < 1:
            raise InvalidInput("empty utterance (no frames)")

        x = Tensor(np.concatenate(parts, axis=1))
        h = affine(x, self.params["tsb.in.W"], self.params["tsb.in.b"]).relu()
        for i in range(cfg.n_blocks):
            h = tdnn_residual_block(
                h, cfg.offsets,
                self.params[f"tsb.block{i}.W"], self.params[f"tsb.block{i}.b"],
                dropout_rate, rng, train,
            )
        mask = np.ones(t_count)
        pooled, attention = self_attentive_pool(
            h, mask, self.params["tsb.attn.W1"], self.params["tsb.attn.W2"])
        pooled = dropout(pooled, dropout_rate, rng, train)
        return pooled, attention

    def tab_forward(self, window: ContextWindow, train: bool = False,
                    rng: np.random.Generator | None = None,
                    dropout_rate: float = 0.0) -> tuple[Tensor, Tensor]:
        """Cross-utterance branch: shared projection then pooling over slots."""
        cfg = self.cfg.tab
        if cfg is None:
            raise InvalidConfig("cross-utterance branch is disabled")
        expected = cfg.span[0] + cfg.span[1] + 1
        if window.size != expected:
            raise ShapeError(
                f"window has {window.size} slots, config span {cfg.span} needs {expected}"
            )
        if window.mask.sum() < 1:
            raise InvalidInput("context window is fully masked")
        slots = Tensor(np.asarray(window.vectors, dtype=np.float64))
        projected = affine(slots, self.params["tab.proj.W"], self.params["tab.proj.b"])
        pooled, attention = self_attentive_pool(
            projected, window.mask, self.params["tab.attn.W1"], self.params["tab.attn.W2"])
        pooled = dropout(pooled, dropout_rate, rng, train)
        return pooled, attention

    # -- full model -------------------------------------------------------

    def forward(self, sample: ModelInput, train: bool = False,
                rng: np.random.Generator | None = None,
                dropout_rate: float = 0.0,
                penalty_weight: float | None = None) -> ForwardResult:
        embeddings = []
        penalty = Tensor(0.0)
        if self.cfg.tsb is not None:
            pooled, attention = self.tsb_forward(sample.streams, train, rng, dropout_rate)
            embeddings.append(pooled)
            penalty = penalty + self._penalty(attention, np.ones(attention.shape[1]),
                                              self.cfg.tsb.attention, penalty_weight)
        if self.cfg.tab is not None:
            if sample.context is None:
                raise InvalidInput(f"{sample.utt_id}: no context window supplied")
            if sample.context.mask.sum() < 1:
                # every slot absent (e.g. span (0,0) and the utterance itself has
                # no usable transcript): the branch contributes a zero embedding
                # instead of failing, so such utterances can still be scored
                embeddings.append(Tensor(np.zeros((1, self.cfg.tab.output_dim))))
            else:
                pooled, attention = self.tab_forward(sample.context, train, rng, dropout_rate)
                embeddings.append(pooled)
                penalty = penalty + self._penalty(attention, sample.context.mask,
                                                  self.cfg.tab.attention, penalty_weight)
        fused = embeddings[0] if len(embeddings) == 1 else concat(embeddings, axis=1)
        hidden = affine(fused, self.params["fuse.hidden.W"], self.params["fuse.hidden.b"]).relu()
        return ForwardResult(hidden, penalty)

    @staticmethod
    def _penalty(attention: Tensor, mask: np.ndarray, cfg: AttentionConfig,
                 penalty_weight: float | None) -> Tensor:
        if penalty_weight is not None:
            cfg = replace(cfg, penalty_weight=penalty_weight)
        return attention_penalty(attention, mask, cfg)

    def loss_batch(self, samples: Sequence[ModelInput], train: bool = True,
                   rng: np.random.Generator | None = None,
                   dropout_rate: float = 0.0,
                   penalty_weight: float | None = None) -> tuple[Tensor, np.ndarray]:
        """Mean margin cross-entropy plus mean attention penalty over a batch.

        Also returns the batch argmax predictions (ties go to the lowest
        class index).
        """
        if not samples:
            raise InvalidInput("empty batch")
        results = [self.forward(s, train, rng, dropout_rate, penalty_weight) for s in samples]
        hidden = concat([r.hidden for r in results], axis=0)
        labels = np.array([s.label for s in samples], dtype=np.int64)
        ce = large_margin_softmax_loss(hidden, self.params["fuse.out.W"], labels,
                                       self.cfg.fusion.margin)
        penalty = results[0].penalty
        for r in results[1:]:
            penalty = penalty + r.penalty
        loss = ce + penalty * (1.0 / len(samples))
        w_hat = normalized_class_weights(self.params["fuse.out.W"]).data
        predictions = np.argmax(hidden.data @ w_hat.T, axis=1)
        return loss, predictions

    def predict(self, samples: Sequence[ModelInput]) -> tuple[np.ndarray, np.ndarray]:
        """Eval-mode class predictions and softmax posteriors."""
        if not samples:
            raise InvalidInput("empty batch")
        hidden = concat([self.forward(s, train=False).hidden for s in samples], axis=0)
        logits = class_logits(hidden, self.params["fuse.out.W"], self.cfg.fusion.margin)
        posteriors = softmax_rows(logits).data
        return np.argmax(logits.data, axis=1), posteriors

    # -- parameter access ---------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self.params.items()}

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        if missing:
            raise InvalidInput(f"checkpoint missing tensors: {sorted(missing)}")
        for name, tensor in self.params.items():
            values = np.asarray(state[name], dtype=np.float64)
            if values.shape != tensor.data.shape:
                raise ShapeError(
                    f"{name}: checkpoint shape {values.shape} != model shape {tensor.data.shape}"
                )
            tensor.data = values.copy()

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()


def model_loss(model: TwoBranchModel, batch: Sequence[ModelInput],
               penalty_weight: float | None = None,
               train: bool = False,
               rng: np.random.Generator | None = None,
               dropout_rate: float = 0.0) -> Tensor:
    """Scalar training loss for a batch (cross-entropy plus attention penalty)."""
    loss, _ = model.loss_batch(batch, train=train, rng=rng, dropout_rate=dropout_rate,
                               penalty_weight=penalty_weight)
    return loss
