"""Mini-batch training with newbob learning-rate scheduling."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidInput
from .evaluation import compute_metrics
from .model import ModelInput, TwoBranchModel

INITIAL_LR = 5e-5


@dataclass(frozen=True)
class NewbobState:
    """Hold the learning rate until validation improvement stalls, then halve
    it every epoch; halt when improvement stalls again during the decay."""

    lr: float = INITIAL_LR
    phase: str = "hold"                 # "hold" | "decay"
    prev_metric: float | None = None
    improve_threshold: float = 0.005
    halt: bool = False


def newbob_step(state: NewbobState, validation_accuracy: float) -> NewbobState:
    """Advance the scheduler by one epoch of validation accuracy."""
    if not 0.0 <= validation_accuracy <= 1.0:
        raise InvalidInput(f"validation accuracy must be in [0, 1], got {validation_accuracy}")
    if state.prev_metric is None:
        return replace(state, prev_metric=validation_accuracy)
    improvement = validation_accuracy - state.prev_metric
    if state.phase == "hold":
        if improvement < state.improve_threshold:
            return replace(state, phase="decay", lr=state.lr / 2.0,
                           prev_metric=validation_accuracy)
        return replace(state, prev_metric=validation_accuracy)
    # decay phase: halve every epoch, halt on a second stall
    halted = improvement < state.improve_threshold
    return replace(state, lr=state.lr / 2.0, prev_metric=validation_accuracy, halt=halted)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 60
    seed: int = 0
    dropout: float = 0.5
    momentum: float = 0.9
    initial_lr: float = INITIAL_LR
    improve_threshold: float = 0.005
    validation_fraction: float = 0.1

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidInput(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidInput(f"dropout must be in [0, 1), got {self.dropout}")


@dataclass
class EpochStats:
    mean_loss: float
    accuracy: float


@dataclass
class HistoryRow:
    epoch: int
    lr: float
    train_loss: float
    val_wa: float
    val_ua: float


@dataclass
class FitResult:
    best_state: dict[str, np.ndarray]
    best_val_wa: float
    history: list[HistoryRow] = field(default_factory=list)

    def write_history(self, path: str | Path) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["epoch", "lr", "train_loss", "val_WA", "val_UA"])
            for row in self.history:
                writer.writerow([row.epoch, repr(row.lr), repr(row.train_loss),
                                 repr(row.val_wa), repr(row.val_ua)])


class MomentumSGD:
    """Plain gradient descent with fixed momentum: v <- mu v + g; p <- p - lr v."""

    def __init__(self, model: TwoBranchModel, momentum: float):
        self.model = model
        self.momentum = momentum
        self.velocity = {name: np.zeros_like(t.data) for name, t in model.params.items()}

    def step(self, lr: float) -> None:
        for name, tensor in self.model.params.items():
            grad = tensor.grad
            if grad is None:
                continue
            vel = self.velocity[name]
            vel *= self.momentum
            vel += grad
            tensor.data -= lr * vel


def train_epoch(model: TwoBranchModel, samples: Sequence[ModelInput],
                cfg: TrainConfig, rng: np.random.Generator, lr: float,
                optimizer: MomentumSGD | None = None) -> EpochStats:
    """One shuffled pass over the training split; returns mean loss and accuracy."""
    if not samples:
        raise InvalidInput("empty training split")
    if optimizer is None:
        optimizer = MomentumSGD(model, cfg.momentum)
    order = rng.permutation(len(samples))
    losses = []
    correct = 0
    for start in range(0, len(order), cfg.batch_size):
        batch = [samples[i] for i in order[start:start + cfg.batch_size]]
        model.zero_grad()
        loss, predictions = model.loss_batch(batch, train=True, rng=rng,
                                             dropout_rate=cfg.dropout)
        loss.backward()
        optimizer.step(lr)
        losses.append(float(loss.data) * len(batch))
        correct += int((predictions == np.array([s.label for s in batch])).sum())
    return EpochStats(mean_loss=sum(losses) / len(samples),
                      accuracy=correct / len(samples))


def evaluate_split(model: TwoBranchModel, samples: Sequence[ModelInput],
                   n_classes: int) -> tuple[float, float]:
    predictions, _ = model.predict(samples)
    labels = np.array([s.label for s in samples])
    report = compute_metrics(predictions, labels, n_classes)
    return report.wa, report.ua


def fit(model: TwoBranchModel, train_samples: Sequence[ModelInput],
        val_samples: Sequence[ModelInput], cfg: TrainConfig) -> FitResult:
    """Train under the newbob schedule, keeping the best-validation checkpoint.

    Runs until the scheduler halts or ``max_epochs`` is reached; the returned
    state is the parameter snapshot with the highest validation weighted
    accuracy.
    """
    train_ids = {s.utt_id for s in train_samples}
    val_ids = {s.utt_id for s in val_samples}
    overlap = train_ids & val_ids
    if overlap:
        raise InvalidInput(f"train/validation splits overlap: {sorted(overlap)[:5]}")
    if not train_samples or not val_samples:
        raise InvalidInput("both train and validation splits must be nonempty")

    rng = np.random.default_rng([cfg.seed, 0x7EA1])
    optimizer = MomentumSGD(model, cfg.momentum)
    scheduler = NewbobState(lr=cfg.initial_lr, improve_threshold=cfg.improve_threshold)
    n_classes = model.cfg.fusion.n_classes
    result = FitResult(best_state=model.state_dict(), best_val_wa=-1.0)

    for epoch in range(1, cfg.max_epochs + 1):
        stats = train_epoch(model, train_samples, cfg, rng, scheduler.lr, optimizer)
        val_wa, val_ua = evaluate_split(model, val_samples, n_classes)
        result.history.append(HistoryRow(epoch, scheduler.lr, stats.mean_loss, val_wa, val_ua))
        if val_wa > result.best_val_wa:
            result.best_val_wa = val_wa
            result.best_state = model.state_dict()
        scheduler = newbob_step(scheduler, val_wa)
        if scheduler.halt:
            break
    return result
