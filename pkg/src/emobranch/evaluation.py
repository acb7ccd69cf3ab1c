"""Label schemes, accuracy metrics and cross-validation fold construction."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidInput, InvalidLabel
from .manifest import UtteranceRecord

# Raw corpus label inventory. The four-way scheme keeps the first five
# (merging excitement into happiness) and drops the rest; the five-way
# scheme buckets the rest into an "others" class.
RAW_LABELS = ("happy", "excited", "angry", "sad", "neutral",
              "frustration", "fear", "surprise", "disgust", "other")
_ALIASES = {"hap": "happy", "exc": "excited", "ang": "angry", "sad": "sad",
            "neu": "neutral", "fru": "frustration", "fea": "fear",
            "sur": "surprise", "dis": "disgust", "oth": "other"}

FOUR_WAY_CLASSES = ("happy", "angry", "sad", "neutral")
FIVE_WAY_CLASSES = FOUR_WAY_CLASSES + ("others",)
_CORE_MAP = {"happy": "happy", "excited": "happy", "angry": "angry",
             "sad": "sad", "neutral": "neutral"}


@dataclass(frozen=True)
class LabelScheme:
    """Mapping from raw corpus labels to class indices."""

    mode: str  # "four_way" | "five_way"

    def __post_init__(self):
        if self.mode not in ("four_way", "five_way"):
            raise InvalidInput(f"unknown label scheme {self.mode!r}")

    @property
    def classes(self) -> tuple[str, ...]:
        return FOUR_WAY_CLASSES if self.mode == "four_way" else FIVE_WAY_CLASSES

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def map_raw(self, raw: str) -> int | None:
        """Class index for a raw label, or None when the scheme drops it."""
        canonical = _ALIASES.get(raw.strip().casefold(), raw.strip().casefold())
        if canonical not in RAW_LABELS:
            raise InvalidLabel(f"unknown raw label {raw!r}")
        if canonical in _CORE_MAP:
            return self.classes.index(_CORE_MAP[canonical])
        if self.mode == "five_way":
            return self.classes.index("others")
        return None


def map_labels(records: Sequence[UtteranceRecord],
               scheme: LabelScheme) -> list[tuple[UtteranceRecord, int]]:
    """Attach class indices to records, dropping out-of-scheme utterances."""
    out = []
    for record in records:
        label = scheme.map_raw(record.raw_label)
        if label is not None:
            out.append((record, label))
    return out


@dataclass
class MetricReport:
    """Weighted/unweighted accuracy plus the confusion matrix (rows = truth)."""

    wa: float
    ua: float
    confusion: np.ndarray
    per_class_recall: dict[int, float] = field(default_factory=dict)


def compute_metrics(predictions: Sequence[int], labels: Sequence[int],
                    n_classes: int) -> MetricReport:
    """WA = overall fraction correct; UA = mean recall over supported classes.

    Classes with zero support are excluded from UA with a warning.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise InvalidInput(
            f"predictions ({predictions.shape}) and labels ({labels.shape}) differ in length"
        )
    if labels.size == 0:
        raise InvalidInput("cannot score an empty set")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise InvalidInput(f"labels outside [0, {n_classes})")
    if predictions.min() < 0 or predictions.max() >= n_classes:
        raise InvalidInput(f"predictions outside [0, {n_classes})")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    wa = float(np.trace(confusion)) / float(labels.size)
    recalls: dict[int, float] = {}
    for k in range(n_classes):
        support = confusion[k].sum()
        if support == 0:
            warnings.warn(f"class {k} has no support; excluded from UA")
            continue
        recalls[k] = float(confusion[k, k]) / float(support)
    ua = float(np.mean(list(recalls.values())))
    return MetricReport(wa=wa, ua=ua, confusion=confusion, per_class_recall=recalls)


@dataclass
class FoldPlan:
    """Train/test utterance-id partitions for one CV scheme."""

    folds: list[tuple[list[str], list[str]]]
    scheme: str


FOLD_SCHEMES = ("session5", "speaker10", "single_session5")


def make_folds(records: Sequence[UtteranceRecord], scheme: str) -> FoldPlan:
    """Build speaker-exclusive folds.

    ``session5``: one fold per session, that session's two speakers held out.
    ``speaker10``: one fold per speaker.
    ``single_session5``: a single split holding out the last session.
    """
    if scheme not in FOLD_SCHEMES:
        raise InvalidInput(f"unknown fold scheme {scheme!r} (expected one of {FOLD_SCHEMES})")
    for record in records:
        if record.session is None or not record.speaker:
            raise InvalidInput(f"{record.utt_id}: missing session/speaker metadata")

    folds: list[tuple[list[str], list[str]]] = []
    if scheme in ("session5", "single_session5"):
        sessions = sorted({r.session for r in records})
        held_out = sessions if scheme == "session5" else [sessions[-1]]
        for session in held_out:
            test = [r.utt_id for r in records if r.session == session]
            train = [r.utt_id for r in records if r.session != session]
            folds.append((train, test))
    else:
        speakers = sorted({r.speaker for r in records})
        for speaker in speakers:
            test = [r.utt_id for r in records if r.speaker == speaker]
            train = [r.utt_id for r in records if r.speaker != speaker]
            folds.append((train, test))
    return FoldPlan(folds=folds, scheme=scheme)


def audit_folds(plan: FoldPlan, records: Sequence[UtteranceRecord]) -> None:
    """Raise InvalidInput unless the plan is speaker-exclusive and covers the set.

    Exclusivity: no speaker appears on both sides of a fold. Coverage: for
    the full CV schemes, the union of test sets is the whole record set with
    each utterance tested exactly once.
    """
    by_id = {r.utt_id: r for r in records}
    for i, (train, test) in enumerate(plan.folds):
        if set(train) & set(test):
            raise InvalidInput(f"fold {i}: train/test share utterances")
        train_speakers = {by_id[u].speaker for u in train}
        test_speakers = {by_id[u].speaker for u in test}
        shared = train_speakers & test_speakers
        if shared:
            raise InvalidInput(f"fold {i}: speakers {sorted(shared)} on both sides")
    if plan.scheme in ("session5", "speaker10"):
        tested = [u for _, test in plan.folds for u in test]
        if sorted(tested) != sorted(by_id):
            raise InvalidInput("test sets do not cover every utterance exactly once")


def carve_validation(train_ids: Sequence[str], fraction: float,
                     rng: np.random.Generator) -> tuple[list[str], list[str]]:
    """Split off a validation subset from the training utterances."""
    ids = list(train_ids)
    n_val = max(1, int(round(len(ids) * fraction)))
    chosen = set(rng.permutation(len(ids))[:n_val].tolist())
    val = [u for i, u in enumerate(ids) if i in chosen]
    train = [u for i, u in enumerate(ids) if i not in chosen]
    return train, val
