"""Cross-validation experiment orchestration and report emission."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .checkpoint import save_checkpoint
from .dataset import CorpusData, assemble_inputs
from .errors import InvalidInput, MissingData
from .evaluation import (FoldPlan, LabelScheme, MetricReport, carve_validation,
                         compute_metrics, map_labels)
from .model import ModelConfig, TwoBranchModel
from .training import TrainConfig, fit

TEXT_CONDITIONS = ("ref", "asr", "mix")


def condition_sources(text_condition: str) -> tuple[str, str]:
    """(train source, test source) for a transcript condition."""
    if text_condition not in TEXT_CONDITIONS:
        raise InvalidInput(f"unknown text condition {text_condition!r}")
    if text_condition == "mix":
        return "ref", "asr"
    return text_condition, text_condition


@dataclass
class FoldResult:
    metrics: MetricReport
    test_ids: list[str]
    predictions: np.ndarray
    labels: np.ndarray


@dataclass
class CvReport:
    """Per-fold metrics plus their mean and standard deviation."""

    folds: list[FoldResult] = field(default_factory=list)

    @property
    def wa_values(self) -> np.ndarray:
        return np.array([f.metrics.wa for f in self.folds])

    @property
    def ua_values(self) -> np.ndarray:
        return np.array([f.metrics.ua for f in self.folds])

    @property
    def wa_mean(self) -> float:
        return float(self.wa_values.mean())

    @property
    def ua_mean(self) -> float:
        return float(self.ua_values.mean())

    @property
    def wa_std(self) -> float:
        return float(self.wa_values.std(ddof=1)) if len(self.folds) > 1 else 0.0

    @property
    def ua_std(self) -> float:
        return float(self.ua_values.std(ddof=1)) if len(self.folds) > 1 else 0.0

    def to_kv(self) -> dict[str, str]:
        out = {
            "n_folds": str(len(self.folds)),
            "wa_mean": repr(self.wa_mean), "wa_std": repr(self.wa_std),
            "ua_mean": repr(self.ua_mean), "ua_std": repr(self.ua_std),
        }
        for i, fold in enumerate(self.folds):
            out[f"fold{i}.wa"] = repr(fold.metrics.wa)
            out[f"fold{i}.ua"] = repr(fold.metrics.ua)
        return out

    def format_table(self, title: str = "cross-validation") -> str:
        lines = [f"{title}", f"{'fold':>6s} {'WA%':>8s} {'UA%':>8s}"]
        for i, fold in enumerate(self.folds):
            lines.append(f"{i:>6d} {100 * fold.metrics.wa:>8.2f} {100 * fold.metrics.ua:>8.2f}")
        lines.append(f"{'mean':>6s} {100 * self.wa_mean:>8.2f} {100 * self.ua_mean:>8.2f}")
        lines.append(f"{'std':>6s} {100 * self.wa_std:>8.2f} {100 * self.ua_std:>8.2f}")
        return "\n".join(lines) + "\n"


def write_kv(path: str | Path, pairs: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for key in pairs:
            handle.write(f"{key} = {pairs[key]}\n")


def run_cv(corpus: CorpusData, model_cfg: ModelConfig, train_cfg: TrainConfig,
           plan: FoldPlan, text_condition: str = "ref",
           scheme: LabelScheme | None = None,
           out_dir: str | Path | None = None) -> CvReport:
    """Train and score one model per fold; aggregate WA/UA across folds.

    ``text_condition`` picks the sentence-embedding source per side
    ("mix" trains on reference embeddings and tests on ASR ones). Word-vector
    frames require reference alignments, so "glove" is only valid under the
    full reference condition. Per-fold checkpoints and reports are written
    to ``out_dir`` when given.
    """
    if scheme is None:
        scheme = LabelScheme("four_way" if model_cfg.fusion.n_classes == 4 else "five_way")
    if scheme.n_classes != model_cfg.fusion.n_classes:
        raise InvalidInput(
            f"label scheme has {scheme.n_classes} classes, model expects "
            f"{model_cfg.fusion.n_classes}"
        )
    train_source, test_source = condition_sources(text_condition)
    if "glove" in corpus.features and (train_source != "ref" or test_source != "ref"):
        raise MissingData(
            "word-vector frames need reference alignments; drop 'glove' from the "
            f"features for the {text_condition!r} condition"
        )
    if "bert" in corpus.features:
        for source in {train_source, test_source}:
            if source not in corpus.stores:
                raise MissingData(f"condition {text_condition!r} needs the {source!r} "
                                  "sentence store, which was not loaded")

    labeled = {record.utt_id: (record, label)
               for record, label in map_labels(corpus.records, scheme)}
    span = model_cfg.tab.span if model_cfg.tab is not None else (0, 0)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    report = CvReport()
    for fold_index, (train_ids, test_ids) in enumerate(plan.folds):
        train_ids = [u for u in train_ids if u in labeled]
        test_ids = [u for u in test_ids if u in labeled]
        if not train_ids or not test_ids:
            raise InvalidInput(f"fold {fold_index}: empty train or test split after labeling")
        fold_seed = train_cfg.seed * 100003 + fold_index
        rng = np.random.default_rng([fold_seed, 0xCA7])
        core_ids, val_ids = carve_validation(train_ids, train_cfg.validation_fraction, rng)

        train_inputs = assemble_inputs(corpus, [labeled[u] for u in core_ids], span, train_source)
        val_inputs = assemble_inputs(corpus, [labeled[u] for u in val_ids], span, train_source)
        test_inputs = assemble_inputs(corpus, [labeled[u] for u in test_ids], span, test_source)

        model = TwoBranchModel(model_cfg, seed=fold_seed)
        fold_cfg = replace(train_cfg, seed=fold_seed)
        result = fit(model, train_inputs, val_inputs, fold_cfg)
        model.load_state(result.best_state)

        predictions, _ = model.predict(test_inputs)
        labels = np.array([s.label for s in test_inputs])
        metrics = compute_metrics(predictions, labels, scheme.n_classes)
        report.folds.append(FoldResult(metrics, test_ids, predictions, labels))

        if out_dir is not None:
            save_checkpoint(out_dir / f"fold{fold_index}.ckpt", result.best_state)
            result.write_history(out_dir / f"fold{fold_index}_history.csv")
            write_kv(out_dir / f"fold{fold_index}.kv", {
                "wa": repr(metrics.wa), "ua": repr(metrics.ua),
                "n_test": str(len(test_ids)),
            })

    if out_dir is not None:
        write_kv(out_dir / "report.kv", report.to_kv())
        (out_dir / "report.txt").write_text(report.format_table())
    return report
