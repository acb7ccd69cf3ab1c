"""Command-line entry point for the full pipeline.

Subcommands: extract-features, embed-align, train, evaluate, cv, synth,
gradcheck. Every subcommand takes an optional config file plus flag
overrides (flags win), and every run that writes outputs also writes a
reproducibility stamp (resolved config, config hash, seed, versions).
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, featio, synth
from .checkpoint import load_checkpoint, save_checkpoint
from .config import DEFAULTS, config_hash, resolve_config, write_kv_file, write_stamp
from .dataset import build_corpus, assemble_inputs, extract_audio25, extract_fbk250
from .errors import EmobranchError
from .evaluation import LabelScheme, audit_folds, carve_validation, compute_metrics, make_folds, map_labels
from .experiments import condition_sources, run_cv, write_kv
from .gradcheck import gradient_suite
from .layers import AttentionConfig, MarginConfig
from .manifest import read_manifest
from .model import FusionConfig, ModelConfig, TabConfig, TsbConfig, TwoBranchModel
from .textio import load_word_table, words_to_frames
from .training import TrainConfig, fit

FEATURE_CHOICES = ("audio25", "fbk250", "glove", "bert")


def _parse_span(text: str, error) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        error(f"--context must be 'c1,c2', got {text!r}")
    try:
        before, after = int(parts[0]), int(parts[1])
    except ValueError:
        error(f"--context components must be integers, got {text!r}")
    if before < 0 or after < 0:
        error(f"--context components must be nonnegative, got {text!r}")
    return before, after


def _parse_features(text: str, error) -> tuple[str, ...]:
    names = tuple(n.strip() for n in text.split(",") if n.strip())
    for name in names:
        if name not in FEATURE_CHOICES:
            error(f"unknown feature {name!r} (choices: {', '.join(FEATURE_CHOICES)})")
    if not names:
        error("--features must name at least one feature")
    return names


def build_model_config(cfg: dict[str, str], error) -> ModelConfig:
    features = _parse_features(cfg["features"], error)
    span = _parse_span(cfg["context"], error)
    attention = AttentionConfig(
        n_heads=int(cfg["n_heads"]), spiky_heads=int(cfg["spiky_heads"]),
        smooth_heads=int(cfg["smooth_heads"]),
        penalty_weight=float(cfg["penalty_weight"]), attn_hidden=int(cfg["attn_hidden"]))
    tsb = None
    if any(f in features for f in ("audio25", "fbk250", "glove")):
        tsb = TsbConfig(
            use_audio25="audio25" in features, use_fbk250="fbk250" in features,
            use_glove="glove" in features, encoder_dim=int(cfg["encoder_dim"]),
            n_blocks=int(cfg["n_blocks"]),
            offsets=tuple(int(o) for o in cfg["offsets"].split(",")),
            attention=attention)
    tab = None
    if "bert" in features:
        tab = TabConfig(span=span, proj_dim=int(cfg["proj_dim"]), attention=attention)
    n_classes = 4 if cfg["labels"] == "4way" else 5
    fusion = FusionConfig(hidden_dim=int(cfg["fusion_hidden"]), n_classes=n_classes,
                          margin=MarginConfig(margin=int(cfg["margin"]),
                                              scale=float(cfg["margin_scale"])))
    return ModelConfig(tsb=tsb, tab=tab, fusion=fusion)


def build_train_config(cfg: dict[str, str]) -> TrainConfig:
    return TrainConfig(
        batch_size=int(cfg["batch_size"]), max_epochs=int(cfg["max_epochs"]),
        seed=int(cfg["seed"]), dropout=float(cfg["dropout"]),
        momentum=float(cfg["momentum"]), initial_lr=float(cfg["initial_lr"]),
        improve_threshold=float(cfg["improve_threshold"]),
        validation_fraction=float(cfg["validation_fraction"]))


def _label_scheme(cfg: dict[str, str], error) -> LabelScheme:
    if cfg["labels"] not in ("4way", "5way"):
        error(f"--labels must be 4way or 5way, got {cfg['labels']!r}")
    return LabelScheme("four_way" if cfg["labels"] == "4way" else "five_way")


def _fold_scheme(cfg: dict[str, str], error) -> str:
    mapping = {"session5": "session5", "speaker10": "speaker10",
               "single-session5": "single_session5"}
    if cfg["fold_scheme"] not in mapping:
        error(f"--fold-scheme must be one of {sorted(mapping)}, got {cfg['fold_scheme']!r}")
    return mapping[cfg["fold_scheme"]]


def _load_corpus(cfg: dict[str, str], error):
    if not cfg.get("manifest"):
        error("--manifest is required")
    features = _parse_features(cfg["features"], error)
    return build_corpus(
        cfg["manifest"], features,
        word_table_path=cfg.get("word_table") or None,
        ref_store_path=cfg.get("ref_store") or None,
        asr_store_path=cfg.get("asr_store") or None,
        feature_dir=cfg.get("feature_dir") or None)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--manifest", help="corpus manifest (JSON lines)")
    parser.add_argument("--fold-scheme", dest="fold_scheme",
                        choices=["session5", "speaker10", "single-session5"])
    parser.add_argument("--labels", choices=["4way", "5way"])
    parser.add_argument("--text", choices=["ref", "asr", "mix"])
    parser.add_argument("--context", help="context span 'c1,c2'")
    parser.add_argument("--features", help="comma list of audio25,fbk250,glove,bert")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--word-table", dest="word_table")
    parser.add_argument("--ref-store", dest="ref_store")
    parser.add_argument("--asr-store", dest="asr_store")
    parser.add_argument("--feature-dir", dest="feature_dir")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key")


def _resolve(args: argparse.Namespace, error) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for key in ("manifest", "fold_scheme", "labels", "text", "context", "features",
                "seed", "word_table", "ref_store", "asr_store", "feature_dir"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = str(value)
    for item in getattr(args, "set", []):
        if "=" not in item:
            error(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        if key.strip() not in DEFAULTS and key.strip() not in (
                "manifest", "word_table", "ref_store", "asr_store", "feature_dir"):
            error(f"--set: unknown config key {key.strip()!r}")
        overrides[key.strip()] = value.strip()
    cfg = resolve_config(getattr(args, "config", None), overrides)
    # flags already validated by argparse choices; validate free-form values here
    _parse_features(cfg["features"], error)
    _parse_span(cfg["context"], error)
    return cfg


def cmd_synth(args, error) -> int:
    corpus = synth.generate(args.out, seed=args.seed or 0, n_dialogues=args.dialogues,
                            utterances_per_dialogue=args.utts,
                            asr_failure_rate=args.failure_rate)
    stamp_cfg = {"command": "synth", "seed": str(args.seed or 0),
                 "dialogues": str(args.dialogues), "utts": str(args.utts),
                 "failure_rate": str(args.failure_rate)}
    write_stamp(Path(args.out) / "stamp.json", stamp_cfg)
    print(f"wrote {corpus.n_utterances} utterances "
          f"({corpus.n_failures} ASR failures) under {corpus.out_dir}")
    return 0


def cmd_extract_features(args, error) -> int:
    cfg = _resolve(args, error)
    if not cfg.get("manifest"):
        error("--manifest is required")
    records = read_manifest(cfg["manifest"])
    base = Path(cfg["manifest"]).parent
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    features = [f for f in _parse_features(cfg["features"], error)
                if f in ("audio25", "fbk250")]
    extractors = {"audio25": extract_audio25, "fbk250": extract_fbk250}
    for record in records:
        audio_path = Path(record.audio_path)
        if not audio_path.is_absolute():
            audio_path = base / audio_path
        for name in features:
            feats = extractors[name](audio_path)
            featio.write_features(out_dir / f"{record.utt_id}.{name}.feat", feats)
    write_stamp(out_dir / "stamp.json", cfg)
    print(f"extracted {', '.join(features)} for {len(records)} utterances -> {out_dir}")
    return 0


def cmd_embed_align(args, error) -> int:
    cfg = _resolve(args, error)
    if not cfg.get("manifest"):
        error("--manifest is required")
    if not cfg.get("word_table"):
        error("--word-table is required")
    records = read_manifest(cfg["manifest"])
    table = load_word_table(cfg["word_table"])
    base = Path(cfg["manifest"]).parent
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .audio import read_wav
    from .dataset import SHORT_SPEC
    for record in records:
        audio_path = Path(record.audio_path)
        if not audio_path.is_absolute():
            audio_path = base / audio_path
        signal = read_wav(audio_path)
        t_count = signal.samples.size // SHORT_SPEC.shift_samples(signal.sample_rate)
        mat = words_to_frames(record.ref_alignments, table, t_count, SHORT_SPEC.frame_shift_ms)
        featio.write_features(out_dir / f"{record.utt_id}.glove.feat", mat)
    write_stamp(out_dir / "stamp.json", cfg)
    print(f"aligned word vectors for {len(records)} utterances -> {out_dir}")
    return 0


def cmd_train(args, error) -> int:
    cfg = _resolve(args, error)
    model_cfg = build_model_config(cfg, error)
    train_cfg = build_train_config(cfg)
    scheme = _label_scheme(cfg, error)
    corpus = _load_corpus(cfg, error)
    plan = make_folds(corpus.records, _fold_scheme(cfg, error))
    audit_folds(plan, corpus.records)
    train_source, _ = condition_sources(cfg["text"])
    labeled = {r.utt_id: (r, label) for r, label in map_labels(corpus.records, scheme)}
    train_ids = [u for u in plan.folds[0][0] if u in labeled]
    rng = np.random.default_rng([train_cfg.seed, 0xCA7])
    core_ids, val_ids = carve_validation(train_ids, train_cfg.validation_fraction, rng)
    span = model_cfg.tab.span if model_cfg.tab else (0, 0)
    train_inputs = assemble_inputs(corpus, [labeled[u] for u in core_ids], span, train_source)
    val_inputs = assemble_inputs(corpus, [labeled[u] for u in val_ids], span, train_source)

    model = TwoBranchModel(model_cfg, seed=train_cfg.seed)
    result = fit(model, train_inputs, val_inputs, train_cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "model.ckpt", result.best_state)
    result.write_history(out_dir / "history.csv")
    write_kv_file(out_dir / "config.kv", cfg)
    write_stamp(out_dir / "stamp.json", cfg)
    print(f"best validation WA {result.best_val_wa:.4f} after "
          f"{len(result.history)} epochs -> {out_dir / 'model.ckpt'}")
    return 0


def cmd_evaluate(args, error) -> int:
    cfg = _resolve(args, error)
    model_cfg = build_model_config(cfg, error)
    scheme = _label_scheme(cfg, error)
    corpus = _load_corpus(cfg, error)
    plan = make_folds(corpus.records, _fold_scheme(cfg, error))
    _, test_source = condition_sources(cfg["text"])
    labeled = {r.utt_id: (r, label) for r, label in map_labels(corpus.records, scheme)}
    test_ids = [u for u in plan.folds[0][1] if u in labeled]
    span = model_cfg.tab.span if model_cfg.tab else (0, 0)
    test_inputs = assemble_inputs(corpus, [labeled[u] for u in test_ids], span, test_source)

    model = TwoBranchModel(model_cfg, seed=int(cfg["seed"]))
    model.load_state(load_checkpoint(args.checkpoint))
    predictions, _ = model.predict(test_inputs)
    labels = np.array([s.label for s in test_inputs])
    report = compute_metrics(predictions, labels, scheme.n_classes)
    print(f"WA {100 * report.wa:.2f}%  UA {100 * report.ua:.2f}%  (n={len(test_inputs)})")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_kv(out_dir / "metrics.kv", {"wa": repr(report.wa), "ua": repr(report.ua),
                                          "n_test": str(len(test_inputs))})
        write_stamp(out_dir / "stamp.json", cfg)
    return 0


def cmd_cv(args, error) -> int:
    cfg = _resolve(args, error)
    model_cfg = build_model_config(cfg, error)
    train_cfg = build_train_config(cfg)
    scheme = _label_scheme(cfg, error)
    corpus = _load_corpus(cfg, error)
    labeled_records = [r for r, _ in map_labels(corpus.records, scheme)]
    plan = make_folds(labeled_records, _fold_scheme(cfg, error))
    audit_folds(plan, labeled_records)
    report = run_cv(corpus, model_cfg, train_cfg, plan, cfg["text"], scheme,
                    out_dir=args.out)
    if args.out:
        write_stamp(Path(args.out) / "stamp.json", cfg)
    title = (f"{cfg['features']} | {cfg['labels']} | text={cfg['text']} "
             f"| context={cfg['context']} | {cfg['fold_scheme']}")
    if args.emit_table:
        print(report.format_table(title))
    else:
        print(f"{title}: WA {100 * report.wa_mean:.2f}±{100 * report.wa_std:.2f}  "
              f"UA {100 * report.ua_mean:.2f}±{100 * report.ua_std:.2f}")
    return 0


def cmd_gradcheck(args, error) -> int:
    failed = False
    for name, report in gradient_suite():
        status = "ok" if report.passed else "FAIL"
        print(f"{name:<32s} max rel err {report.max_error:.3e}  [{status}]")
        failed = failed or not report.passed
    return 1 if failed else 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="emobranch",
        description="Two-branch multimodal emotion recognition pipeline")
    parser.add_argument("--version", action="version", version=f"emobranch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic corpus")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--dialogues", type=int, default=50)
    p_synth.add_argument("--utts", type=int, default=12)
    p_synth.add_argument("--failure-rate", dest="failure_rate", type=float, default=0.1)
    p_synth.set_defaults(func=cmd_synth)

    p_extract = sub.add_parser("extract-features", help="write EMOF feature files")
    _add_common(p_extract)
    p_extract.add_argument("--out", required=True)
    p_extract.set_defaults(func=cmd_extract_features)

    p_align = sub.add_parser("embed-align", help="write per-frame word-vector files")
    _add_common(p_align)
    p_align.add_argument("--out", required=True)
    p_align.set_defaults(func=cmd_embed_align)

    p_train = sub.add_parser("train", help="train on the first fold's training side")
    _add_common(p_train)
    p_train.add_argument("--out", required=True)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="score a checkpoint on the first fold's test side")
    _add_common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--out")
    p_eval.set_defaults(func=cmd_evaluate)

    p_cv = sub.add_parser("cv", help="full cross-validation")
    _add_common(p_cv)
    p_cv.add_argument("--out")
    p_cv.add_argument("--emit-table", action="store_true",
                      help="print the per-fold table instead of one summary line")
    p_cv.set_defaults(func=cmd_cv)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p_grad.set_defaults(func=cmd_gradcheck)

    args = parser.parse_args(argv)
    try:
        return args.func(args, parser.error)
    except EmobranchError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"FileNotFoundError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
