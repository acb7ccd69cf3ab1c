"""Flat key = value experiment configuration with file < flag layering."""
from __future__ import annotations

import hashlib
import json
import platform
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import FormatError

# every run starts from these; a config file overrides them and command-line
# flags override the file
DEFAULTS: dict[str, str] = {
    "features": "audio25,glove,bert",
    "labels": "4way",
    "fold_scheme": "session5",
    "text": "ref",
    "context": "3,3",
    "seed": "0",
    # model
    "encoder_dim": "256",
    "n_blocks": "4",
    "offsets": "-2,-1,0,1,2",
    "attn_hidden": "64",
    "n_heads": "5",
    "spiky_heads": "3",
    "smooth_heads": "2",
    "penalty_weight": "0.05",
    "proj_dim": "128",
    "fusion_hidden": "256",
    "margin": "2",
    "margin_scale": "30.0",
    # training
    "batch_size": "32",
    "max_epochs": "60",
    "dropout": "0.5",
    "momentum": "0.9",
    "initial_lr": "5e-5",
    "improve_threshold": "0.005",
    "validation_fraction": "0.1",
}


def parse_kv_file(path: str | Path) -> dict[str, str]:
    """Read ``key = value`` lines; '#' starts a comment."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise FormatError(f"{path}:{lineno}: expected 'key = value'")
            key, value = stripped.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def write_kv_file(path: str | Path, pairs: Mapping[str, str]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for key in pairs:
            handle.write(f"{key} = {pairs[key]}\n")


def resolve_config(file_path: str | Path | None = None,
                   overrides: Mapping[str, str] | None = None) -> dict[str, str]:
    """Layer defaults, then the config file, then explicit overrides."""
    cfg = dict(DEFAULTS)
    if file_path is not None:
        for key, value in parse_kv_file(file_path).items():
            cfg[key] = value
    if overrides:
        for key, value in overrides.items():
            if value is not None:
                cfg[key] = str(value)
    return cfg


def config_hash(cfg: Mapping[str, str]) -> str:
    canonical = "".join(f"{k}={cfg[k]}\n" for k in sorted(cfg))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_stamp(path: str | Path, cfg: Mapping[str, str]) -> None:
    """Reproducibility stamp: the resolved config, its hash, and versions."""
    from . import __version__
    stamp = {
        "config": dict(sorted(cfg.items())),
        "config_hash": config_hash(cfg),
        "seed": int(cfg.get("seed", "0")),
        "versions": {
            "emobranch": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    Path(path).write_text(json.dumps(stamp, indent=2, sort_keys=True) + "\n")
