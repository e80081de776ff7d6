"""Experiment configuration: one JSON file describes a whole run.

Schema (defaults in parentheses):

    {
      "seed": 7,                         // mandatory
      "manifest": "corpus/manifest.json",
      "dumps_dir": "dumps",              // optional; needed for W/G features
      "out_dir": "runs/exp1",
      "merge_gap": 0.2,
      "splits": {"train": [...ids], "val": [...], "test": [...]},
      "model": {"feature_set": "RA", "hidden": 128, "lstm_layers": 2,
                 "T": 15, "head": "gmm", "dropout": 0.1, "delta_max": 2.0,
                 "r": 16, "point_estimate": "mixture_mean"},
      "train": {"learning_rate": 1e-4, "batch_size": 16, "epochs": 7,
                 "weight_decay": 1e-4, "n_train_segments": 200},
      "metrics": {"mmae_true_range": [-0.5, 1.0],
                   "mmae_pred_range": [0.0, 1.0]}
    }

Splits are explicit dialogue-id lists for reproducibility.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .corpus import DEFAULT_MERGE_GAP, read_manifest
from .errors import ConfigError
from .metrics import MMAE_PRED_RANGE, MMAE_TRUE_RANGE, MetricsConfig
from .nnet import ModelConfig
from .training import TrainConfig

SPLITS = ("train", "val", "test")


@dataclass
class ExperimentConfig:
    seed: int
    manifest: Path
    out_dir: Path
    splits: dict[str, list[str]]
    model: ModelConfig
    train: TrainConfig
    metrics: MetricsConfig
    dumps_dir: Path | None = None
    merge_gap: float = DEFAULT_MERGE_GAP

    def split_ids(self, name: str) -> list[str]:
        if name not in SPLITS:
            raise ConfigError(f"unknown split '{name}' (expected one of {SPLITS})")
        return self.splits.get(name, [])


def _take(doc: dict, section: str, allowed: set[str]) -> dict:
    sub = doc.get(section, {})
    if not isinstance(sub, dict):
        raise ConfigError(f"config section '{section}' must be an object")
    unknown = set(sub) - allowed
    if unknown:
        raise ConfigError(f"config section '{section}': unknown keys "
                          f"{sorted(unknown)}")
    return sub


def load_experiment_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: bad JSON ({exc.msg})") from exc

    top_allowed = {"seed", "manifest", "dumps_dir", "out_dir", "merge_gap",
                   "splits", "model", "train", "metrics"}
    unknown = set(doc) - top_allowed
    if unknown:
        raise ConfigError(f"{path}: unknown top-level keys {sorted(unknown)}")
    if "seed" not in doc:
        raise ConfigError(f"{path}: 'seed' is mandatory")
    for key in ("manifest", "out_dir", "splits", "model"):
        if key not in doc:
            raise ConfigError(f"{path}: '{key}' is mandatory")

    base = path.parent
    manifest = (base / doc["manifest"]).resolve()
    if not manifest.exists():
        raise ConfigError(f"{path}: manifest {manifest} does not exist")
    dumps_dir = None
    if doc.get("dumps_dir"):
        dumps_dir = (base / doc["dumps_dir"]).resolve()

    m = _take(doc, "model", {"feature_set", "hidden", "lstm_layers", "T",
                             "head", "dropout", "delta_max", "r",
                             "point_estimate"})
    if "feature_set" not in m:
        raise ConfigError(f"{path}: model.feature_set is mandatory")
    model = ModelConfig(
        feature_set=m["feature_set"],
        hidden=int(m.get("hidden", 128)),
        lstm_layers=int(m.get("lstm_layers", 2)),
        n_components=int(m.get("T", 15)),
        head=m.get("head", "gmm"),
        dropout=float(m.get("dropout", 0.1)),
        delta_max=float(m.get("delta_max", 2.0)),
        r=int(m.get("r", 16)),
        point_estimate=m.get("point_estimate", "mixture_mean"),
    )
    if model.uses_word or "W" in model.feature_set:
        if dumps_dir is None:
            raise ConfigError(
                f"{path}: feature set {''.join(model.feature_set)} needs "
                f"'dumps_dir' (see leadtime-extract)")
        if not dumps_dir.exists():
            raise ConfigError(f"{path}: dumps_dir {dumps_dir} does not exist")

    t = _take(doc, "train", {"learning_rate", "batch_size", "epochs",
                             "weight_decay", "n_train_segments"})
    train = TrainConfig(
        learning_rate=float(t.get("learning_rate", 1e-4)),
        batch_size=int(t.get("batch_size", 16)),
        epochs=int(t.get("epochs", 7)),
        weight_decay=float(t.get("weight_decay", 1e-4)),
        seed=int(doc["seed"]),
        n_train_segments=int(t.get("n_train_segments", 200)),
    )

    mm = _take(doc, "metrics", {"mmae_true_range", "mmae_pred_range"})
    metrics = MetricsConfig(
        r=model.r,
        delta_max=model.delta_max,
        mmae_true_range=tuple(mm.get("mmae_true_range", MMAE_TRUE_RANGE)),
        mmae_pred_range=tuple(mm.get("mmae_pred_range", MMAE_PRED_RANGE)),
    )

    splits = doc["splits"]
    if not isinstance(splits, dict) or set(splits) - set(SPLITS):
        raise ConfigError(f"{path}: splits must map subset of {SPLITS} to id lists")

    cfg = ExperimentConfig(
        seed=int(doc["seed"]),
        manifest=manifest,
        out_dir=(base / doc["out_dir"]).resolve(),
        splits={k: list(v) for k, v in splits.items()},
        model=model,
        train=train,
        metrics=metrics,
        dumps_dir=dumps_dir,
        merge_gap=float(doc.get("merge_gap", DEFAULT_MERGE_GAP)),
    )
    _check_split_ids(cfg)
    return cfg


def _check_split_ids(cfg: ExperimentConfig) -> None:
    corpus = read_manifest(cfg.manifest)
    known = set(corpus.ids())
    for name, ids in cfg.splits.items():
        missing = sorted(set(ids) - known)
        if missing:
            raise ConfigError(
                f"split '{name}' references unknown dialogue ids {missing[:5]}")
        if len(set(ids)) != len(ids):
            raise ConfigError(f"split '{name}' has duplicate ids")
