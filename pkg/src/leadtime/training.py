"""Training loop: batched BPTT over sampled segments, Adam, checkpointing.

One epoch shuffles the training segments, steps Adam per batch on the masked
mixture (or heatmap) loss, then scores the validation split. The returned
best checkpoint minimizes validation MMAE, matching how checkpoints are
selected for reporting. Everything is driven by explicit seeds; rerunning
with the same config yields bit-identical parameters.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, TrainingDiverged
from .nnet import ModelConfig, Params, init_params, loss_and_grads
from .optim import AdamState, adam_init, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 16
    epochs: int = 7
    weight_decay: float = 1e-4
    seed: int = 0
    n_train_segments: int = 200

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0:
            raise ConfigError("learning_rate and batch_size must be positive")
        if self.epochs < 0 or self.weight_decay < 0:
            raise ConfigError("epochs and weight_decay must be >= 0")


@dataclass
class SegmentTensors:
    """Model-ready arrays for one training segment."""
    x_audio: np.ndarray | None
    x_word: np.ndarray | None
    tau: np.ndarray
    mask: np.ndarray


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_nll: float
    val_mmae: float

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "train_loss": self.train_loss,
                "val_nll": self.val_nll, "val_mmae": self.val_mmae}


@dataclass
class TrainResult:
    best_params: Params
    best_epoch: int
    logs: list[EpochLog] = field(default_factory=list)
    checkpoints: list[Params] = field(default_factory=list)


def _stack(items: list[np.ndarray | None]) -> np.ndarray | None:
    return None if items[0] is None else np.stack(items)


def _batches(segments: list[SegmentTensors], order: np.ndarray, size: int):
    for i in range(0, len(order), size):
        chunk = [segments[j] for j in order[i:i + size]]
        yield (_stack([s.x_audio for s in chunk]),
               _stack([s.x_word for s in chunk]),
               np.stack([s.tau for s in chunk]),
               np.stack([s.mask for s in chunk]))


def train(model_config: ModelConfig, train_config: TrainConfig,
          segments: list[SegmentTensors],
          validate: Callable[[Params], tuple[float, float]],
          input_dim: int, word_dim: int) -> TrainResult:
    """Train and select the best epoch by validation MMAE.

    ``validate`` maps parameters to (validation NLL, validation MMAE). With
    epochs=0 the initialized parameters are returned untrained, with a
    warning. A non-finite training loss aborts with TrainingDiverged.
    """
    rng = np.random.default_rng(train_config.seed)
    params = init_params(model_config, input_dim, word_dim, rng)
    result = TrainResult(best_params=_copy(params), best_epoch=0)
    if train_config.epochs == 0:
        log.warning("epochs=0: returning initialized, untrained parameters")
        return result
    if not segments:
        raise ConfigError("no training segments")

    state: AdamState = adam_init(params)
    best_mmae = np.inf
    for epoch in range(1, train_config.epochs + 1):
        epoch_rng = np.random.default_rng(
            np.random.SeedSequence((train_config.seed, epoch)))
        order = epoch_rng.permutation(len(segments))
        losses = []
        for nb, (xa, xw, tau, mask) in enumerate(
                _batches(segments, order, train_config.batch_size)):
            loss, grads, _ = loss_and_grads(
                params, model_config, xa, xw, tau, mask, train=True,
                dropout_rng=epoch_rng)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {nb}")
            adam_step(params, grads, state, lr=train_config.learning_rate,
                      weight_decay=train_config.weight_decay)
            losses.append(loss)
        val_nll, val_mmae = validate(params)
        entry = EpochLog(epoch, float(np.mean(losses)), val_nll, val_mmae)
        result.logs.append(entry)
        result.checkpoints.append(_copy(params))
        log.info("epoch %d: train_loss=%.4f val_nll=%.4f val_mmae=%.4f",
                 epoch, entry.train_loss, val_nll, val_mmae)
        if val_mmae < best_mmae:
            best_mmae = val_mmae
            result.best_params = _copy(params)
            result.best_epoch = epoch
    return result


def _copy(params: Params) -> Params:
    return {k: v.copy() for k, v in params.items()}
