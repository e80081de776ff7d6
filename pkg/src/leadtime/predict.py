"""Streaming predictors: trained checkpoints, the silence baseline, the oracle.

Every predictor emits one lead-time estimate per frame, bounded to
[0, delta_max].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import FrameGrid, FrameSeries
from .errors import ValidationError
from .features import FeatureBundle
from .nnet import Checkpoint, forward, point_estimate

SILENCE_THRESHOLD = 0.01
SILENCE_GAP = 0.7


@dataclass
class PredictorOutput:
    grid: FrameGrid
    tau_hat: np.ndarray

    def __post_init__(self):
        self.tau_hat = np.asarray(self.tau_hat, dtype=np.float64)
        if self.tau_hat.shape != (self.grid.n_frames,):
            raise ValidationError("tau_hat length does not match grid")
        if not np.all(np.isfinite(self.tau_hat)):
            raise ValidationError("tau_hat contains NaN or Inf")


def silence_baseline(rmse_series: FrameSeries,
                     threshold: float = SILENCE_THRESHOLD,
                     gap: float = SILENCE_GAP,
                     delta_max: float = 2.0) -> PredictorOutput:
    """Predict 0 after strictly more than `gap` seconds of voice inactivity.

    A frame is inactive iff rmse <= threshold. "More than gap" means at least
    floor(gap / frame_shift) + 1 consecutive inactive frames up to and
    including the current one (15 frames at 50 ms); anything less, including
    the warm-up at segment start, predicts delta_max.
    """
    vals = rmse_series.values[:, 0]
    shift = rmse_series.grid.frame_shift
    # smallest frame count spanning strictly more than `gap` seconds
    # (15 frames at 50 ms); the epsilon guards 0.7/0.05 = 13.999...
    need = int(np.floor(gap / shift + 1e-9)) + 1
    inactive = vals <= threshold
    idx = np.arange(len(vals))
    last_active = np.maximum.accumulate(np.where(~inactive, idx, -1))
    run = idx - last_active  # consecutive inactive frames ending here
    out = np.where(run >= need, 0.0, delta_max)
    return PredictorOutput(rmse_series.grid, out)


def model_predict(checkpoint: Checkpoint, bundle: FeatureBundle) -> PredictorOutput:
    """Forward + point estimate over one feature bundle; causal and
    deterministic (dropout is inference-disabled)."""
    config = checkpoint.config
    missing = [l for l in config.feature_set if l not in bundle.letters]
    if missing:
        raise ValidationError(
            "missing stream " + ", ".join(missing)
            + f" (checkpoint needs {''.join(config.feature_set)})")
    audio = None
    if config.audio_letters:
        audio = bundle.audio
        if audio is None or audio.shape[1] != checkpoint.input_dim:
            got = None if audio is None else audio.shape[1]
            raise ValidationError(
                f"audio feature dim {got} != checkpoint input_dim "
                f"{checkpoint.input_dim}")
    word = None
    if config.uses_word:
        word = bundle.word
        if word is None or word.shape[1] != checkpoint.word_dim:
            got = None if word is None else word.shape[1]
            raise ValidationError(
                f"word embedding dim {got} != checkpoint word_dim "
                f"{checkpoint.word_dim}")
    out, _ = forward(checkpoint.params, config,
                     None if audio is None else audio[None],
                     None if word is None else word[None], train=False)
    est = point_estimate(out, config)[0]
    return PredictorOutput(bundle.grid, est)


def oracle_predictor(grid: FrameGrid, tau: np.ndarray) -> PredictorOutput:
    """Feeds the ground-truth lead time back as the prediction."""
    return PredictorOutput(grid, np.array(tau, dtype=np.float64, copy=True))
