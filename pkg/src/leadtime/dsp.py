"""Classical per-frame acoustic features on a fixed frame grid.

All features share one grid convention: frame t covers samples in
[t*frame_shift, t*frame_shift + window_len), the hop is 50 ms and the window
100 ms by default, and the number of frames for a waveform of n samples is
floor((n - 1) / hop_samples) + 1. Trailing partial windows are zero-padded so
every feature stream computed on one waveform has the same length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

DEFAULT_FRAME_SHIFT = 0.05
DEFAULT_WINDOW_LEN = 0.10

# Unvoiced frames emit 0 Hz so downstream feature matrices never carry NaN.
PITCH_FMIN = 60.0
PITCH_FMAX = 400.0
VOICING_THRESHOLD = 0.3
YIN_THRESHOLD = 0.15


@dataclass(frozen=True)
class FrameGrid:
    """Fixed-rate analysis grid shared by every feature stream."""

    frame_shift: float = DEFAULT_FRAME_SHIFT
    window_len: float = DEFAULT_WINDOW_LEN
    n_frames: int = 0

    def __post_init__(self):
        if self.frame_shift <= 0:
            raise ValidationError("frame_shift must be positive")
        if self.window_len < self.frame_shift:
            raise ValidationError("window_len must be >= frame_shift")
        if self.n_frames < 0:
            raise ValidationError("n_frames must be >= 0")

    def times(self) -> np.ndarray:
        """Start time of each frame, in seconds."""
        return np.arange(self.n_frames) * self.frame_shift

    @staticmethod
    def for_samples(n_samples: int, sample_rate: int,
                    frame_shift: float = DEFAULT_FRAME_SHIFT,
                    window_len: float = DEFAULT_WINDOW_LEN) -> "FrameGrid":
        if n_samples <= 0:
            return FrameGrid(frame_shift, window_len, 0)
        hop = hop_samples(sample_rate, frame_shift)
        n = (n_samples - 1) // hop + 1
        return FrameGrid(frame_shift, window_len, int(n))

    @staticmethod
    def for_duration(duration: float, sample_rate: int,
                     frame_shift: float = DEFAULT_FRAME_SHIFT,
                     window_len: float = DEFAULT_WINDOW_LEN) -> "FrameGrid":
        n_samples = int(round(duration * sample_rate))
        return FrameGrid.for_samples(n_samples, sample_rate, frame_shift, window_len)


@dataclass
class FrameSeries:
    """Per-frame feature matrix (n_frames x d) with named columns."""

    grid: FrameGrid
    names: tuple[str, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.shape != (self.grid.n_frames, len(self.names)):
            raise ValidationError(
                f"FrameSeries shape {self.values.shape} does not match "
                f"{self.grid.n_frames} frames x {len(self.names)} features")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("FrameSeries contains NaN or Inf")

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]


def hop_samples(sample_rate: int, frame_shift: float = DEFAULT_FRAME_SHIFT) -> int:
    hop = int(round(sample_rate * frame_shift))
    if hop <= 0:
        raise ValidationError("frame_shift too small for this sample rate")
    return hop


def _frame_signal(x: np.ndarray, sample_rate: int, grid: FrameGrid) -> np.ndarray:
    """Return the (n_frames, window) matrix of analysis windows, zero-padded."""
    hop = hop_samples(sample_rate, grid.frame_shift)
    win = int(round(sample_rate * grid.window_len))
    padded = np.zeros((grid.n_frames - 1) * hop + win, dtype=np.float64)
    padded[:len(x)] = x
    idx = np.arange(grid.n_frames)[:, None] * hop + np.arange(win)[None, :]
    return padded[idx]


def _as_waveform(waveform) -> np.ndarray:
    x = np.asarray(waveform, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValidationError("waveform is empty")
    if not np.all(np.isfinite(x)):
        raise ValidationError("waveform contains NaN or Inf")
    return x


def rmse(waveform, sample_rate: int, grid: FrameGrid | None = None) -> FrameSeries:
    """Root-mean-square energy per frame.

    The trailing partial window is zero-padded, so tail frames average over
    the full window length.
    """
    x = _as_waveform(waveform)
    if grid is None:
        grid = FrameGrid.for_samples(len(x), sample_rate)
    frames = _frame_signal(x, sample_rate, grid)
    vals = np.sqrt(np.mean(frames * frames, axis=1))
    return FrameSeries(grid, ("rmse",), vals)


def voice_activity(rmse_series: FrameSeries, threshold: float) -> np.ndarray:
    """Boolean per-frame activity: active iff rmse > threshold."""
    if threshold <= 0:
        raise ValidationError("VAD threshold must be > 0")
    return rmse_series.values[:, 0] > threshold


def _band_lags(sample_rate: int, fmin: float, fmax: float) -> tuple[int, int]:
    if sample_rate < 2 * fmax:
        raise ValidationError(
            f"sample rate {sample_rate} too low for search band up to {fmax} Hz")
    lag_min = max(2, int(np.floor(sample_rate / fmax)))
    lag_max = int(np.ceil(sample_rate / fmin))
    return lag_min, lag_max


def _windowed_correlations(frames: np.ndarray, lag_max: int):
    """Cross-correlation of frames[:, :L] against frames for lags 0..lag_max.

    L = window - lag_max so every lag correlates the same number of samples.
    Returns (corr, head_energy, lagged_energy) where corr[t, k] =
    sum_j x[t, j] * x[t, j + k] for j < L, and lagged_energy[t, k] =
    sum_{j=k}^{k+L-1} x[t, j]^2.
    """
    n, win = frames.shape
    L = win - lag_max
    if L <= 0:
        raise ValidationError("analysis window shorter than max pitch lag")
    nfft = 1 << int(np.ceil(np.log2(win + lag_max + 1)))
    head = np.zeros((n, nfft))
    head[:, :L] = frames[:, :L]
    spec = np.fft.rfft(frames, nfft, axis=1) * np.conj(np.fft.rfft(head, nfft, axis=1))
    corr = np.fft.irfft(spec, nfft, axis=1)[:, :lag_max + 1]
    sq = np.concatenate([np.zeros((n, 1)), np.cumsum(frames * frames, axis=1)], axis=1)
    lags = np.arange(lag_max + 1)
    lagged_energy = sq[:, lags + L] - sq[:, lags]
    head_energy = lagged_energy[:, 0]
    return corr, head_energy, lagged_energy


def _parabolic_refine(curve: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Sub-sample refinement of per-row extremum positions in `curve`."""
    n, m = curve.shape
    i = np.clip(idx, 1, m - 2)
    rows = np.arange(n)
    a, b, c = curve[rows, i - 1], curve[rows, i], curve[rows, i + 1]
    denom = a - 2 * b + c
    safe = np.where(np.abs(denom) > 1e-12, denom, 1.0)
    shift = np.where(np.abs(denom) > 1e-12, 0.5 * (a - c) / safe, 0.0)
    shift = np.clip(shift, -0.5, 0.5)
    return np.where((idx > 0) & (idx < m - 1), i + shift, idx.astype(np.float64))


def pitch(waveform, sample_rate: int, grid: FrameGrid | None = None,
          fmin: float = PITCH_FMIN, fmax: float = PITCH_FMAX,
          voicing_threshold: float = VOICING_THRESHOLD) -> FrameSeries:
    """Normalized-autocorrelation pitch track in Hz; unvoiced frames emit 0."""
    x = _as_waveform(waveform)
    if grid is None:
        grid = FrameGrid.for_samples(len(x), sample_rate)
    lag_min, lag_max = _band_lags(sample_rate, fmin, fmax)
    frames = _frame_signal(x, sample_rate, grid)
    corr, head_energy, lagged_energy = _windowed_correlations(frames, lag_max)

    norm = np.sqrt(head_energy[:, None] * lagged_energy)
    with np.errstate(divide="ignore", invalid="ignore"):
        nccf = np.where(norm > 1e-12, corr / np.maximum(norm, 1e-300), 0.0)
    # A periodic signal peaks equally at every multiple of its period; take the
    # smallest lag within 0.02 of the maximum, then climb to its local maximum.
    band = nccf[:, lag_min:lag_max + 1]
    rows = np.arange(len(band))
    best = np.max(band, axis=1)
    first = np.argmax(band >= (best[:, None] - 0.02), axis=1)
    stops = np.ones(band.shape, dtype=bool)
    stops[:, :-1] = band[:, 1:] <= band[:, :-1]
    cols = np.arange(band.shape[1])[None, :]
    peak = np.argmax(stops & (cols >= first[:, None]), axis=1)
    peak_val = band[rows, peak]
    lag = _parabolic_refine(band, peak) + lag_min
    voiced = (peak_val > voicing_threshold) & (head_energy > 1e-10)
    out = np.where(voiced, sample_rate / np.maximum(lag, 1e-6), 0.0)
    return FrameSeries(grid, ("pitch",), out)


def yin_f0(waveform, sample_rate: int, grid: FrameGrid | None = None,
           fmin: float = PITCH_FMIN, fmax: float = PITCH_FMAX,
           threshold: float = YIN_THRESHOLD) -> FrameSeries:
    """YIN fundamental frequency per frame in Hz.

    Difference function with cumulative-mean normalization; the first lag whose
    normalized difference dips below `threshold` is refined to the local
    minimum and parabolically interpolated. Frames with no dip emit 0.
    """
    x = _as_waveform(waveform)
    if grid is None:
        grid = FrameGrid.for_samples(len(x), sample_rate)
    lag_min, lag_max = _band_lags(sample_rate, fmin, fmax)
    frames = _frame_signal(x, sample_rate, grid)
    corr, head_energy, lagged_energy = _windowed_correlations(frames, lag_max)

    # d(tau) = ||head||^2 + ||shifted||^2 - 2 * corr(tau)
    diff = head_energy[:, None] + lagged_energy - 2 * corr
    diff = np.maximum(diff, 0.0)

    # Cumulative-mean normalized difference; d'(0) = 1 by definition.
    csum = np.cumsum(diff[:, 1:], axis=1)
    lags = np.arange(1, diff.shape[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        cmndf = np.where(csum > 1e-300, diff[:, 1:] * lags / csum, 1.0)
    cmndf = np.concatenate([np.ones((len(diff), 1)), cmndf], axis=1)

    below = cmndf[:, :lag_max + 1] < threshold
    below[:, :lag_min] = False
    any_dip = below.any(axis=1)
    first = np.argmax(below, axis=1)

    # Walk from the first below-threshold lag to the local minimum of the dip:
    # the first lag at which the curve stops decreasing.
    nondec = np.ones_like(below)
    nondec[:, :-1] = cmndf[:, 1:lag_max + 1] >= cmndf[:, :lag_max]
    cols = np.arange(lag_max + 1)[None, :]
    candidates = nondec & (cols >= first[:, None])
    trough = np.argmax(candidates, axis=1)
    trough = np.where(candidates.any(axis=1), trough, first)

    lag = _parabolic_refine(cmndf[:, :lag_max + 1], trough)
    out = np.where(any_dip & (lag > 0), sample_rate / np.maximum(lag, 1e-6), 0.0)
    return FrameSeries(grid, ("f0",), out)


def frame_series_to_csv(series: FrameSeries, path) -> None:
    """Dump a FrameSeries as CSV (time plus one column per feature)."""
    header = ",".join(("time",) + series.names)
    data = np.column_stack([series.grid.times(), series.values])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.8g")
