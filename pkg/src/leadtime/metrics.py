"""Bucketed mean-absolute-error metrics for continuous lead-time prediction.

MAE-Pred(y) is the precision analogue: the mean |tau - tau_hat| over frames
whose prediction falls in bucket y. MAE-True(t) is the recall analogue: the
mean error over frames at lead offset t from a target initiation, restricted
to the current-speaker inter-initiation interval around that initiation. The
sign convention is t > 0 before the initiation, t <= 0 at or after it (where
the true lead time counts as 0 because the initiation already happened).

True and predicted values are quantized to r buckets per second before
comparison, so a predictor that echoes the ground truth scores exactly 0.
Buckets are keyed by the integer index value*r; empty buckets are absent
rather than zero. MMAE averages per-bucket MAEs over the occupied buckets in
an inclusive value range and sums the true- and pred-side aggregates.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MetricsError

DEFAULT_R = 16
MMAE_TRUE_RANGE = (-0.5, 1.0)
MMAE_PRED_RANGE = (0.0, 1.0)


@dataclass(frozen=True)
class MetricsConfig:
    r: int = DEFAULT_R
    delta_max: float = 2.0
    mmae_true_range: tuple[float, float] = MMAE_TRUE_RANGE
    mmae_pred_range: tuple[float, float] = MMAE_PRED_RANGE

    def __post_init__(self):
        if self.r < 1:
            raise MetricsError("r must be >= 1")
        if self.delta_max <= 0:
            raise MetricsError("delta_max must be > 0")

    @property
    def delta_idx(self) -> int:
        return int(np.floor(self.delta_max * self.r + 1e-9))


def bucket_index(v, r: int = DEFAULT_R) -> np.ndarray:
    """Integer bucket index of value(s): floor toward zero in units of 1/r."""
    v = np.asarray(v, dtype=np.float64)
    idx = np.where(v >= 0, np.floor(v * r), -np.floor(-v * r))
    return idx.astype(np.int64)


def quantize(v, r: int = DEFAULT_R):
    """Quantize value(s) onto the bucket grid: exact multiples of 1/r.

    Non-negative values floor downward; negative values floor symmetrically
    toward zero (-0.30 -> -0.25 at r=16).
    """
    out = bucket_index(v, r) / r
    if np.isscalar(v) or np.ndim(v) == 0:
        return float(out)
    return out


Buckets = dict[int, tuple[float, int]]  # idx -> (error sum, count)


def _accumulate(table: dict[int, list], idx: np.ndarray, *values) -> None:
    for b in np.unique(idx):
        sel = idx == b
        row = table.setdefault(int(b), [0.0] * len(values) + [0])
        for j, v in enumerate(values):
            row[j] += float(np.sum(v[sel]))
        row[-1] += int(np.count_nonzero(sel))


@dataclass
class MetricReport:
    config: MetricsConfig
    mae_pred: Buckets = field(default_factory=dict)
    mae_true: Buckets = field(default_factory=dict)
    pred_at_true: Buckets = field(default_factory=dict)  # quantized-pred sums
    n_frames: int = 0

    def mae_pred_value(self, idx: int) -> float:
        s, c = self.mae_pred[idx]
        return s / c

    def mae_true_value(self, idx: int) -> float:
        s, c = self.mae_true[idx]
        return s / c


def mae_pred(tau_hat: np.ndarray, tau: np.ndarray,
             config: MetricsConfig) -> Buckets:
    """Per-bucket MAE grouped by the quantized prediction."""
    tau_hat = np.asarray(tau_hat, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    if tau_hat.shape != tau.shape:
        raise MetricsError("prediction/truth length mismatch")
    r = config.r
    idx = bucket_index(tau_hat, r)
    err = np.abs(bucket_index(tau, r) - idx) / r
    table: dict[int, list] = {}
    _accumulate(table, idx, err)
    return {k: (v[0], v[1]) for k, v in table.items()}


def _bracket(current_inits: np.ndarray, init: float) -> tuple[float, float]:
    """Open current-speaker interval around a target initiation.

    A missing bracket on either side leaves that side unbounded (the segment
    boundary clips it anyway).
    """
    lo, hi = -np.inf, np.inf
    if len(current_inits):
        left = np.searchsorted(current_inits, init, side="left") - 1
        if left >= 0:
            lo = current_inits[left]
        right = np.searchsorted(current_inits, init, side="right")
        if right < len(current_inits):
            hi = current_inits[right]
    return lo, hi


def mae_true(times: np.ndarray, tau_hat: np.ndarray, tau: np.ndarray,
             target_inits: np.ndarray, current_inits: np.ndarray,
             config: MetricsConfig) -> tuple[Buckets, Buckets]:
    """Per-bucket MAE and mean prediction, grouped by lead offset to initiation.

    Returns (mae buckets, prediction-sum buckets); the latter feeds the
    average-prediction-vs-true-lead diagnostic curve.
    """
    r = config.r
    q_pred = bucket_index(tau_hat, r)
    q_tau = bucket_index(tau, r)
    err_table: dict[int, list] = {}
    for init in np.asarray(target_inits, dtype=np.float64):
        t_raw = init - times
        idx = bucket_index(t_raw, r)
        lo, hi = _bracket(np.asarray(current_inits, dtype=np.float64), init)
        keep = (idx >= -r) & (idx <= config.delta_idx) & (times > lo) & (times < hi)
        if not keep.any():
            continue
        true_idx = np.where(t_raw[keep] <= 0, 0, q_tau[keep])
        err = np.abs(true_idx - q_pred[keep]) / r
        _accumulate(err_table, idx[keep], err, q_pred[keep] / r)
    mae = {k: (v[0], v[2]) for k, v in err_table.items()}
    pred = {k: (v[1], v[2]) for k, v in err_table.items()}
    return mae, pred


def evaluate_arrays(times: np.ndarray, tau_hat: np.ndarray, tau: np.ndarray,
                    target_inits: np.ndarray, current_inits: np.ndarray,
                    config: MetricsConfig) -> MetricReport:
    """Compute a full report for one segment's frames."""
    report = MetricReport(config)
    report.mae_pred = mae_pred(tau_hat, tau, config)
    report.mae_true, report.pred_at_true = mae_true(
        times, tau_hat, tau, target_inits, current_inits, config)
    report.n_frames = len(np.asarray(tau_hat))
    return report


def merge_reports(reports: list[MetricReport]) -> MetricReport:
    """Pool raw (sum, count) pairs so segment boundaries don't reweight frames."""
    if not reports:
        raise MetricsError("no segments to merge")
    out = MetricReport(reports[0].config)
    for rep in reports:
        for src, dst in ((rep.mae_pred, out.mae_pred),
                         (rep.mae_true, out.mae_true),
                         (rep.pred_at_true, out.pred_at_true)):
            for k, (s, c) in src.items():
                s0, c0 = dst.get(k, (0.0, 0))
                dst[k] = (s0 + s, c0 + c)
        out.n_frames += rep.n_frames
    return out


def _range_indices(rng: tuple[float, float], r: int) -> tuple[int, int]:
    lo = int(np.ceil(rng[0] * r - 1e-9))
    hi = int(np.floor(rng[1] * r + 1e-9))
    return lo, hi


def _macro_average(buckets: Buckets, lo: int, hi: int, label: str) -> float:
    vals = [s / c for k, (s, c) in sorted(buckets.items()) if lo <= k <= hi and c]
    if not vals:
        raise MetricsError(f"{label}: no populated buckets in range")
    return float(np.mean(vals))


def mmae(report: MetricReport,
         binary_substitute: bool = False) -> tuple[float, float, float]:
    """Aggregate (MMAE-True, MMAE-Pred, MMAE).

    With binary_substitute (for predictors that only emit 0 and delta_max,
    like the silence baseline), the pred side is
    (MAE-Pred(0) + MAE-Pred(delta_max)) / 2 instead of the macro average.
    """
    cfg = report.config
    mt = _macro_average(report.mae_true,
                        *_range_indices(cfg.mmae_true_range, cfg.r), "MAE-True")
    if binary_substitute:
        for idx in (0, cfg.delta_idx):
            if idx not in report.mae_pred:
                raise MetricsError(
                    f"binary MP substitute: bucket {idx / cfg.r} unpopulated")
        mp = 0.5 * (report.mae_pred_value(0) + report.mae_pred_value(cfg.delta_idx))
    else:
        mp = _macro_average(report.mae_pred,
                            *_range_indices(cfg.mmae_pred_range, cfg.r), "MAE-Pred")
    return mt, mp, mt + mp


def report_to_csv(report: MetricReport, path) -> None:
    """One row per bucket: metric, bucket_value, mae, count.

    For pred_mean rows the "mae" column holds the mean quantized prediction.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "bucket_value", "mae", "count"])
        for name, buckets in (("mae_pred", report.mae_pred),
                              ("mae_true", report.mae_true),
                              ("pred_mean", report.pred_at_true)):
            for k in sorted(buckets):
                s, c = buckets[k]
                writer.writerow([name, repr(k / report.config.r),
                                 repr(s / c), c])


def report_from_csv(path, config: MetricsConfig | None = None) -> MetricReport:
    config = config or MetricsConfig()
    report = MetricReport(config)
    tables = {"mae_pred": report.mae_pred, "mae_true": report.mae_true,
              "pred_mean": report.pred_at_true}
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise MetricsError(f"{path}: empty report")
    for row in rows:
        try:
            table = tables[row["metric"]]
            idx = int(round(float(row["bucket_value"]) * config.r))
            count = int(row["count"])
            table[idx] = (float(row["mae"]) * count, count)
        except (KeyError, TypeError, ValueError) as exc:
            raise MetricsError(f"{path}: malformed report row {row}") from exc
    return report


def summary_to_json(report: MetricReport, path,
                    binary_substitute: bool = False) -> dict:
    mt, mp, total = mmae(report, binary_substitute=binary_substitute)
    doc = {
        "mmae_true": mt,
        "mmae_pred": mp,
        "mmae": total,
        "mmae_pred_rule": "binary_substitute" if binary_substitute else "macro",
        "mmae_true_range": list(report.config.mmae_true_range),
        "mmae_pred_range": list(report.config.mmae_pred_range),
        "r": report.config.r,
        "delta_max": report.config.delta_max,
        "frames": report.n_frames,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
    return doc
