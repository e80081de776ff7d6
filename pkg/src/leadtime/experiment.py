"""End-to-end experiment wiring: corpus -> features -> training -> reports.

Segments are evaluated independently: the LSTM state and the silence
baseline's inactivity history both reset at each segment start, while word
embeddings may carry dialogue-level history (they model incremental
transcription from the dialogue beginning). Evaluation windows overlap by
construction (60 s every 20 s), so frames near window joins are scored in
more than one segment; per-bucket sums and counts pool across segments.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .corpus import Corpus, UtteranceTrack, read_manifest, segment_utterances
from .dsp import FrameGrid
from .errors import ConfigError, MetricsError
from .features import FeatureBundle, compute_channel_features
from .labels import (
    LabelTrack,
    Segment,
    compute_tau,
    eval_segments,
    sample_train_segments,
)
from .metrics import (
    MetricReport,
    MetricsConfig,
    evaluate_arrays,
    merge_reports,
    mmae,
    report_to_csv,
    summary_to_json,
)
from .nnet import Checkpoint, ModelConfig, masked_loss, save_checkpoint
from .predict import model_predict, oracle_predictor, silence_baseline
from .training import SegmentTensors, TrainResult, train

log = logging.getLogger(__name__)


class PreparedCorpus:
    """Caches utterance tracks, labels, and per-channel features."""

    def __init__(self, corpus: Corpus, merge_gap: float):
        self.corpus = corpus
        self.merge_gap = merge_gap
        self.durations: dict[str, float] = {}
        self._tracks: dict[tuple[str, str], UtteranceTrack] = {}
        self._grids: dict[str, FrameGrid] = {}
        self._labels: dict[tuple[str, str, float], LabelTrack] = {}
        self._features: dict[tuple[str, str, tuple], FeatureBundle] = {}
        for did in corpus.ids():
            entry = corpus.entry(did)
            self.durations[did] = entry.duration
            words_a, words_b = corpus.transcripts(did)
            self._tracks[(did, "a")] = segment_utterances(words_a, merge_gap)
            self._tracks[(did, "b")] = segment_utterances(words_b, merge_gap)
            self._grids[did] = FrameGrid.for_duration(entry.duration,
                                                      entry.sample_rate)

    def ids(self) -> list[str]:
        return self.corpus.ids()

    def track(self, did: str, speaker: str) -> UtteranceTrack:
        return self._tracks[(did, speaker)]

    def grid(self, did: str) -> FrameGrid:
        return self._grids[did]

    def initiation_table(self, ids: list[str]) -> dict:
        return {(did, spk): self._tracks[(did, spk)].initiations
                for did in ids for spk in "ab"}

    def label(self, did: str, target: str, delta_max: float) -> LabelTrack:
        key = (did, target, delta_max)
        if key not in self._labels:
            current = "b" if target == "a" else "a"
            self._labels[key] = compute_tau(
                self._tracks[(did, target)], self._tracks[(did, current)],
                self._grids[did], delta_max)
        return self._labels[key]

    def features(self, did: str, channel: str, letters,
                 dumps_dir) -> FeatureBundle:
        from .nnet import normalize_feature_set
        letters = normalize_feature_set(letters)
        key = (did, channel, letters)
        if key not in self._features:
            record = self.corpus.load(did)
            self._features[key] = compute_channel_features(
                record, channel, letters, dumps_dir)
        return self._features[key]


def frame_span(seg: Segment, grid: FrameGrid) -> tuple[int, int]:
    i0 = int(round(seg.start / grid.frame_shift))
    i1 = min(int(round(seg.end / grid.frame_shift)), grid.n_frames)
    return i0, i1


def _clip_inits(inits: np.ndarray, seg: Segment) -> np.ndarray:
    return inits[(inits >= seg.start) & (inits <= seg.end)]


@dataclass
class Predictor:
    """One of: a trained checkpoint, the silence baseline, or the oracle."""
    kind: str  # "checkpoint" | "silence" | "oracle"
    checkpoint: Checkpoint | None = None

    @property
    def binary(self) -> bool:
        return self.kind == "silence"

    def letters(self, model: ModelConfig) -> tuple[str, ...]:
        if self.kind == "checkpoint":
            return self.checkpoint.config.feature_set
        if self.kind == "silence":
            return ("R",)
        return ()


def predict_segment(prepared: PreparedCorpus, cfg: ExperimentConfig,
                    seg: Segment, predictor: Predictor,
                    delta_max: float) -> np.ndarray:
    grid = prepared.grid(seg.dialogue_id)
    i0, i1 = frame_span(seg, grid)
    if predictor.kind == "oracle":
        label = prepared.label(seg.dialogue_id, seg.target_speaker, delta_max)
        return oracle_predictor(
            FrameGrid(grid.frame_shift, grid.window_len, i1 - i0),
            label.tau[i0:i1]).tau_hat
    letters = predictor.letters(cfg.model)
    bundle = prepared.features(seg.dialogue_id, seg.current_speaker, letters,
                               cfg.dumps_dir).sliced(i0, i1)
    if predictor.kind == "silence":
        from .dsp import FrameSeries
        series = FrameSeries(bundle.grid, ("rmse",), bundle.audio[:, 0])
        return silence_baseline(series, delta_max=delta_max).tau_hat
    return model_predict(predictor.checkpoint, bundle).tau_hat


def evaluate_segment(prepared: PreparedCorpus, cfg: ExperimentConfig,
                     seg: Segment, predictor: Predictor,
                     metrics_cfg: MetricsConfig) -> MetricReport:
    delta_max = metrics_cfg.delta_max
    label = prepared.label(seg.dialogue_id, seg.target_speaker, delta_max)
    grid = prepared.grid(seg.dialogue_id)
    i0, i1 = frame_span(seg, grid)
    times = grid.times()[i0:i1]
    tau = label.tau[i0:i1]
    tau_hat = predict_segment(prepared, cfg, seg, predictor, delta_max)
    return evaluate_arrays(
        times, tau_hat, tau,
        _clip_inits(label.target_initiations, seg),
        _clip_inits(label.current_initiations, seg), metrics_cfg)


def evaluate_split(prepared: PreparedCorpus, cfg: ExperimentConfig,
                   split: str, predictor: Predictor
                   ) -> tuple[MetricReport, list[MetricReport]]:
    ids = cfg.split_ids(split)
    durations = {d: prepared.durations[d] for d in ids}
    segments = eval_segments(durations, seed=cfg.seed)
    if not segments:
        raise ConfigError(f"no segments: split '{split}' is empty")
    per_segment = [evaluate_segment(prepared, cfg, seg, predictor, cfg.metrics)
                   for seg in segments]
    return merge_reports(per_segment), per_segment


def _segment_tensors(prepared: PreparedCorpus, cfg: ExperimentConfig,
                     seg: Segment) -> SegmentTensors:
    model = cfg.model
    bundle = prepared.features(seg.dialogue_id, seg.current_speaker,
                               model.feature_set, cfg.dumps_dir)
    label = prepared.label(seg.dialogue_id, seg.target_speaker,
                           model.delta_max)
    i0, i1 = frame_span(seg, prepared.grid(seg.dialogue_id))
    sliced = bundle.sliced(i0, i1)
    return SegmentTensors(
        x_audio=sliced.audio, x_word=sliced.word,
        tau=label.tau[i0:i1], mask=label.loss_mask[i0:i1])


def run_train(cfg: ExperimentConfig) -> dict:
    """Sample training segments, train, and write the best checkpoint + log."""
    prepared = PreparedCorpus(read_manifest(cfg.manifest), cfg.merge_gap)
    train_ids = cfg.split_ids("train")
    if not train_ids:
        raise ConfigError("train split is empty")
    durations = {d: prepared.durations[d] for d in train_ids}
    segments = sample_train_segments(
        durations, prepared.initiation_table(train_ids),
        n=cfg.train.n_train_segments, seed=cfg.seed)
    if not segments:
        raise ConfigError("no qualifying training segments sampled")
    log.info("sampled %d training segments", len(segments))
    tensors = [_segment_tensors(prepared, cfg, s) for s in segments]
    input_dim = 0 if tensors[0].x_audio is None else tensors[0].x_audio.shape[-1]
    word_dim = 0 if tensors[0].x_word is None else tensors[0].x_word.shape[-1]
    if input_dim == 0:
        input_dim = word_dim  # word-only models recur over the word stream

    val_ids = cfg.split_ids("val")
    val_durations = {d: prepared.durations[d] for d in val_ids}
    val_segs = eval_segments(val_durations, seed=cfg.seed)
    val_tensors = [_segment_tensors(prepared, cfg, s) for s in val_segs]

    def validate(params) -> tuple[float, float]:
        if not val_segs:
            return float("nan"), float("inf")
        nll_sum, nll_n = 0.0, 0
        for vt in val_tensors:
            xa = None if vt.x_audio is None else vt.x_audio[None]
            xw = None if vt.x_word is None else vt.x_word[None]
            loss, n = masked_loss(params, cfg.model, xa, xw, vt.tau[None],
                                  vt.mask[None])
            nll_sum += loss * n
            nll_n += n
        ckpt = Checkpoint(cfg.model, params, input_dim, word_dim)
        predictor = Predictor("checkpoint", ckpt)
        reports = [evaluate_segment(prepared, cfg, seg, predictor, cfg.metrics)
                   for seg in val_segs]
        try:
            _, _, total = mmae(merge_reports(reports))
        except MetricsError as exc:
            log.warning("validation MMAE undefined (%s); scoring as inf", exc)
            total = float("inf")
        return (nll_sum / nll_n if nll_n else float("nan")), total

    result: TrainResult = train(cfg.model, cfg.train, tensors, validate,
                                input_dim, word_dim)

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = cfg.out_dir / "checkpoint.ilck"
    save_checkpoint(ckpt_path, Checkpoint(
        cfg.model, result.best_params, input_dim, word_dim,
        meta={"seed": cfg.seed, "best_epoch": result.best_epoch,
              "n_train_segments": len(segments)}))
    log_path = cfg.out_dir / "train_log.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        for entry in result.logs:
            fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")
        fh.write(json.dumps({"best_epoch": result.best_epoch},
                            sort_keys=True) + "\n")
    return {"checkpoint": str(ckpt_path), "log": str(log_path),
            "best_epoch": result.best_epoch,
            "n_segments": len(segments),
            "best_val_mmae": min((l.val_mmae for l in result.logs),
                                 default=float("nan"))}


def _bootstrap_columns(per_segment: list[MetricReport], n_resamples: int,
                       seed: int) -> dict[str, dict[int, tuple[float, float]]]:
    """Segment-level bootstrap 95% bands for each bucket's MAE."""
    rng = np.random.default_rng(seed)
    tables = {"mae_pred": [], "mae_true": []}
    for _ in range(n_resamples):
        picks = rng.integers(len(per_segment), size=len(per_segment))
        pooled = merge_reports([per_segment[i] for i in picks])
        for name in tables:
            buckets = getattr(pooled, name)
            tables[name].append({k: s / c for k, (s, c) in buckets.items()})
    out: dict[str, dict[int, tuple[float, float]]] = {}
    for name, rows in tables.items():
        keys = sorted({k for row in rows for k in row})
        out[name] = {}
        for k in keys:
            vals = [row[k] for row in rows if k in row]
            out[name][k] = (float(np.percentile(vals, 2.5)),
                            float(np.percentile(vals, 97.5)))
    return out


def run_evaluate(cfg: ExperimentConfig, predictor: Predictor, split: str,
                 out_prefix: str | None = None,
                 bootstrap: int = 0) -> dict:
    """Evaluate a predictor over a split; writes report CSV + JSON summary."""
    if predictor.kind == "checkpoint":
        ck = predictor.checkpoint.config
        if abs(ck.delta_max - cfg.metrics.delta_max) > 1e-9 or \
                ck.r != cfg.metrics.r:
            raise ConfigError(
                f"checkpoint delta_max/r ({ck.delta_max}, {ck.r}) disagree "
                f"with experiment config "
                f"({cfg.metrics.delta_max}, {cfg.metrics.r})")
    prepared = PreparedCorpus(read_manifest(cfg.manifest), cfg.merge_gap)
    report, per_segment = evaluate_split(prepared, cfg, split, predictor)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    prefix = out_prefix or f"{split}_{predictor.kind}"
    report_path = cfg.out_dir / f"{prefix}.report.csv"
    report_to_csv(report, report_path)
    if bootstrap > 0:
        _append_bootstrap(report_path, report,
                          _bootstrap_columns(per_segment, bootstrap, cfg.seed))
    summary_path = cfg.out_dir / f"{prefix}.summary.json"
    summary = summary_to_json(report, summary_path,
                              binary_substitute=predictor.binary)
    summary["report"] = str(report_path)
    summary["summary"] = str(summary_path)
    return summary


def _append_bootstrap(report_path: Path, report: MetricReport,
                      bands: dict) -> None:
    import csv
    rows = []
    with open(report_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            idx = int(round(float(row["bucket_value"]) * report.config.r))
            lo, hi = bands.get(row["metric"], {}).get(idx, ("", ""))
            row["mae_lo"], row["mae_hi"] = lo, hi
            rows.append(row)
    with open(report_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["metric", "bucket_value", "mae", "count",
                            "mae_lo", "mae_hi"])
        writer.writeheader()
        writer.writerows(rows)


def run_curves(report_path, out_prefix) -> list[str]:
    """Emit the three aligned curve tables from a report CSV."""
    from .metrics import report_from_csv
    report = report_from_csv(report_path)
    r = report.config.r
    out_prefix = Path(out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    written = []
    for name, buckets, col in (("mae_true", report.mae_true, "mae"),
                               ("mae_pred", report.mae_pred, "mae"),
                               ("pred_mean", report.pred_at_true, "mean_pred")):
        path = Path(f"{out_prefix}.{name}.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"bucket_value,{col},count\n")
            for k in sorted(buckets):
                s, c = buckets[k]
                fh.write(f"{k / r!r},{s / c!r},{c}\n")
        written.append(str(path))
    return written
