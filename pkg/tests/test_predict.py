import numpy as np
import pytest

from leadtime.dsp import FrameGrid, FrameSeries
from leadtime.errors import ValidationError
from leadtime.features import FeatureBundle
from leadtime.nnet import Checkpoint, ModelConfig, init_params
from leadtime.predict import (
    PredictorOutput,
    model_predict,
    oracle_predictor,
    silence_baseline,
)

from oracles import brute_silence_baseline


def rmse_series(vals, shift=0.05):
    grid = FrameGrid(frame_shift=shift, window_len=2 * shift,
                     n_frames=len(vals))
    return FrameSeries(grid, ("rmse",), np.asarray(vals, dtype=float))


class TestSilenceBaseline:
    def test_silent_run_triggers_zero(self):
        # 0.8 s of silence: the first 14 frames lack history, frame 15 on fires
        vals = np.full(16, 0.005)
        out = silence_baseline(rmse_series(vals), delta_max=2.0)
        assert list(out.tau_hat[:14]) == [2.0] * 14
        assert list(out.tau_hat[14:]) == [0.0, 0.0]

    def test_loud_signal_never_fires(self):
        out = silence_baseline(rmse_series(np.full(40, 0.5)), delta_max=2.0)
        assert np.all(out.tau_hat == 2.0)

    def test_650ms_gap_is_not_more_than_700(self):
        vals = np.concatenate([np.full(10, 0.5), np.full(13, 0.005),
                               np.full(10, 0.5)])
        out = silence_baseline(rmse_series(vals), delta_max=2.0)
        assert np.all(out.tau_hat == 2.0)

    def test_two_valued_output(self):
        rng = np.random.default_rng(0)
        vals = rng.uniform(0, 0.05, 500)
        out = silence_baseline(rmse_series(vals), delta_max=1.5)
        assert set(np.unique(out.tau_hat)) <= {0.0, 1.5}

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_window_scan_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 400))
        vals = rng.uniform(0, 0.03, n)
        vals[rng.random(n) < 0.4] = 0.0
        got = silence_baseline(rmse_series(vals), delta_max=2.0).tau_hat
        want = brute_silence_baseline(vals, 0.05, 0.01, 0.7, 2.0)
        np.testing.assert_array_equal(got, want)

    def test_threshold_is_strict(self):
        # frames exactly at the threshold count as inactive (active iff > thr)
        vals = np.full(20, 0.01)
        out = silence_baseline(rmse_series(vals), threshold=0.01, delta_max=2.0)
        assert out.tau_hat[-1] == 0.0


def make_checkpoint(feature_set="RA", word_dim=0, seed=0):
    config = ModelConfig(feature_set=feature_set, hidden=6, n_components=2)
    dims = {"W": 4, "R": 1, "A": 2}
    input_dim = sum(dims[l] for l in config.audio_letters) or word_dim
    params = init_params(config, input_dim, word_dim,
                         np.random.default_rng(seed))
    return Checkpoint(config, params, input_dim, word_dim)


def bundle_for(letters, n=40, word_dim=3, seed=1):
    rng = np.random.default_rng(seed)
    grid = FrameGrid(n_frames=n)
    dims = {"W": 4, "R": 1, "A": 2}
    audio_dim = sum(dims[l] for l in letters if l in "WRA")
    audio = rng.normal(size=(n, audio_dim)) if audio_dim else None
    word = rng.normal(size=(n, word_dim)) if "G" in letters else None
    return FeatureBundle(grid, tuple(letters), audio, word)


class TestModelPredict:
    def test_valid_output(self):
        ckpt = make_checkpoint("RA")
        out = model_predict(ckpt, bundle_for("RA"))
        assert out.tau_hat.shape == (40,)
        assert np.all((out.tau_hat >= 0) & (out.tau_hat <= 2.0))

    def test_missing_stream_error(self):
        ckpt = make_checkpoint("RA")
        with pytest.raises(ValidationError, match="missing stream A"):
            model_predict(ckpt, bundle_for("R"))

    def test_word_only_checkpoint(self):
        ckpt = make_checkpoint("G", word_dim=3)
        out = model_predict(ckpt, bundle_for("G"))
        assert out.tau_hat.shape == (40,)

    def test_repeated_calls_identical(self):
        ckpt = make_checkpoint("RA")
        bundle = bundle_for("RA")
        a = model_predict(ckpt, bundle).tau_hat
        b = model_predict(ckpt, bundle).tau_hat
        np.testing.assert_array_equal(a, b)

    def test_dim_mismatch(self):
        ckpt = make_checkpoint("RA")
        bad = bundle_for("RA")
        bad.audio = bad.audio[:, :2]
        with pytest.raises(ValidationError, match="input_dim"):
            model_predict(ckpt, bad)


def test_oracle_predictor_echoes_labels():
    grid = FrameGrid(n_frames=10)
    tau = np.linspace(0, 2, 10)
    out = oracle_predictor(grid, tau)
    np.testing.assert_array_equal(out.tau_hat, tau)


def test_predictor_output_validation():
    grid = FrameGrid(n_frames=3)
    with pytest.raises(ValidationError):
        PredictorOutput(grid, np.array([1.0, 2.0]))
    with pytest.raises(ValidationError):
        PredictorOutput(grid, np.array([1.0, np.nan, 0.5]))
