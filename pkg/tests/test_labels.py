import numpy as np
import pytest

from leadtime.corpus import Utterance, UtteranceTrack, segment_utterances
from leadtime.dsp import FrameGrid
from leadtime.labels import (
    Segment,
    compute_loss_mask,
    compute_tau,
    eval_segments,
    sample_train_segments,
    segments_from_jsonl,
    segments_to_jsonl,
)
from leadtime.synth import SynthSpec, synthesize_corpus


def track(*spans):
    return UtteranceTrack([Utterance(s, e, (0, 0)) for s, e in spans])


def grid_for(duration, shift=0.05):
    return FrameGrid(n_frames=int(round(duration / shift)), frame_shift=shift)


def brute_force_mask(times, inits, delta_max):
    out = np.zeros(len(times), dtype=bool)
    for k, t in enumerate(times):
        for i in inits:
            if i - 2 * delta_max <= t <= i + 1.0:
                out[k] = True
    return out


class TestComputeTau:
    def test_formula_cases(self):
        # target initiates at 10.0 and speaks until 12.0
        lbl = compute_tau(track((10.0, 12.0)), track((0.0, 9.2)),
                          grid_for(20.0), delta_max=2.0)
        times = lbl.grid.times()
        # 0.5 s ahead of the initiation
        assert lbl.tau[np.searchsorted(times, 9.5)] == pytest.approx(0.5)
        # 5 s ahead: clamped to delta_max
        assert lbl.tau[np.searchsorted(times, 5.0)] == pytest.approx(2.0)
        # inside the target utterance
        assert lbl.tau[np.searchsorted(times, 11.0)] == 0.0
        # after the last initiation, with the target silent again
        assert lbl.tau[np.searchsorted(times, 15.0)] == pytest.approx(2.0)

    def test_bounds_and_zero_on_speech(self):
        lbl = compute_tau(track((3.0, 4.0), (8.0, 9.5)), track(),
                          grid_for(12.0), delta_max=2.0)
        assert np.all(lbl.tau >= 0.0) and np.all(lbl.tau <= 2.0)
        times = lbl.grid.times()
        speaking = ((times >= 3.0) & (times < 4.0)) | ((times >= 8.0) & (times < 9.5))
        assert np.all(lbl.tau[speaking] == 0.0)
        assert np.all(lbl.tau[~speaking] > 0.0)

    def test_slope_minus_one(self):
        lbl = compute_tau(track((10.0, 11.0)), track(), grid_for(12.0),
                          delta_max=2.0)
        times = lbl.grid.times()
        run = (times >= 8.0) & (times < 10.0)  # silent approach below delta_max
        diffs = np.diff(lbl.tau[run])
        np.testing.assert_allclose(diffs, -0.05, atol=1e-9)

    def test_slope_property_on_synthetic_dialogues(self):
        # acceptance-style: slope -1 and tau==0-on-speech over random dialogues
        recs = synthesize_corpus(SynthSpec(n_dialogues=5, duration=30.0), seed=21)
        for rec in recs:
            tracks = {s: segment_utterances(rec.transcript(s)) for s in "ab"}
            for target in "ab":
                other = "b" if target == "a" else "a"
                lbl = compute_tau(tracks[target], tracks[other],
                                  rec.frame_grid(), delta_max=2.0)
                times = lbl.grid.times()
                speaking = np.zeros(len(times), dtype=bool)
                for u in tracks[target].utterances:
                    speaking |= (times >= u.start) & (times < u.end)
                assert np.all(lbl.tau[speaking] == 0.0)
                interior = ~speaking[:-1] & ~speaking[1:] & \
                    (lbl.tau[:-1] < 2.0) & (lbl.tau[:-1] > 0.0) & (lbl.tau[1:] > 0.0)
                if interior.any():
                    np.testing.assert_allclose(
                        np.diff(lbl.tau)[interior], -0.05, atol=1e-9)


class TestLossMask:
    def test_single_initiation_window(self):
        lbl = compute_tau(track((10.0, 11.0)), track(), grid_for(20.0),
                          delta_max=2.0)
        times = lbl.grid.times()
        expected = (times >= 6.0) & (times <= 11.0)
        np.testing.assert_array_equal(lbl.loss_mask, expected)

    def test_no_initiations(self):
        lbl = compute_tau(track(), track(), grid_for(5.0), delta_max=2.0)
        assert not lbl.loss_mask.any()

    def test_overlapping_windows_union(self):
        lbl = compute_tau(track((10.0, 10.5), (11.0, 11.5)), track(),
                          grid_for(20.0), delta_max=2.0)
        times = lbl.grid.times()
        expected = (times >= 6.0) & (times <= 12.0)
        np.testing.assert_array_equal(lbl.loss_mask, expected)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            inits = np.sort(rng.uniform(0, 30, size=rng.integers(0, 6)))
            spans = [(i, i + 0.5) for i in inits]
            lbl = compute_tau(track(*spans), track(), grid_for(30.0),
                              delta_max=float(rng.uniform(0.5, 3.0)))
            oracle = brute_force_mask(lbl.grid.times(), inits, lbl.delta_max)
            np.testing.assert_array_equal(compute_loss_mask(lbl), oracle)


class TestTrainSampling:
    def durations_and_inits(self, inits, duration=120.0):
        durations = {"d0": duration}
        table = {("d0", "a"): np.asarray(inits, dtype=float),
                 ("d0", "b"): np.asarray(inits, dtype=float)}
        return durations, table

    def test_first_initiation_predicate(self):
        durations, table = self.durations_and_inits([7.2, 30.0])
        segs = sample_train_segments(durations, table, n=20, seed=3)
        assert segs
        for s in segs:
            inside = [i for i in table[(s.dialogue_id, s.target_speaker)]
                      if i >= s.start]
            assert s.start + 5.0 <= inside[0] <= s.start + 10.0
            assert s.duration == pytest.approx(60.0)

    def test_no_initiations_warns_and_skips(self, caplog):
        durations, table = self.durations_and_inits([])
        with caplog.at_level("WARNING"):
            segs = sample_train_segments(durations, table, n=3, seed=1)
        assert segs == []
        assert "no qualifying" in caplog.text

    def test_too_short_dialogue_skipped(self, caplog):
        durations, table = self.durations_and_inits([7.0], duration=30.0)
        with caplog.at_level("WARNING"):
            segs = sample_train_segments(durations, table, n=2, seed=1)
        assert segs == []
        assert "shorter" in caplog.text

    def test_deterministic(self):
        durations, table = self.durations_and_inits([7.2, 30.0, 66.0, 95.0])
        a = sample_train_segments(durations, table, n=10, seed=42)
        b = sample_train_segments(durations, table, n=10, seed=42)
        assert a == b


class TestEvalSegments:
    def test_100s_dialogue(self):
        segs = eval_segments({"d": 100.0}, seed=0)
        assert [s.start for s in segs] == [0.0, 20.0, 40.0, 60.0, 80.0]
        assert [s.end for s in segs] == [60.0, 80.0, 100.0, 100.0, 100.0]

    def test_60s_dialogue(self):
        segs = eval_segments({"d": 60.0}, seed=0)
        assert [(s.start, s.end) for s in segs] == [
            (0.0, 60.0), (20.0, 60.0), (40.0, 60.0)]

    def test_empty_dialogue(self):
        assert eval_segments({"d": 0.0}, seed=0) == []

    def test_deterministic_targets(self):
        a = eval_segments({"d": 200.0, "e": 100.0}, seed=9)
        b = eval_segments({"d": 200.0, "e": 100.0}, seed=9)
        assert a == b


def test_segment_jsonl_round_trip(tmp_path):
    segs = [Segment("d0", 0.0, 60.0, "a"), Segment("d1", 20.0, 80.0, "b")]
    path = tmp_path / "segs.jsonl"
    segments_to_jsonl(segs, path)
    assert segments_from_jsonl(path) == segs
