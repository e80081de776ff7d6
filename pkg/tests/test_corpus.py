import json

import numpy as np
import pytest

from leadtime.corpus import (
    DialogueRecord,
    WordToken,
    load_dialogue,
    load_transcript,
    read_manifest,
    save_dialogue,
    segment_utterances,
)
from leadtime.errors import ParseError, ValidationError
from leadtime.synth import SynthSpec, synthesize_corpus, write_corpus


def tok(text, start, end, noise=False):
    return WordToken(text=text, start=start, end=end, is_vocal_noise=noise)


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))


@pytest.fixture
def small_dialogue():
    rate = 8000
    n = 10 * rate
    rng = np.random.default_rng(3)
    return DialogueRecord(
        id="dlg",
        sample_rate=rate,
        channel_a=rng.uniform(-0.5, 0.5, n),
        channel_b=rng.uniform(-0.5, 0.5, n),
        transcript_a=[tok("hi", 0.5, 0.9), tok("there", 1.0, 1.4)],
        transcript_b=[tok("yes", 2.0, 2.3)],
    )


class TestLoadDialogue:
    def test_round_trip(self, tmp_path, small_dialogue):
        save_dialogue(small_dialogue, tmp_path / "d.wav", tmp_path / "a.jsonl",
                      tmp_path / "b.jsonl")
        rec = load_dialogue(tmp_path / "d.wav", tmp_path / "a.jsonl",
                            tmp_path / "b.jsonl")
        assert rec.duration == pytest.approx(10.0)
        assert rec.transcript_a == small_dialogue.transcript_a
        assert rec.transcript_b == small_dialogue.transcript_b

        # a second save/load cycle is bit-exact
        save_dialogue(rec, tmp_path / "d2.wav", tmp_path / "a2.jsonl",
                      tmp_path / "b2.jsonl")
        rec2 = load_dialogue(tmp_path / "d2.wav", tmp_path / "a2.jsonl",
                             tmp_path / "b2.jsonl")
        assert np.array_equal(rec.channel_a, rec2.channel_a)
        assert np.array_equal(rec.channel_b, rec2.channel_b)
        assert (tmp_path / "d.wav").read_bytes() == (tmp_path / "d2.wav").read_bytes()

    def test_end_before_start_rejected(self, tmp_path, small_dialogue):
        save_dialogue(small_dialogue, tmp_path / "d.wav", tmp_path / "a.jsonl",
                      tmp_path / "b.jsonl")
        write_jsonl(tmp_path / "bad.jsonl",
                    [{"w": "oops", "s": 1.0, "e": 0.5, "noise": False}])
        with pytest.raises(ParseError, match="bad.jsonl:1"):
            load_dialogue(tmp_path / "d.wav", tmp_path / "bad.jsonl",
                          tmp_path / "b.jsonl")

    def test_mono_rejected(self, tmp_path, small_dialogue):
        from scipy.io import wavfile
        wavfile.write(tmp_path / "mono.wav", 8000,
                      np.zeros(8000, dtype=np.int16))
        write_jsonl(tmp_path / "a.jsonl", [])
        with pytest.raises(ValidationError, match="expected 2 channels"):
            load_dialogue(tmp_path / "mono.wav", tmp_path / "a.jsonl",
                          tmp_path / "a.jsonl")

    def test_word_beyond_duration_rejected(self, small_dialogue):
        with pytest.raises(ValidationError, match="outside"):
            DialogueRecord("x", 8000, np.zeros(800), np.zeros(800),
                           [tok("late", 5.0, 6.0)], [])

    def test_channel_length_mismatch(self):
        with pytest.raises(ValidationError, match="sample counts differ"):
            DialogueRecord("x", 8000, np.zeros(10), np.zeros(11), [], [])

    def test_overlap_rejected(self):
        with pytest.raises(ValidationError, match="overlap"):
            DialogueRecord("x", 8000, np.zeros(80000), np.zeros(80000),
                           [tok("a", 0.0, 1.0), tok("b", 0.5, 1.5)], [])

    def test_parse_error_carries_line(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text('{"w": "ok", "s": 0.0, "e": 0.1}\n{"w": broken\n')
        with pytest.raises(ParseError, match="t.jsonl:2"):
            load_transcript(path)


class TestSegmentUtterances:
    def test_merge_small_gap(self):
        track = segment_utterances(
            [tok("a", 0.0, 0.3), tok("b", 0.35, 0.6)], merge_gap=0.2)
        assert len(track.utterances) == 1
        assert track.utterances[0].start == 0.0
        assert track.utterances[0].end == 0.6
        np.testing.assert_array_equal(track.initiations, [0.0])

    def test_split_large_gap(self):
        track = segment_utterances(
            [tok("a", 0.0, 0.3), tok("b", 1.0, 1.2)], merge_gap=0.2)
        assert len(track.utterances) == 2
        np.testing.assert_array_equal(track.initiations, [0.0, 1.0])

    def test_gap_equal_to_merge_gap_splits(self):
        track = segment_utterances(
            [tok("a", 0.0, 0.3), tok("b", 0.5, 0.8)], merge_gap=0.2)
        assert len(track.utterances) == 2

    def test_empty(self):
        track = segment_utterances([])
        assert track.utterances == []
        assert len(track.initiations) == 0

    def test_idempotent(self):
        tokens = [tok(f"w{i}", 0.5 * i, 0.5 * i + 0.3) for i in range(10)]
        first = segment_utterances(tokens, merge_gap=0.2)
        merged = [tok(f"u{i}", u.start, u.end)
                  for i, u in enumerate(first.utterances)]
        again = segment_utterances(merged, merge_gap=0.2)
        assert [(u.start, u.end) for u in first.utterances] == \
               [(u.start, u.end) for u in again.utterances]


class TestSynth:
    def test_deterministic(self):
        spec = SynthSpec(n_dialogues=2, duration=20.0)
        first = synthesize_corpus(spec, seed=7)
        second = synthesize_corpus(spec, seed=7)
        for x, y in zip(first, second):
            assert np.array_equal(x.channel_a, y.channel_a)
            assert np.array_equal(x.channel_b, y.channel_b)
            assert x.transcript_a == y.transcript_a

    def test_cue_rule_conformance(self):
        spec = SynthSpec(n_dialogues=3, duration=40.0, cue_offsets=(0.8,))
        for rec in synthesize_corpus(spec, seed=11):
            tracks = {s: segment_utterances(rec.transcript(s)) for s in "ab"}
            utts = sorted(
                ((u.start, u.end, s) for s in "ab" for u in tracks[s].utterances))
            # every initiation after the bootstrap follows the partner's
            # silence onset by exactly the cue offset
            for prev, cur in zip(utts, utts[1:]):
                assert cur[2] != prev[2]
                assert cur[0] - prev[1] == pytest.approx(0.8, abs=1e-6)

    def test_empty_corpus(self):
        assert synthesize_corpus(SynthSpec(n_dialogues=0), seed=1) == []

    def test_bad_duration_rejected(self):
        from leadtime.errors import ConfigError
        with pytest.raises(ConfigError):
            SynthSpec(duration=0.0)

    def test_initiations_match_utterance_starts(self):
        rec = synthesize_corpus(SynthSpec(n_dialogues=1, duration=30.0), seed=5)[0]
        for s in "ab":
            track = segment_utterances(rec.transcript(s))
            starts = [u.start for u in track.utterances]
            assert list(track.initiations) == starts
            assert starts == sorted(starts)

    def test_write_and_read_corpus(self, tmp_path):
        records = synthesize_corpus(SynthSpec(n_dialogues=2, duration=10.0), seed=3)
        manifest = write_corpus(records, tmp_path / "corpus")
        corpus = read_manifest(manifest)
        assert corpus.ids() == ["d0000", "d0001"]
        rec = corpus.load("d0001")
        assert rec.duration == pytest.approx(10.0)
        assert len(rec.transcript_a) == len(records[1].transcript_a)

    def test_voiced_segments_are_audible(self):
        rec = synthesize_corpus(SynthSpec(n_dialogues=1, duration=20.0), seed=9)[0]
        for s in "ab":
            track = segment_utterances(rec.transcript(s))
            chan = rec.channel(s)
            for u in track.utterances:
                mid = chan[int((u.start + 0.2) * rec.sample_rate):
                           int((u.end - 0.2) * rec.sample_rate)]
                assert np.sqrt(np.mean(mid ** 2)) > 0.05
