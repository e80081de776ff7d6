"""Synthetic dialogue generator for tests and desk-scale experiments.

Two speakers alternate: one talks (a harmonic tone whose pitch falls toward
the utterance end), goes silent, and the partner initiates a fixed cue offset
after that silence onset. Every initiation except each dialogue's very first
(the bootstrap utterance that seeds the exchange) therefore follows a
current-speaker silence onset by exactly one of ``cue_offsets`` seconds.
Transcripts carry placeholder words tiled over the voiced segments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import (
    DialogueRecord,
    ManifestEntry,
    WordToken,
    save_dialogue,
    write_manifest,
)
from .errors import ConfigError


@dataclass
class SynthSpec:
    n_dialogues: int = 1
    duration: float = 60.0
    sample_rate: int = 8000
    cue_offsets: tuple[float, ...] = (0.8,)
    utterance_min: float = 2.0
    utterance_max: float = 4.0
    bootstrap_len: float = 1.2
    # opening silence; the default range puts both speakers' first
    # initiations 5-10 s in, so whole-dialogue training windows qualify
    lead_in_min: float = 5.2
    lead_in_max: float = 6.8
    pitch_a: float = 120.0
    pitch_b: float = 190.0
    pitch_fall: float = 0.3
    fall_len: float = 0.4
    amplitude: float = 0.3
    noise_level: float = 0.003
    word_len: float = 0.35
    word_gap: float = 0.08

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError("synth spec: duration must be > 0")
        if self.n_dialogues < 0:
            raise ConfigError("synth spec: n_dialogues must be >= 0")
        if not self.cue_offsets:
            raise ConfigError("synth spec: cue_offsets must be non-empty")
        if min(self.cue_offsets) <= 0:
            raise ConfigError("synth spec: cue offsets must be > 0")
        if not 0 < self.utterance_min <= self.utterance_max:
            raise ConfigError("synth spec: bad utterance length range")
        if not 0 <= self.lead_in_min <= self.lead_in_max:
            raise ConfigError("synth spec: bad lead-in range")
        if self.word_gap >= 0.2:
            raise ConfigError("synth spec: word_gap must stay below the "
                              "utterance merge gap (0.2 s)")

    @staticmethod
    def from_json(path) -> "SynthSpec":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f for f in SynthSpec.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"synth spec: unknown fields {sorted(unknown)}")
        if "cue_offsets" in doc:
            doc["cue_offsets"] = tuple(doc["cue_offsets"])
        return SynthSpec(**doc)


@dataclass
class _Event:
    speaker: str
    start: float
    dur: float

    @property
    def end(self) -> float:
        return self.start + self.dur


def _plan_events(spec: SynthSpec, rng: np.random.Generator) -> list[_Event]:
    events = []
    speaker = rng.choice(["a", "b"])
    lead_in = float(rng.uniform(spec.lead_in_min, spec.lead_in_max))
    events.append(_Event(speaker, lead_in, spec.bootstrap_len))
    margin = 0.15
    while True:
        speaker = "b" if speaker == "a" else "a"
        offset = float(rng.choice(spec.cue_offsets))
        start = events[-1].end + offset
        dur = float(rng.uniform(spec.utterance_min, spec.utterance_max))
        if start + dur > spec.duration - margin:
            dur = spec.duration - margin - start
            if dur < 0.6:
                break
        events.append(_Event(speaker, start, dur))
        if events[-1].end >= spec.duration - margin:
            break
    return events


def _tone(spec: SynthSpec, base_f0: float, dur: float, rate: int,
          rng: np.random.Generator) -> np.ndarray:
    n = int(round(dur * rate))
    f0 = np.full(n, base_f0 * rng.uniform(0.92, 1.08))
    fall = min(spec.fall_len, dur)
    nf = int(round(fall * rate))
    if nf > 1:
        f0[-nf:] *= np.linspace(1.0, 1.0 - spec.pitch_fall, nf)
    phase = 2 * np.pi * np.cumsum(f0) / rate
    sig = (0.70 * np.sin(phase) + 0.25 * np.sin(2 * phase)
           + 0.10 * np.sin(3 * phase))
    ramp = min(int(0.025 * rate), n // 2)
    env = np.ones(n)
    if ramp > 0:
        edge = 0.5 - 0.5 * np.cos(np.linspace(0, np.pi, ramp))
        env[:ramp] = edge
        env[-ramp:] = edge[::-1]
    return spec.amplitude * env * sig


def _words_for(event: _Event, spec: SynthSpec, counter: int) -> list[WordToken]:
    step = spec.word_len + spec.word_gap
    k = max(1, int((event.dur + spec.word_gap) / step))
    tokens = []
    for i in range(k):
        s = event.start + i * step
        e = event.end if i == k - 1 else s + spec.word_len
        tokens.append(WordToken(text=f"tok{counter + i}", start=round(s, 6),
                                end=round(e, 6)))
    return tokens


def _synthesize_one(spec: SynthSpec, dialogue_id: str,
                    rng: np.random.Generator) -> DialogueRecord:
    rate = spec.sample_rate
    n = int(round(spec.duration * rate))
    channels = {"a": rng.normal(0.0, spec.noise_level, n),
                "b": rng.normal(0.0, spec.noise_level, n)}
    words: dict[str, list[WordToken]] = {"a": [], "b": []}
    base = {"a": spec.pitch_a, "b": spec.pitch_b}

    for event in _plan_events(spec, rng):
        tone = _tone(spec, base[event.speaker], event.dur, rate, rng)
        i0 = int(round(event.start * rate))
        channels[event.speaker][i0:i0 + len(tone)] += tone
        words[event.speaker].extend(_words_for(event, spec, len(words[event.speaker])))

    for chan in channels.values():
        np.clip(chan, -1.0, 1.0, out=chan)
    return DialogueRecord(dialogue_id, rate, channels["a"], channels["b"],
                          words["a"], words["b"])


def synthesize_corpus(spec: SynthSpec, seed: int) -> list[DialogueRecord]:
    """Generate ``spec.n_dialogues`` dialogues, deterministically in ``seed``."""
    seeds = np.random.SeedSequence(seed).spawn(spec.n_dialogues)
    return [
        _synthesize_one(spec, f"d{i:04d}", np.random.default_rng(s))
        for i, s in enumerate(seeds)
    ]


def write_corpus(records: list[DialogueRecord], out_dir) -> Path:
    """Write dialogues plus a manifest.json under out_dir; returns manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for rec in records:
        save_dialogue(rec, out / f"{rec.id}.wav", out / f"{rec.id}.a.jsonl",
                      out / f"{rec.id}.b.jsonl")
        entries.append(ManifestEntry(
            id=rec.id, audio=f"{rec.id}.wav", transcript_a=f"{rec.id}.a.jsonl",
            transcript_b=f"{rec.id}.b.jsonl", duration=rec.duration,
            sample_rate=rec.sample_rate))
    manifest = out / "manifest.json"
    write_manifest(entries, manifest)
    return manifest
