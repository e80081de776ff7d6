"""Dialogue data model and corpus IO.

A dialogue is two-channel 16-bit PCM audio plus one word-aligned transcript
per speaker. Transcripts are JSON-lines, one object per word:
``{"w": str, "s": start_seconds, "e": end_seconds, "noise": bool}``
("noise" optional, default false). A corpus directory is indexed by a
``manifest.json`` listing the per-dialogue file paths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .dsp import DEFAULT_FRAME_SHIFT, DEFAULT_WINDOW_LEN, FrameGrid
from .errors import ParseError, ValidationError

DEFAULT_MERGE_GAP = 0.2
PCM_SCALE = 32768.0


@dataclass(frozen=True)
class WordToken:
    text: str
    start: float
    end: float
    is_vocal_noise: bool = False

    def __post_init__(self):
        if not self.text:
            raise ValidationError("word token with empty text")
        if not self.start < self.end:
            raise ValidationError(
                f"word '{self.text}': start {self.start} not before end {self.end}")


@dataclass(frozen=True)
class Utterance:
    start: float
    end: float
    word_span: tuple[int, int]  # [first, last) indices into the token list


@dataclass
class UtteranceTrack:
    """Merged utterances for one speaker; utterance starts are initiations."""

    utterances: list[Utterance] = field(default_factory=list)

    @property
    def initiations(self) -> np.ndarray:
        return np.array([u.start for u in self.utterances], dtype=np.float64)

    def speaking_intervals(self) -> np.ndarray:
        return np.array([[u.start, u.end] for u in self.utterances],
                        dtype=np.float64).reshape(-1, 2)


@dataclass
class DialogueRecord:
    id: str
    sample_rate: int
    channel_a: np.ndarray
    channel_b: np.ndarray
    transcript_a: list[WordToken]
    transcript_b: list[WordToken]

    def __post_init__(self):
        self.channel_a = np.asarray(self.channel_a, dtype=np.float64)
        self.channel_b = np.asarray(self.channel_b, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ValidationError("sample_rate must be positive")
        if len(self.channel_a) != len(self.channel_b):
            raise ValidationError(
                f"channel sample counts differ: {len(self.channel_a)} vs "
                f"{len(self.channel_b)}")
        for name, chan in (("a", self.channel_a), ("b", self.channel_b)):
            if np.max(np.abs(chan), initial=0.0) > 1.0 + 1e-9:
                raise ValidationError(f"channel {name} amplitude exceeds 1")
        for name, words in (("a", self.transcript_a), ("b", self.transcript_b)):
            _check_transcript(words, self.duration, name)

    @property
    def duration(self) -> float:
        return len(self.channel_a) / self.sample_rate

    def channel(self, speaker: str) -> np.ndarray:
        return self.channel_a if speaker == "a" else self.channel_b

    def transcript(self, speaker: str) -> list[WordToken]:
        return self.transcript_a if speaker == "a" else self.transcript_b

    def frame_grid(self, frame_shift: float = DEFAULT_FRAME_SHIFT,
                   window_len: float = DEFAULT_WINDOW_LEN) -> FrameGrid:
        return FrameGrid.for_samples(len(self.channel_a), self.sample_rate,
                                     frame_shift, window_len)


def _check_transcript(words: list[WordToken], duration: float, name: str) -> None:
    prev = None
    for w in words:
        if w.start < -1e-9 or w.end > duration + 1e-6:
            raise ValidationError(
                f"transcript {name}: word '{w.text}' [{w.start}, {w.end}] outside "
                f"audio duration {duration:.3f}")
        if prev is not None:
            if w.start < prev.start:
                raise ValidationError(
                    f"transcript {name}: words not sorted at '{w.text}'")
            if w.start < prev.end - 1e-9:
                raise ValidationError(
                    f"transcript {name}: '{prev.text}' and '{w.text}' overlap")
        prev = w


def load_transcript(path) -> list[WordToken]:
    """Parse a JSON-lines word transcript."""
    words = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad JSON ({exc.msg})", path, lineno) from exc
            try:
                token = WordToken(
                    text=str(obj["w"]),
                    start=float(obj["s"]),
                    end=float(obj["e"]),
                    is_vocal_noise=bool(obj.get("noise", False)),
                )
            except KeyError as exc:
                raise ParseError(f"missing field {exc}", path, lineno) from exc
            except (TypeError, ValueError, ValidationError) as exc:
                raise ParseError(str(exc), path, lineno) from exc
            words.append(token)
    return words


def save_transcript(words: list[WordToken], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for w in words:
            obj = {"w": w.text, "s": round(w.start, 6), "e": round(w.end, 6),
                   "noise": w.is_vocal_noise}
            fh.write(json.dumps(obj) + "\n")


def load_dialogue(audio_path, transcript_path_a, transcript_path_b,
                  dialogue_id: str | None = None) -> DialogueRecord:
    """Load a two-channel WAV plus two JSONL transcripts into a DialogueRecord.

    Amplitudes are normalized to [-1, 1] by the 16-bit PCM full scale, so the
    0.01 voice-activity threshold refers to this scale.
    """
    try:
        rate, data = wavfile.read(audio_path)
    except (ValueError, OSError) as exc:
        raise ParseError(f"unreadable WAV: {exc}", audio_path) from exc
    if data.ndim != 2 or data.shape[1] != 2:
        got = 1 if data.ndim == 1 else data.shape[1]
        raise ValidationError(f"{audio_path}: expected 2 channels, got {got}")
    if data.dtype != np.int16:
        raise ValidationError(f"{audio_path}: expected 16-bit PCM, got {data.dtype}")
    audio = data.astype(np.float64) / PCM_SCALE
    words_a = load_transcript(transcript_path_a)
    words_b = load_transcript(transcript_path_b)
    if dialogue_id is None:
        dialogue_id = Path(audio_path).stem
    return DialogueRecord(dialogue_id, int(rate), audio[:, 0], audio[:, 1],
                          words_a, words_b)


def save_dialogue(record: DialogueRecord, audio_path, transcript_path_a,
                  transcript_path_b) -> None:
    """Write a dialogue back to disk in the declared formats (16-bit PCM WAV)."""
    pcm = np.stack([record.channel_a, record.channel_b], axis=1) * PCM_SCALE
    pcm = np.clip(np.round(pcm), -32768, 32767).astype(np.int16)
    wavfile.write(audio_path, record.sample_rate, pcm)
    save_transcript(record.transcript_a, transcript_path_a)
    save_transcript(record.transcript_b, transcript_path_b)


def segment_utterances(tokens: list[WordToken],
                       merge_gap: float = DEFAULT_MERGE_GAP) -> UtteranceTrack:
    """Merge one speaker's word tokens into utterances.

    Consecutive tokens with an inter-token gap < merge_gap form one utterance;
    each utterance's start time is an initiation.
    """
    track = UtteranceTrack()
    if not tokens:
        return track
    span_start = 0
    for i in range(1, len(tokens) + 1):
        if i < len(tokens) and tokens[i].start - tokens[i - 1].end < merge_gap:
            continue
        track.utterances.append(Utterance(
            start=tokens[span_start].start,
            end=tokens[i - 1].end,
            word_span=(span_start, i),
        ))
        span_start = i
    return track


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    audio: str
    transcript_a: str
    transcript_b: str
    duration: float
    sample_rate: int


class Corpus:
    """A manifest-indexed collection of dialogues on disk."""

    def __init__(self, entries: list[ManifestEntry], root: Path):
        self.root = Path(root)
        self.entries = {e.id: e for e in entries}
        if len(self.entries) != len(entries):
            raise ValidationError("duplicate dialogue ids in manifest")

    def __len__(self):
        return len(self.entries)

    def ids(self) -> list[str]:
        return sorted(self.entries)

    def entry(self, dialogue_id: str) -> ManifestEntry:
        try:
            return self.entries[dialogue_id]
        except KeyError:
            raise ValidationError(f"dialogue id '{dialogue_id}' not in manifest")

    def load(self, dialogue_id: str) -> DialogueRecord:
        e = self.entry(dialogue_id)
        return load_dialogue(self.root / e.audio, self.root / e.transcript_a,
                             self.root / e.transcript_b, dialogue_id=e.id)

    def transcripts(self, dialogue_id: str) -> tuple[list[WordToken], list[WordToken]]:
        e = self.entry(dialogue_id)
        return (load_transcript(self.root / e.transcript_a),
                load_transcript(self.root / e.transcript_b))


def read_manifest(path) -> Corpus:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad JSON ({exc.msg})", path) from exc
    try:
        entries = [ManifestEntry(**d) for d in doc["dialogues"]]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"bad manifest structure: {exc}", path) from exc
    return Corpus(entries, root=path.parent)


def write_manifest(entries: list[ManifestEntry], path) -> None:
    doc = {"dialogues": [vars(e) for e in entries]}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
