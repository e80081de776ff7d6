"""Assembles per-frame model inputs for one channel of a dialogue.

Classical features (R = RMS energy, A = pitch + fundamental frequency) are
computed from the audio; neural streams (W = acoustic embeddings, G = word
embeddings) are read from dump files named ``<id>.<channel>.acoustic.ilde``
and ``<id>.<channel>.word.ilde`` in the dump directory. Audio streams
concatenate in the fixed order W, R, A.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dsp
from .corpus import DialogueRecord
from .dsp import FrameGrid
from .embeddings import align, read_dump
from .errors import ValidationError

EXTRACT_HINT = ("run `leadtime-extract --manifest <manifest> --out <dumps_dir> "
                "--which both` to produce embedding dumps")


@dataclass
class FeatureBundle:
    grid: FrameGrid
    letters: tuple[str, ...]
    audio: np.ndarray | None  # (n_frames, d_audio)
    word: np.ndarray | None   # (n_frames, d_word)

    @property
    def n_frames(self) -> int:
        return self.grid.n_frames

    def sliced(self, i0: int, i1: int) -> "FeatureBundle":
        grid = FrameGrid(self.grid.frame_shift, self.grid.window_len, i1 - i0)
        return FeatureBundle(
            grid, self.letters,
            None if self.audio is None else self.audio[i0:i1],
            None if self.word is None else self.word[i0:i1])


def dump_path(dumps_dir, dialogue_id: str, channel: str, kind: str) -> Path:
    return Path(dumps_dir) / f"{dialogue_id}.{channel}.{kind}.ilde"


def compute_channel_features(record: DialogueRecord, channel: str,
                             letters, dumps_dir=None) -> FeatureBundle:
    """Build the feature bundle for one speaker channel on the default grid."""
    from .nnet import normalize_feature_set

    letters = normalize_feature_set(letters)
    grid = record.frame_grid()
    wave = record.channel(channel)
    rate = record.sample_rate

    audio_parts = []
    if "W" in letters:
        audio_parts.append(_load_dump_stream(record.id, channel, "acoustic",
                                             dumps_dir, grid))
    if "R" in letters:
        audio_parts.append(dsp.rmse(wave, rate, grid).values)
    if "A" in letters:
        audio_parts.append(dsp.pitch(wave, rate, grid).values)
        audio_parts.append(dsp.yin_f0(wave, rate, grid).values)
    audio = np.concatenate(audio_parts, axis=1) if audio_parts else None

    word = None
    if "G" in letters:
        word = _load_dump_stream(record.id, channel, "word", dumps_dir, grid)
    return FeatureBundle(grid, letters, audio, word)


def _load_dump_stream(dialogue_id: str, channel: str, kind: str, dumps_dir,
                      grid: FrameGrid) -> np.ndarray:
    if dumps_dir is None:
        raise ValidationError(
            f"feature set needs {kind} embeddings but no dump directory is "
            f"configured; {EXTRACT_HINT}")
    path = dump_path(dumps_dir, dialogue_id, channel, kind)
    if not path.exists():
        raise ValidationError(f"missing embedding dump {path}; {EXTRACT_HINT}")
    dump = read_dump(path)
    expected = "acoustic" if kind == "acoustic" else "word"
    if dump.kind != expected:
        raise ValidationError(f"{path}: expected a {expected} dump")
    aligned = align(dump, grid)
    return aligned.acoustic if kind == "acoustic" else aligned.word
