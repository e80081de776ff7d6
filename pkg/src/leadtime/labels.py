"""Ground-truth lead time, loss masks, and segment sampling.

The label for frame t is the time remaining until the target speaker's next
utterance onset, clamped to the event horizon delta_max, and 0 while the
target speaker is talking. Training samples 60 s windows whose first target
initiation falls 5-10 s in; evaluation tiles dialogues with 60 s windows
every 20 s.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import UtteranceTrack
from .dsp import DEFAULT_FRAME_SHIFT, FrameGrid

log = logging.getLogger(__name__)

DEFAULT_DELTA_MAX = 2.0
SEGMENT_LEN = 60.0
EVAL_STRIDE = 20.0
FIRST_INITIATION_WINDOW = (5.0, 10.0)


@dataclass
class LabelTrack:
    grid: FrameGrid
    tau: np.ndarray                  # (n_frames,) in [0, delta_max]
    loss_mask: np.ndarray            # (n_frames,) bool
    target_initiations: np.ndarray   # seconds, ascending
    current_initiations: np.ndarray  # seconds, ascending
    delta_max: float


def _speaking_at(track: UtteranceTrack, times: np.ndarray) -> np.ndarray:
    """Boolean mask: is the speaker inside one of their utterances at each time?"""
    out = np.zeros(len(times), dtype=bool)
    for u in track.utterances:
        out |= (times >= u.start) & (times < u.end)
    return out


def compute_tau(target_track: UtteranceTrack, current_track: UtteranceTrack,
                grid: FrameGrid, delta_max: float = DEFAULT_DELTA_MAX) -> LabelTrack:
    """Per-frame true lead time to the target speaker's next initiation.

    tau = 0 while the target is speaking; otherwise min(delta_max, I - t) for
    the next target initiation I strictly after t, or delta_max if none
    remains.
    """
    if delta_max <= 0:
        raise ValueError("delta_max must be > 0")
    times = grid.times()
    inits = target_track.initiations
    tau = np.full(len(times), delta_max, dtype=np.float64)
    if len(inits):
        nxt = np.searchsorted(inits, times, side="right")
        have = nxt < len(inits)
        tau[have] = np.minimum(delta_max, inits[nxt[have]] - times[have])
    tau[_speaking_at(target_track, times)] = 0.0

    track = LabelTrack(
        grid=grid,
        tau=tau,
        loss_mask=np.zeros(len(times), dtype=bool),
        target_initiations=inits,
        current_initiations=current_track.initiations,
        delta_max=delta_max,
    )
    track.loss_mask = compute_loss_mask(track)
    return track


def compute_loss_mask(track: LabelTrack) -> np.ndarray:
    """Frames inside the union of [I - 2*delta_max, I + 1] over target initiations."""
    times = track.grid.times()
    mask = np.zeros(len(times), dtype=bool)
    for i in track.target_initiations:
        mask |= (times >= i - 2 * track.delta_max) & (times <= i + 1.0)
    return mask


@dataclass(frozen=True)
class Segment:
    dialogue_id: str
    start: float
    end: float
    target_speaker: str  # "a" | "b"

    @property
    def duration(self) -> float:
        return self.end - self.start

    @property
    def current_speaker(self) -> str:
        return "b" if self.target_speaker == "a" else "a"


def segments_to_jsonl(segments: list[Segment], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in segments:
            fh.write(json.dumps({
                "dialogue_id": s.dialogue_id, "start": s.start, "end": s.end,
                "target": s.target_speaker}) + "\n")


def segments_from_jsonl(path) -> list[Segment]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        out.append(Segment(d["dialogue_id"], d["start"], d["end"], d["target"]))
    return out


def _first_initiation_ok(inits: np.ndarray, start: float) -> bool:
    lo, hi = FIRST_INITIATION_WINDOW
    after = inits[inits >= start]
    if after.size == 0:
        return False
    first = after[0]
    return start + lo <= first <= start + hi


def sample_train_segments(durations: dict[str, float],
                          initiations: dict[tuple[str, str], np.ndarray],
                          n: int, seed: int,
                          segment_len: float = SEGMENT_LEN,
                          frame_shift: float = DEFAULT_FRAME_SHIFT,
                          max_tries: int = 200) -> list[Segment]:
    """Rejection-sample training segments.

    Each segment is segment_len seconds with a uniformly chosen target
    speaker whose first initiation inside the window falls 5-10 s after the
    window start. Start times snap to the frame grid. Deterministic in seed;
    attempts that find no qualifying window are skipped with a warning, so
    fewer than n segments may be returned.
    """
    rng = np.random.default_rng(seed)
    ids = sorted(durations)
    segments = []
    for _ in range(n):
        did = ids[int(rng.integers(len(ids)))]
        target = "a" if rng.random() < 0.5 else "b"
        dur = durations[did]
        max_start = dur - segment_len
        if max_start < 0:
            log.warning("dialogue %s shorter than %gs; skipping sample",
                        did, segment_len)
            continue
        inits = initiations[(did, target)]
        n_starts = int(math.floor(max_start / frame_shift)) + 1
        placed = None
        for _ in range(max_tries):
            start = float(rng.integers(n_starts)) * frame_shift
            if _first_initiation_ok(inits, start):
                placed = start
                break
        if placed is None:
            log.warning("no qualifying %gs window in dialogue %s (target %s) "
                        "after %d tries", segment_len, did, target, max_tries)
            continue
        segments.append(Segment(did, placed, placed + segment_len, target))
    return segments


def eval_segments(durations: dict[str, float], seed: int = 0,
                  segment_len: float = SEGMENT_LEN,
                  stride: float = EVAL_STRIDE) -> list[Segment]:
    """Cover dialogues with segment_len windows every stride seconds.

    The trailing windows are truncated at the dialogue end. The target
    speaker is drawn uniformly per segment from the evaluation seed.
    """
    rng = np.random.default_rng(seed)
    segments = []
    for did in sorted(durations):
        dur = durations[did]
        start = 0.0
        k = 0
        while start < dur:
            target = "a" if rng.random() < 0.5 else "b"
            segments.append(Segment(did, start, min(start + segment_len, dur),
                                    target))
            k += 1
            start = k * stride
    return segments
