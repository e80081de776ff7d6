"""Precomputed neural-embedding dumps and their alignment to the frame grid.

Dump format (little-endian):
  magic "ILDE" | u32 version=1 | u8 kind (0=acoustic, 1=word) | u32 dim |
  u32 count | f32 frame_shift
  acoustic payload: count*dim float32, row-major
  word payload:     count records of (u32 word_index, f32 end_time, dim*f32)

Acoustic rows are one embedding per dump frame; word rows carry the encoder
state of each salient word, sorted by the word's end time. Alignment is
causal: frame t of the target grid reads the latest dump row at or before
t * frame_shift; a word's vector is held from its end_time until the next
word's end_time, and frames before any word read zeros.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .dsp import FrameGrid
from .errors import DumpFormatError

MAGIC = b"ILDE"
VERSION = 1
KIND_ACOUSTIC = 0
KIND_WORD = 1
_HEADER = struct.Struct("<4sIBIIf")


@dataclass
class EmbeddingDump:
    kind: str  # "acoustic" | "word"
    dim: int
    frame_shift: float
    vectors: np.ndarray  # (count, dim) float32
    word_indices: np.ndarray | None = None  # (count,) u32, word dumps only
    end_times: np.ndarray | None = None     # (count,) f32, word dumps only

    @property
    def count(self) -> int:
        return len(self.vectors)


def write_dump(path, dump: EmbeddingDump) -> None:
    kind = KIND_ACOUSTIC if dump.kind == "acoustic" else KIND_WORD
    vectors = np.ascontiguousarray(dump.vectors, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, kind, dump.dim, dump.count,
                              dump.frame_shift))
        if kind == KIND_ACOUSTIC:
            fh.write(vectors.tobytes())
        else:
            for i in range(dump.count):
                fh.write(struct.pack("<If", int(dump.word_indices[i]),
                                     float(dump.end_times[i])))
                fh.write(vectors[i].tobytes())


def read_dump(path) -> EmbeddingDump:
    """Read and validate an embedding dump file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DumpFormatError(f"{path}: file shorter than header")
    magic, version, kind, dim, count, frame_shift = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DumpFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DumpFormatError(f"{path}: unsupported version {version}")
    if kind not in (KIND_ACOUSTIC, KIND_WORD):
        raise DumpFormatError(f"{path}: unknown kind {kind}")
    if dim <= 0:
        raise DumpFormatError(f"{path}: non-positive dim {dim}")
    if frame_shift <= 0:
        raise DumpFormatError(f"{path}: non-positive frame_shift {frame_shift}")
    payload = raw[_HEADER.size:]

    if kind == KIND_ACOUSTIC:
        expected = count * dim * 4
        if len(payload) != expected:
            raise DumpFormatError(
                f"{path}: payload size {len(payload)} != expected {expected}")
        vectors = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
        dump = EmbeddingDump("acoustic", dim, frame_shift, vectors)
    else:
        record = 8 + dim * 4
        expected = count * record
        if len(payload) != expected:
            raise DumpFormatError(
                f"{path}: payload size {len(payload)} != expected {expected}")
        word_indices = np.empty(count, dtype=np.uint32)
        end_times = np.empty(count, dtype=np.float32)
        vectors = np.empty((count, dim), dtype=np.float32)
        for i in range(count):
            off = i * record
            word_indices[i], end_times[i] = struct.unpack_from("<If", payload, off)
            vectors[i] = np.frombuffer(payload, dtype="<f4", count=dim,
                                       offset=off + 8)
        if count > 1 and np.any(np.diff(end_times) < 0):
            raise DumpFormatError(f"{path}: word end_times not sorted")
        dump = EmbeddingDump("word", dim, frame_shift, vectors,
                             word_indices, end_times)

    if not np.all(np.isfinite(dump.vectors)):
        raise DumpFormatError(f"{path}: vectors contain NaN or Inf")
    return dump


@dataclass
class AlignedEmbeddings:
    grid: FrameGrid
    acoustic: np.ndarray | None = None  # (n_frames, d_w)
    word: np.ndarray | None = None      # (n_frames, d_g)


def align(dump: EmbeddingDump, grid: FrameGrid) -> AlignedEmbeddings:
    """Resample a dump onto a frame grid, causally.

    Output always has grid.n_frames rows: a short acoustic dump repeats its
    last row, and frames before the first word (or an empty dump) read zeros.
    """
    times = grid.times()
    if dump.kind == "acoustic":
        if dump.count == 0:
            mat = np.zeros((grid.n_frames, dump.dim))
        else:
            idx = np.floor(times / dump.frame_shift + 1e-9).astype(np.int64)
            idx = np.clip(idx, 0, dump.count - 1)
            mat = dump.vectors[idx].astype(np.float64)
        return AlignedEmbeddings(grid, acoustic=mat)

    mat = np.zeros((grid.n_frames, dump.dim))
    if dump.count:
        idx = np.searchsorted(dump.end_times.astype(np.float64), times,
                              side="right") - 1
        have = idx >= 0
        mat[have] = dump.vectors[idx[have]].astype(np.float64)
    return AlignedEmbeddings(grid, word=mat)
