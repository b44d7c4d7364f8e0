"""Frame-feature streams on disk.

Two encodings share one header (magic ``FFS1``, version 1, ``S`` tokens per
frame, ``D`` dims per token):

binary
    16-byte header ``<4sIII`` followed by frames, each ``S*D`` row-major
    little-endian float32 values with no padding. Step indices are implicit
    in file order.
jsonl
    First line is the header object, then one ``{"t": ..., "tokens": [[...]]}``
    object per line with consecutive ``t`` starting at 0.

Values travel as float32 and are widened to float64 on read.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    BadMagicError,
    NonFiniteValueError,
    ShapeMismatchError,
    StepOrderError,
    StreamFormatError,
    TruncatedFrameError,
    TruncatedHeaderError,
    UnsupportedVersionError,
)

MAGIC = b"FFS1"
VERSION = 1
HEADER = struct.Struct("<4sIII")
WIRE_DTYPE = np.dtype("<f4")
FORMATS = ("binary", "jsonl")


@dataclass(frozen=True)
class StreamHeader:
    S: int
    D: int
    magic: bytes = MAGIC
    version: int = VERSION

    def __post_init__(self):
        if self.magic != MAGIC:
            raise BadMagicError(f"bad magic {self.magic!r}, expected {MAGIC!r}")
        if self.version != VERSION:
            raise UnsupportedVersionError(f"unsupported stream version {self.version}")
        if self.S < 1 or self.D < 1:
            raise StreamFormatError(f"invalid frame shape S={self.S}, D={self.D}")

    def pack(self) -> bytes:
        return HEADER.pack(self.magic, self.version, self.S, self.D)

    @property
    def frame_nbytes(self) -> int:
        return self.S * self.D * WIRE_DTYPE.itemsize


@dataclass(frozen=True, eq=False)
class FrameFeature:
    """One timestep: ``S`` spatial tokens of ``D`` dims at step ``t``.

    ``tokens`` is stored as a read-only float64 array.
    """

    t: int
    tokens: np.ndarray = field(repr=False)

    def __post_init__(self):
        tokens = np.array(self.tokens, dtype=np.float64, copy=True)
        if tokens.ndim != 2:
            raise ShapeMismatchError(f"tokens must be 2-D (S x D), got shape {tokens.shape}")
        if not np.isfinite(tokens).all():
            raise NonFiniteValueError(f"frame t={self.t} contains NaN or Inf")
        if self.t < 0:
            raise StepOrderError(f"negative step index {self.t}")
        tokens.setflags(write=False)
        object.__setattr__(self, "t", int(self.t))
        object.__setattr__(self, "tokens", tokens)

    @property
    def shape(self) -> tuple[int, int]:
        return self.tokens.shape

    def __eq__(self, other):
        if not isinstance(other, FrameFeature):
            return NotImplemented
        return self.t == other.t and np.array_equal(self.tokens, other.tokens)

    __hash__ = None

    def __repr__(self):
        return f"FrameFeature(t={self.t}, shape={self.shape})"


class StreamReader:
    """Sequential reader returned by :func:`open_stream`.

    Iterate over it, or call :meth:`read_frame` until it returns ``None``.
    """

    def __init__(self, path, format="binary"):
        if format not in FORMATS:
            raise ValueError(f"unknown stream format {format!r}")
        self.path = os.fspath(path)
        self.format = format
        self._next_t = 0
        mode = "rb" if format == "binary" else "r"
        self._fh = open(self.path, mode, **({} if format == "binary" else {"encoding": "utf-8"}))
        try:
            self.header = self._read_header()
        except BaseException:
            self._fh.close()
            raise

    @property
    def S(self) -> int:
        return self.header.S

    @property
    def D(self) -> int:
        return self.header.D

    def _read_header(self) -> StreamHeader:
        if self.format == "binary":
            raw = self._fh.read(HEADER.size)
            if len(raw) >= 4 and raw[:4] != MAGIC:
                raise BadMagicError(f"bad magic {raw[:4]!r} in {self.path}")
            if len(raw) < HEADER.size:
                raise TruncatedHeaderError(f"{self.path}: header is {len(raw)} of {HEADER.size} bytes")
            magic, version, S, D = HEADER.unpack(raw)
            return StreamHeader(S=S, D=D, magic=magic, version=version)

        line = self._fh.readline()
        if not line.strip():
            raise TruncatedHeaderError(f"{self.path}: missing header line")
        try:
            obj = json.loads(line)
            magic = obj["magic"].encode("ascii")
            version, S, D = int(obj["version"]), int(obj["S"]), int(obj["D"])
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise TruncatedHeaderError(f"{self.path}: unreadable header line: {exc}") from None
        return StreamHeader(S=S, D=D, magic=magic, version=version)

    def read_frame(self) -> FrameFeature | None:
        """Next frame, or ``None`` at end of stream."""
        if self.format == "binary":
            tokens = self._read_binary_tokens()
        else:
            tokens = self._read_jsonl_tokens()
        if tokens is None:
            return None
        if not np.isfinite(tokens).all():
            raise NonFiniteValueError(f"{self.path}: frame t={self._next_t} contains NaN or Inf")
        frame = FrameFeature(self._next_t, tokens)
        self._next_t += 1
        return frame

    def _read_binary_tokens(self):
        nbytes = self.header.frame_nbytes
        raw = self._fh.read(nbytes)
        if not raw:
            return None
        if len(raw) < nbytes:
            raise TruncatedFrameError(
                f"{self.path}: frame t={self._next_t} truncated ({len(raw)} of {nbytes} bytes)"
            )
        return np.frombuffer(raw, dtype=WIRE_DTYPE).reshape(self.S, self.D).astype(np.float64)

    def _read_jsonl_tokens(self):
        while True:
            line = self._fh.readline()
            if not line:
                return None
            if line.strip():
                break
        try:
            obj = json.loads(line)
        except ValueError:
            raise TruncatedFrameError(f"{self.path}: frame t={self._next_t} is not valid JSON") from None
        if obj.get("t") != self._next_t:
            raise StepOrderError(f"{self.path}: expected t={self._next_t}, got t={obj.get('t')}")
        tokens = np.asarray(obj.get("tokens"), dtype=np.float64)
        if tokens.shape != (self.S, self.D):
            raise ShapeMismatchError(
                f"{self.path}: frame t={self._next_t} has shape {tokens.shape}, header says ({self.S}, {self.D})"
            )
        # same precision as the binary path
        return tokens.astype(WIRE_DTYPE).astype(np.float64)

    def __iter__(self) -> Iterator[FrameFeature]:
        while (frame := self.read_frame()) is not None:
            yield frame

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def infer_format(path) -> str:
    return "jsonl" if os.fspath(path).endswith((".jsonl", ".json")) else "binary"


def open_stream(path, format: str | None = "binary") -> StreamReader:
    """Open a stream file and validate its header.

    ``format=None`` picks ``jsonl`` for ``.jsonl`` files and ``binary``
    otherwise.
    """
    return StreamReader(path, format or infer_format(path))


def read_all(path, format: str | None = "binary") -> tuple[StreamHeader, list[FrameFeature]]:
    with open_stream(path, format) as reader:
        return reader.header, list(reader)


def write_stream(
    frames: Iterable[FrameFeature],
    path,
    format: str | None = "binary",
    shape: tuple[int, int] | None = None,
) -> StreamHeader:
    """Write ``frames`` (steps 0, 1, 2, ...) to ``path``.

    ``shape`` is only needed when ``frames`` is empty; otherwise it is taken
    from the first frame and, if given, must agree with it.
    """
    format = format or infer_format(path)
    if format not in FORMATS:
        raise ValueError(f"unknown stream format {format!r}")
    frames = list(frames)
    if frames:
        first = frames[0].shape
        if shape is not None and tuple(shape) != first:
            raise ShapeMismatchError(f"shape {tuple(shape)} does not match first frame {first}")
        shape = first
    elif shape is None:
        raise ShapeMismatchError("shape is required to write an empty stream")
    header = StreamHeader(S=int(shape[0]), D=int(shape[1]))
    for i, frame in enumerate(frames):
        if frame.shape != tuple(shape):
            raise ShapeMismatchError(f"frame t={frame.t} has shape {frame.shape}, expected {tuple(shape)}")
        if frame.t != i:
            raise StepOrderError(f"frames must carry steps 0..n-1 in order; position {i} has t={frame.t}")

    if format == "binary":
        with open(path, "wb") as fh:
            fh.write(header.pack())
            for frame in frames:
                fh.write(frame.tokens.astype(WIRE_DTYPE).tobytes(order="C"))
    else:
        with open(path, "w", encoding="utf-8") as fh:
            meta = {"magic": MAGIC.decode(), "version": VERSION, "S": header.S, "D": header.D}
            fh.write(json.dumps(meta) + "\n")
            for frame in frames:
                wire = frame.tokens.astype(WIRE_DTYPE).astype(np.float64)
                fh.write(json.dumps({"t": frame.t, "tokens": wire.tolist()}) + "\n")
    return header


def expected_file_size(count: int, S: int, D: int) -> int:
    return HEADER.size + count * S * D * WIRE_DTYPE.itemsize


def frames_from_array(array, start: int = 0) -> list[FrameFeature]:
    """Wrap a ``(T, S, D)`` array as frames with steps ``start, start+1, ...``."""
    array = np.asarray(array, dtype=np.float64)
    if array.ndim != 3:
        raise ShapeMismatchError(f"expected a (T, S, D) array, got shape {array.shape}")
    return [FrameFeature(start + i, array[i]) for i in range(array.shape[0])]

