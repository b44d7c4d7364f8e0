"""Frame-feature stream files: write, read back, and what a damaged file
looks like to the reader.

A stream is a 16-byte header (magic, version, S, D) followed by raw
little-endian float32 frames. The JSONL form carries the same data one
frame per line and is handy for eyeballing.
"""

import os
import tempfile

import numpy as np

from freshmem.errors import TruncatedFrameError
from freshmem.streamio import expected_file_size, frames_from_array, open_stream, read_all, write_stream

rng = np.random.default_rng(0)
data = rng.standard_normal((10, 4, 6))  # 10 frames of 4 tokens x 6 dims
frames = frames_from_array(data)

tmp = tempfile.mkdtemp()
binary = os.path.join(tmp, "clip.ffs")
jsonl = os.path.join(tmp, "clip.jsonl")
write_stream(frames, binary)
write_stream(frames, jsonl, format=None)  # picked from the extension

print("binary size:", os.path.getsize(binary), "bytes, expected", expected_file_size(10, 4, 6))
header, back = read_all(binary)
print("header:", header)
# tokens travel as float32, so the round trip is exact up to that cast
print("max round-trip error:", np.abs(np.stack([f.tokens for f in back]) - data).max())
print("jsonl decodes identically:", read_all(jsonl, format=None)[1] == back)

# chop the last frame in half
with open(binary, "rb") as fh:
    raw = fh.read()
with open(binary, "wb") as fh:
    fh.write(raw[: len(raw) - 40])

with open_stream(binary) as reader:
    good = 0
    try:
        for frame in reader:
            good += 1
    except TruncatedFrameError as exc:
        print(f"read {good} intact frames, then: {exc}")
