"""Engine state files.

Layout (all integers little-endian)::

    offset  size  content
    0       4     magic b"FMST"
    4       4     uint32 format version (1)
    8       8     uint64 length L of the metadata block
    16      L     UTF-8 JSON metadata
    16+L    ...   tensor payload, raw little-endian, concatenated

The metadata holds the resolved config, its fingerprint, scalar state and a
``tensors`` table of ``{name, dtype, shape, offset, nbytes}`` with offsets
relative to the start of the payload. Floats are stored as float64 so a
restored engine continues bit-identically.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .config import EngineConfig
from .errors import FingerprintMismatchError, StateFileError, VersionMismatchError
from .mfm import ResidualEntry
from .stm import Episode
from .streamio import FrameFeature

MAGIC = b"FMST"
FORMAT_VERSION = 1
PREAMBLE = struct.Struct("<4sIQ")


def _frames_tensor(frames, S, D):
    if not frames:
        return np.zeros((0, S, D)), np.zeros(0, dtype=np.int64)
    return np.stack([f.tokens for f in frames]), np.array([f.t for f in frames], dtype=np.int64)


def collect_state(engine) -> tuple[dict, dict[str, np.ndarray]]:
    cfg = engine.config
    meta: dict = {
        "format_version": FORMAT_VERSION,
        "config": cfg.to_flat(include_shape=True),
        "fingerprint": cfg.fingerprint(),
        "step_count": engine.step_count,
        "window_evictions": engine.window.evictions,
    }
    tensors: dict[str, np.ndarray] = {}
    if engine.bank is None:
        meta["bank"] = None
        return meta, tensors

    bank, S, D = engine.bank, engine.bank.S, engine.bank.D
    meta["bank"] = {
        "first_t": bank.first_t,
        "last_t": bank.last_t,
        "updates": bank.updates,
        "last_update_ops": bank.last_update_ops,
        "max_abs_seen": bank.max_abs_seen,
    }
    tensors["window_tokens"], tensors["window_t"] = _frames_tensor(engine.window.contents(), S, D)
    tensors["omega"] = np.asarray(bank.omega)
    tensors["coeff_real"] = np.ascontiguousarray(bank.coeff.real)
    tensors["coeff_imag"] = np.ascontiguousarray(bank.coeff.imag)

    entries = engine.residuals.entries()
    tensors["residual_t"] = np.array([e.t for e in entries], dtype=np.int64)
    tensors["residual_sizes"] = np.array([e.indices.size for e in entries], dtype=np.int64)
    tensors["residual_indices"] = (
        np.concatenate([e.indices for e in entries]).astype(np.int64) if entries else np.zeros(0, dtype=np.int64)
    )
    tensors["residual_tokens"] = np.concatenate([e.tokens for e in entries]) if entries else np.zeros((0, D))
    tensors["residual_norms"] = np.concatenate([e.norms for e in entries]) if entries else np.zeros(0)

    stm = engine.stm
    meta["stm"] = {
        "ingested": stm.ingested,
        "dropped": stm.dropped,
        "zero_vector_warnings": stm.zero_vector_warnings,
        "last_t": stm.last_t,
        "has_prev": stm.prev_pooled is not None,
        "episodes": [
            {
                "start_t": e.start_t,
                "end_t": e.end_t,
                "count": e.count,
                "merged_from": e.merged_from,
                "thumbnails": len(e.thumbnails),
            }
            for e in stm.episodes
        ],
    }
    tensors["episode_centroids"] = (
        np.stack([e.centroid for e in stm.episodes]) if stm.episodes else np.zeros((0, D))
    )
    thumbs = [f for e in stm.episodes for f in e.thumbnails]
    tensors["thumb_tokens"], tensors["thumb_t"] = _frames_tensor(thumbs, S, D)
    tensors["active_tokens"], tensors["active_t"] = _frames_tensor(stm.active_frames, S, D)
    tensors["active_pooled"] = np.stack(stm.active_pooled) if stm.active_pooled else np.zeros((0, D))
    tensors["prev_pooled"] = stm.prev_pooled if stm.prev_pooled is not None else np.zeros(D)
    tensors["boundary_log"] = np.array(stm.boundary_log, dtype=np.int64)
    return meta, tensors


def export_state(engine, path):
    meta, tensors = collect_state(engine)
    table, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        dtype = arr.dtype.newbyteorder("<")
        blob = arr.astype(dtype, copy=False).tobytes()
        table.append({"name": name, "dtype": dtype.str, "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    meta["tensors"] = table
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(meta_bytes)))
        fh.write(meta_bytes)
        for blob in blobs:
            fh.write(blob)


def read_state_file(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < PREAMBLE.size:
        raise StateFileError(f"{path}: too short to be a state file")
    magic, version, meta_len = PREAMBLE.unpack_from(raw)
    if magic != MAGIC or version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: expected {MAGIC!r} v{FORMAT_VERSION}, found {magic!r} v{version}"
        )
    try:
        meta = json.loads(raw[PREAMBLE.size : PREAMBLE.size + meta_len].decode("utf-8"))
    except ValueError as exc:
        raise StateFileError(f"{path}: corrupt metadata: {exc}") from None
    base = PREAMBLE.size + meta_len
    tensors = {}
    for spec in meta.get("tensors", []):
        start = base + spec["offset"]
        chunk = raw[start : start + spec["nbytes"]]
        if len(chunk) != spec["nbytes"]:
            raise StateFileError(f"{path}: tensor {spec['name']!r} is truncated")
        tensors[spec["name"]] = np.frombuffer(chunk, dtype=np.dtype(spec["dtype"])).reshape(spec["shape"])
    return meta, tensors


def import_state(path, config: EngineConfig | None = None):
    from .engine import Engine

    meta, tensors = read_state_file(path)
    flat = meta["config"]
    stored = EngineConfig.from_flat({k: v for k, v in flat.items() if v is not None})
    if stored.fingerprint() != meta["fingerprint"]:
        raise FingerprintMismatchError(f"{path}: stored config does not match its fingerprint")
    if config is not None and config.fingerprint() != meta["fingerprint"]:
        raise FingerprintMismatchError(f"{path}: state was written with a different configuration")

    engine = Engine(stored)
    engine.step_count = meta["step_count"]
    if meta["bank"] is None:
        return engine

    b = meta["bank"]
    bank = engine.bank
    coeff = np.empty(tensors["coeff_real"].shape, dtype=np.complex128)
    coeff.real, coeff.imag = tensors["coeff_real"], tensors["coeff_imag"]
    bank.coeff = coeff
    if not np.array_equal(tensors["omega"], bank.omega):
        raise StateFileError(f"{path}: band frequencies disagree with the configuration")
    bank.first_t, bank.last_t = b["first_t"], b["last_t"]
    bank.updates, bank.last_update_ops, bank.max_abs_seen = b["updates"], b["last_update_ops"], b["max_abs_seen"]

    window = [FrameFeature(int(t), x) for t, x in zip(tensors["window_t"], tensors["window_tokens"])]
    engine.window.restore(window, meta["window_evictions"])

    pos = 0
    for t, n in zip(tensors["residual_t"], tensors["residual_sizes"]):
        n = int(n)
        entry = ResidualEntry(
            t=int(t),
            indices=tensors["residual_indices"][pos : pos + n].astype(np.intp),
            tokens=tensors["residual_tokens"][pos : pos + n],
            norms=tensors["residual_norms"][pos : pos + n],
        )
        engine.residuals.store(entry)
        pos += n

    s = meta["stm"]
    stm = engine.stm
    thumbs = [FrameFeature(int(t), x) for t, x in zip(tensors["thumb_t"], tensors["thumb_tokens"])]
    pos, episodes = 0, []
    for info, mu in zip(s["episodes"], tensors["episode_centroids"]):
        n = info["thumbnails"]
        episodes.append(
            Episode(
                start_t=info["start_t"],
                end_t=info["end_t"],
                count=info["count"],
                centroid=mu,
                thumbnails=thumbs[pos : pos + n],
                merged_from=info["merged_from"],
            )
        )
        pos += n
    stm.restore_episodes(episodes)
    stm.active_frames = [FrameFeature(int(t), x) for t, x in zip(tensors["active_t"], tensors["active_tokens"])]
    stm.active_pooled = [np.array(v) for v in tensors["active_pooled"]]
    stm.prev_pooled = np.array(tensors["prev_pooled"]) if s["has_prev"] else None
    stm.boundary_log = [int(t) for t in tensors["boundary_log"]]
    stm.ingested, stm.dropped = s["ingested"], s["dropped"]
    stm.zero_vector_warnings, stm.last_t = s["zero_vector_warnings"], s["last_t"]
    return engine

