"""Synthetic streams, brute-force oracles and metrics.

The oracles here deliberately share nothing with the engine beyond the
frame type: the DFT oracle sums the closed form directly and the
segmentation oracle re-derives every boundary in one offline pass.
"""

from __future__ import annotations

import bisect
import csv
import dataclasses
import io
import time
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .config import EngineConfig
from .engine import Engine
from .errors import HistoryTooShortError, MarginUnsatisfiableError
from .mfm import reconstruct
from .streamio import FrameFeature

# ---------------------------------------------------------------- streams


@dataclass(frozen=True)
class SyntheticSpec:
    """Planted-episode stream parameters.

    ``min_adjacent_gap`` is the largest cosine allowed between consecutive
    frames that straddle an episode boundary; ``min_within_sim`` the
    smallest cosine allowed between consecutive frames of one episode.
    Cosines are taken between token-mean pooled vectors.
    """

    episode_count: int = 5
    frames_per_episode: tuple[int, int] = (20, 40)
    D: int = 32
    S: int = 8
    within_noise: float = 0.15
    min_adjacent_gap: float = 0.2
    min_within_sim: float = 0.6
    seed: int = 0


def _unit(v):
    return v / np.linalg.norm(v)


def _cos(a, b):
    na, nb = np.sqrt(np.dot(a, a)), np.sqrt(np.dot(b, b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def gen_synthetic_stream(spec: SyntheticSpec, seed: int | None = None, max_attempts: int = 1000):
    """Frames with planted episode boundaries whose margins are certified.

    Returns ``(frames, boundaries)`` where ``boundaries`` lists the steps at
    which a new episode starts.
    """
    if not spec.min_adjacent_gap < spec.min_within_sim:
        raise MarginUnsatisfiableError(
            f"boundary cosine <= {spec.min_adjacent_gap} and within cosine >= {spec.min_within_sim} cannot both hold"
        )
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    lo, hi = spec.frames_per_episode

    def make_frame(c):
        tokens = c[None, :] + spec.within_noise * rng.standard_normal((spec.S, spec.D))
        return tokens / np.linalg.norm(tokens, axis=1, keepdims=True)

    arrays, boundaries = [], []
    prev_pooled = None
    for ep in range(spec.episode_count):
        length = int(rng.integers(lo, hi + 1))
        for _ in range(max_attempts):
            c = _unit(rng.standard_normal(spec.D))
            first = make_frame(c)
            if prev_pooled is None or _cos(prev_pooled, first.mean(axis=0)) <= spec.min_adjacent_gap:
                break
        else:
            raise MarginUnsatisfiableError(f"episode {ep}: no centroid met the boundary margin")
        if ep > 0:
            boundaries.append(len(arrays))
        arrays.append(first)
        prev_pooled = first.mean(axis=0)
        for _ in range(length - 1):
            for _ in range(max_attempts):
                tokens = make_frame(c)
                if _cos(prev_pooled, tokens.mean(axis=0)) >= spec.min_within_sim:
                    break
            else:
                raise MarginUnsatisfiableError(f"episode {ep}: within-episode margin not reachable")
            arrays.append(tokens)
            prev_pooled = tokens.mean(axis=0)

    frames = [FrameFeature(t, x) for t, x in enumerate(arrays)]
    return frames, tuple(boundaries)


def certify_margins(frames: Sequence[FrameFeature], boundaries: Iterable[int], gap: float, within: float) -> bool:
    bset = set(boundaries)
    pooled = [f.tokens.mean(axis=0) for f in frames]
    for t in range(1, len(pooled)):
        c = _cos(pooled[t - 1], pooled[t])
        if (t in bset and c > gap) or (t not in bset and c < within):
            return False
    return True


def random_frames(length: int, S: int, D: int, seed: int = 0, low: float = -1.0, high: float = 1.0):
    """IID uniform frames in ``[low, high)``."""
    rng = np.random.default_rng(seed)
    data = rng.uniform(low, high, size=(length, S, D))
    return [FrameFeature(t, data[t]) for t in range(length)]


def correlated_frames(length: int, S: int, D: int, seed: int = 0, rho: float = 0.7):
    """AR(1) frames; consecutive cosines scatter around ``rho`` so boundary
    decisions land on both sides of the default threshold."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((length, S, D))
    data = np.empty_like(noise)
    data[0] = noise[0]
    scale = np.sqrt(1.0 - rho * rho)
    for t in range(1, length):
        data[t] = rho * data[t - 1] + scale * noise[t]
    return [FrameFeature(t, data[t]) for t in range(length)]


# ---------------------------------------------------------------- oracles


def batch_dft_oracle(frames: Sequence[FrameFeature], omega, gamma: float) -> np.ndarray:
    """Closed-form decayed DFT ``sum_s gamma**(T-s) x_s exp(-j omega_k s)``,
    ``T`` being the last step, returned as a ``(K, S, D)`` complex array."""
    if len(frames) == 0:
        raise ValueError("batch DFT oracle needs at least one frame")
    omega = np.asarray(omega, dtype=np.float64)
    X = np.stack([f.tokens for f in frames])
    n, S, D = X.shape
    ts = np.array([f.t for f in frames], dtype=np.float64)
    T = ts[-1]
    out = np.zeros((omega.size, S * D), dtype=np.complex128)
    flat = X.reshape(n, S * D)
    chunk = 20000
    for lo in range(0, n, chunk):
        s = ts[lo : lo + chunk]
        phase = np.mod(np.outer(omega, s), 2.0 * np.pi)
        weight = np.power(gamma, T - s)
        basis = weight * (np.cos(phase) - 1j * np.sin(phase))
        out += basis @ flat[lo : lo + chunk]
    return out.reshape(omega.size, S, D)


def max_relative_error(actual, expected) -> float:
    """``max |actual - expected| / max |expected|`` (0 when both vanish)."""
    scale = float(np.abs(expected).max(initial=0.0))
    diff = float(np.abs(np.asarray(actual) - np.asarray(expected)).max(initial=0.0))
    if scale == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return diff / scale


def offline_segment_oracle(frames: Sequence[FrameFeature], theta_event: float = 0.4) -> tuple[int, ...]:
    """Steps at which a new episode starts, from one left-to-right pass."""
    boundaries = []
    prev = None
    for f in frames:
        cur = f.tokens.mean(axis=0)
        if prev is not None and _cos(prev, cur) < theta_event:
            boundaries.append(f.t)
        prev = cur
    return tuple(boundaries)


def topk_by_sort(tokens: np.ndarray, k: int) -> list[int]:
    """Reference top-k: sort every (norm, index) pair, biggest norm first."""
    norms = [float(np.sqrt(np.dot(row, row))) for row in tokens]
    ranked = sorted(range(len(norms)), key=lambda i: (-norms[i], i))
    return sorted(ranked[:k])


# ---------------------------------------------------------------- metrics


@dataclass(frozen=True)
class BoundaryScores:
    precision: float
    recall: float
    f1: float
    matched: int
    precision_undefined: bool = False
    recall_undefined: bool = False


def boundary_metrics(predicted: Iterable[int], truth: Iterable[int], tolerance: int = 0) -> BoundaryScores:
    """Precision/recall/F1 under one-to-one matching within ``tolerance``.

    Candidate pairs are matched greedily, closest first. With no predictions
    precision is reported as 1.0 (and flagged); likewise recall with no
    truth boundaries.
    """
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    pred, true = sorted(set(predicted)), sorted(set(truth))
    pairs = []
    for p in pred:
        lo = bisect.bisect_left(true, p - tolerance)
        hi = bisect.bisect_right(true, p + tolerance)
        pairs.extend((abs(p - t), p, t) for t in true[lo:hi])
    pairs.sort()
    used_p, used_t = set(), set()
    for _, p, t in pairs:
        if p not in used_p and t not in used_t:
            used_p.add(p)
            used_t.add(t)
    matched = len(used_p)
    precision = matched / len(pred) if pred else 1.0
    recall = matched / len(true) if true else 1.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return BoundaryScores(precision, recall, f1, matched, not pred, not true)


def _as_streams(frames_or_streams):
    if frames_or_streams and isinstance(frames_or_streams[0], FrameFeature):
        return [frames_or_streams]
    return list(frames_or_streams)


def reconstruction_errors(config: EngineConfig, frames: Sequence[FrameFeature], delta_ts: Sequence[int]) -> dict[int, float]:
    """Run an engine over one stream, then MSE of the reconstruction at
    ``last_evicted - dt`` against the true frame, for each ``dt``."""
    engine = Engine(config)
    engine.run(frames)
    bank = engine.bank
    if bank is None or bank.last_t is None:
        raise HistoryTooShortError("stream never overflowed the window")
    last = bank.last_t
    by_t = {f.t: f for f in frames}
    out = {}
    for dt in delta_ts:
        tau = last - dt
        if tau < bank.first_t:
            raise HistoryTooShortError(f"dt={dt} reaches before the first evicted frame")
        rec = reconstruct(bank, engine.residuals, tau)
        out[dt] = float(np.mean((rec.tokens - by_t[tau].tokens) ** 2))
    return out


def reconstruction_error_curve(config: EngineConfig, frames, delta_ts: Sequence[int]) -> list[tuple[int, float]]:
    """Mean reconstruction MSE per ``dt``, averaged over the given streams
    (a single stream is accepted too)."""
    streams = _as_streams(frames)
    per = [reconstruction_errors(config, s, delta_ts) for s in streams]
    return [(dt, float(np.mean([p[dt] for p in per]))) for dt in delta_ts]


# ---------------------------------------------------------------- latency


@dataclass(frozen=True)
class LatencyProfile:
    mfm_ops: np.ndarray
    stm_ops: np.ndarray
    merges: np.ndarray
    wall_ns: np.ndarray | None

    def median_wall_ratio(self, early: tuple[int, int], late: tuple[int, int]) -> float:
        if self.wall_ns is None:
            raise ValueError("profile was recorded without wall-clock timing")
        a = np.median(self.wall_ns[early[0] : early[1]])
        b = np.median(self.wall_ns[late[0] : late[1]])
        return float(b / a)


def latency_profile(
    config: EngineConfig | None = None,
    length: int = 100_000,
    S: int = 4,
    D: int = 8,
    seed: int = 0,
    wall_clock: bool = True,
) -> LatencyProfile:
    """Per-step cost of ``Engine.step`` over a random stream.

    Operation counters are exact; wall-clock times (nanoseconds) are noisy
    and should only be compared through medians.
    """
    if length < 2000:
        raise ValueError("latency profiles need at least 2000 steps")
    engine = Engine(config or EngineConfig())
    rng = np.random.default_rng(seed)
    mfm_ops = np.zeros(length, dtype=np.int64)
    stm_ops = np.zeros(length, dtype=np.int64)
    merges = np.zeros(length, dtype=np.int64)
    wall = np.zeros(length, dtype=np.int64) if wall_clock else None
    clock = time.perf_counter_ns
    block = 4096
    for lo in range(0, length, block):
        data = rng.uniform(-1.0, 1.0, size=(min(block, length - lo), S, D))
        for i, x in enumerate(data):
            t = lo + i
            frame = FrameFeature(t, x)
            if wall_clock:
                start = clock()
                report = engine.step(frame)
                wall[t] = clock() - start
            else:
                report = engine.step(frame)
            mfm_ops[t], stm_ops[t], merges[t] = report.mfm_ops, report.stm_ops, report.merges
    return LatencyProfile(mfm_ops, stm_ops, merges, wall)


# ---------------------------------------------------------------- sweeps

PARAM_ALIASES = {
    "window": "window_len",
    "window_len": "window_len",
    "gamma": "mfm.gamma",
    "bands": "mfm.K",
    "freq_min": "mfm.f_min",
    "freq_max": "mfm.f_max",
    "residual_ratio": "mfm.residual_ratio",
    "mfm_capacity": "mfm.residual_capacity",
    "stm_capacity": "stm.capacity",
    "theta_event": "stm.theta_event",
    "theta_merge": "stm.theta_merge",
    "rho_min": "stm.rho_min",
    "rho_max": "stm.rho_max",
}


def config_with(config: EngineConfig, param: str, value) -> EngineConfig:
    key = PARAM_ALIASES.get(param, param)
    updates = {key: value}
    if key == "mfm.residual_capacity":
        updates["mfm.slots"] = value
    return EngineConfig.from_flat(updates, base=config).validate()


def planted_streams(spec: SyntheticSpec, seeds: Sequence[int]):
    return [gen_synthetic_stream(spec, seed=s) for s in seeds]


def evaluate_segmentation(config: EngineConfig, frames, truth, tolerance: int = 0) -> BoundaryScores:
    """Boundary scores of the engine's episodic memory on one stream.

    Only frames that left the window reach the episodic memory, so truth
    boundaries after the last evicted step are not counted.
    """
    engine = Engine(config)
    engine.run(frames)
    last = engine.stm.last_t if engine.stm.last_t is not None else -1
    return boundary_metrics(engine.boundary_log, [b for b in truth if b <= last], tolerance)


def sweep(param: str, values: Sequence, streams, config: EngineConfig | None = None, seeds: Sequence[int] | None = None):
    """Rows ``{x, y, series, seed}`` of segmentation scores for each value
    of ``param`` on each ``(frames, truth)`` stream."""
    config = config or EngineConfig()
    seeds = list(seeds) if seeds is not None else list(range(len(streams)))
    rows = []
    for value in values:
        cfg = config_with(config, param, value)
        for seed, (frames, truth) in zip(seeds, streams):
            sc = evaluate_segmentation(cfg, frames, truth)
            for series, y in (("precision", sc.precision), ("recall", sc.recall), ("f1", sc.f1)):
                rows.append({"x": float(value), "y": float(y), "series": series, "seed": seed})
    return rows


def mean_by_x(rows, series: str = "f1") -> dict[float, float]:
    xs: dict[float, list[float]] = {}
    for r in rows:
        if r["series"] == series:
            xs.setdefault(r["x"], []).append(r["y"])
    return {x: float(np.mean(v)) for x, v in xs.items()}


def plateau(curve: dict[float, float], atol: float = 1e-12) -> list[float]:
    """Longest run of consecutive x values (sorted) sharing the maximum y."""
    xs = sorted(curve)
    best = max(curve.values())
    runs, run = [], []
    for x in xs:
        if curve[x] >= best - atol:
            run.append(x)
        else:
            if run:
                runs.append(run)
            run = []
    if run:
        runs.append(run)
    return max(runs, key=len)


def rows_to_csv(rows, fh=None) -> str:
    buf = fh or io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x", "y", "series", "seed"])
    for r in rows:
        writer.writerow([f"{r['x']:.12g}", f"{r['y']:.12g}", r["series"], r["seed"]])
    return buf.getvalue() if fh is None else ""


def with_stm(config: EngineConfig, **changes) -> EngineConfig:
    return dataclasses.replace(config, stm=dataclasses.replace(config.stm, **changes))
