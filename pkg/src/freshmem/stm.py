"""Space thumbnail memory: online episodes under a fixed budget.

Evicted frames are mean-pooled over their tokens and compared with the
previous pooled vector. A cosine below ``theta_event`` closes the running
episode; the closed episode keeps a uniform-stride subsample of its frames
whose density falls with episode length. When more than ``capacity``
episodes are live, the most similar adjacent pair (by centroid cosine) is
merged, counts summed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BudgetError, InvalidConfigError, StepOrderError
from .streamio import FrameFeature

log = logging.getLogger(__name__)

OPENED = "opened"
EXTENDED = "extended"
CLOSED_AND_OPENED = "closed_and_opened"

RATE_CONSTANT = 4


def pool_frame(frame: FrameFeature) -> np.ndarray:
    """Token mean of a frame (bitwise equal to ``tokens.mean(axis=0)``)."""
    x = frame.tokens
    return np.add.reduce(x, axis=0) / x.shape[0]


def _cosine(a: np.ndarray, b: np.ndarray) -> float | None:
    """Cosine of two vectors, or ``None`` if either is zero."""
    na = math.sqrt(float(np.dot(a, a)))
    nb = math.sqrt(float(np.dot(b, b)))
    if na == 0.0 or nb == 0.0:
        return None
    return float(np.dot(a, b)) / (na * nb)


def boundary_score(prev: np.ndarray, cur: np.ndarray) -> float:
    """Cosine similarity of two pooled vectors; 0.0 if either is zero."""
    score = _cosine(cur, prev)
    if score is None:
        log.warning("zero pooled vector in boundary score; scoring as 0")
        return 0.0
    return score


def sampling_rate(N: int, rho_min: float = 1 / 16, rho_max: float = 1 / 4, c: float = RATE_CONSTANT) -> float:
    """Thumbnail density for an episode of ``N`` frames: ``clamp(c/N)``.

    Short episodes keep a quarter of their frames, long ones a sixteenth.
    """
    if N < 1:
        raise ValueError(f"episode length must be >= 1, got {N}")
    return min(max(c / N, rho_min), rho_max)


def thumbnail_count(N: int, rho: float) -> int:
    # round half up; Python's round() would send 2.5 to 2
    return max(1, math.floor(rho * N + 0.5))


def compress_episode(frames: Sequence[FrameFeature], rho: float, count: int | None = None) -> tuple[FrameFeature, ...]:
    """Uniform-stride subsample of ``frames``.

    ``count`` is the number of frames the rate applies to; it defaults to
    ``len(frames)`` and differs only when recompressing merged thumbnails,
    in which case the result is capped at ``len(frames)``.
    """
    L = len(frames)
    if L < 1:
        raise ValueError("cannot compress an empty episode")
    N = L if count is None else count
    m = min(thumbnail_count(N, rho), L)
    return tuple(frames[(i * L) // m] for i in range(m))


def centroid(vectors: Sequence[np.ndarray], weights: Sequence[float] | None = None) -> np.ndarray:
    """Weighted mean ``sum w_i v_i / sum w_i`` (plain mean without weights)."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.shape[0] < 1:
        raise ValueError("centroid needs at least one vector")
    if weights is None:
        return vectors.mean(axis=0)
    weights = np.asarray(weights, dtype=np.float64)
    if np.any(weights <= 0):
        raise ValueError("centroid weights must be positive")
    return (weights[:, None] * vectors).sum(axis=0) / weights.sum()


@dataclass(frozen=True, eq=False)
class Episode:
    start_t: int
    end_t: int
    count: int
    centroid: np.ndarray = field(repr=False)
    thumbnails: tuple[FrameFeature, ...] = field(repr=False)
    merged_from: int = 0

    def __post_init__(self):
        mu = np.array(self.centroid, dtype=np.float64, copy=True)
        mu.setflags(write=False)
        object.__setattr__(self, "centroid", mu)
        object.__setattr__(self, "thumbnails", tuple(self.thumbnails))

    def __eq__(self, other):
        if not isinstance(other, Episode):
            return NotImplemented
        return (
            (self.start_t, self.end_t, self.count, self.merged_from)
            == (other.start_t, other.end_t, other.count, other.merged_from)
            and np.array_equal(self.centroid, other.centroid)
            and self.thumbnails == other.thumbnails
        )

    __hash__ = None


def merge_episodes(a: Episode, b: Episode, rho_min=1 / 16, rho_max=1 / 4) -> Episode:
    N = a.count + b.count
    mu = (a.count * a.centroid + b.count * b.centroid) / N
    thumbs = compress_episode(a.thumbnails + b.thumbnails, sampling_rate(N, rho_min, rho_max), count=N)
    return Episode(
        start_t=a.start_t,
        end_t=b.end_t,
        count=N,
        centroid=mu,
        thumbnails=thumbs,
        merged_from=a.merged_from + b.merged_from + 1,
    )


def centroid_similarity(a: Episode, b: Episode) -> float:
    score = _cosine(a.centroid, b.centroid)
    return 0.0 if score is None else score


def adjacent_similarities(episodes: Sequence[Episode]) -> list[float]:
    """Centroid cosine of each adjacent pair (zero centroids score 0)."""
    return [centroid_similarity(a, b) for a, b in zip(episodes[:-1], episodes[1:])]


@dataclass(frozen=True)
class StmSegment:
    """One block of the episodic view: a closed episode's thumbnails, or
    the open episode's raw frames (``active=True``)."""

    start_t: int
    end_t: int
    count: int
    frames: tuple[FrameFeature, ...] = field(repr=False)
    merged_from: int = 0
    active: bool = False


class StmState:
    def __init__(
        self,
        capacity: int = 40,
        theta_event: float = 0.4,
        theta_merge: float = 0.3,
        rho_min: float = 1 / 16,
        rho_max: float = 1 / 4,
        fallback: str = "merge",
        context: str = "previous",
    ):
        if capacity < 1:
            raise InvalidConfigError("capacity", "must be positive")
        if fallback not in ("merge", "fifo"):
            raise InvalidConfigError("fallback", f"must be 'merge' or 'fifo', got {fallback!r}")
        if context not in ("previous", "running_mean"):
            raise InvalidConfigError("context", f"must be 'previous' or 'running_mean', got {context!r}")
        self.capacity = int(capacity)
        self.theta_event = float(theta_event)
        self.theta_merge = float(theta_merge)
        self.rho_min = float(rho_min)
        self.rho_max = float(rho_max)
        self.fallback = fallback
        self.context = context

        self.episodes: list[Episode] = []
        # _pair_sims[i] is the centroid cosine of episodes i and i+1
        self._pair_sims: list[float] = []
        self.active_frames: list[FrameFeature] = []
        self.active_pooled: list[np.ndarray] = []
        self.prev_pooled: np.ndarray | None = None
        self.boundary_log: list[int] = []
        self.ingested = 0
        self.dropped = 0
        self.zero_vector_warnings = 0
        self.last_t: int | None = None
        self.last_ops = 0
        self.last_merges = 0

    def restore_episodes(self, episodes: Sequence[Episode]):
        self.episodes = list(episodes)
        self._pair_sims = adjacent_similarities(self.episodes)

    def _reference(self) -> np.ndarray:
        if self.context == "running_mean":
            return centroid(self.active_pooled)
        return self.prev_pooled

    def ingest(self, frame: FrameFeature) -> str:
        if self.last_t is not None and frame.t <= self.last_t:
            raise StepOrderError(f"STM last ingested t={self.last_t}, got t={frame.t}")
        pooled = pool_frame(frame)
        self.last_ops = 1
        self.last_merges = 0
        if not self.active_frames:
            event = OPENED
        else:
            delta = _cosine(pooled, self._reference())
            if delta is None:
                self.zero_vector_warnings += 1
                delta = boundary_score(self._reference(), pooled)
            if delta < self.theta_event:
                self._close_active()
                self.boundary_log.append(frame.t)
                event = CLOSED_AND_OPENED
            else:
                event = EXTENDED
        self.active_frames.append(frame)
        self.active_pooled.append(pooled)
        self.prev_pooled = pooled
        self.last_t = frame.t
        self.ingested += 1
        return event

    def _close_active(self):
        frames = self.active_frames
        N = len(frames)
        ep = Episode(
            start_t=frames[0].t,
            end_t=frames[-1].t,
            count=N,
            centroid=centroid(self.active_pooled),
            thumbnails=compress_episode(frames, sampling_rate(N, self.rho_min, self.rho_max)),
        )
        if self.episodes:
            self._pair_sims.append(centroid_similarity(self.episodes[-1], ep))
            self.last_ops += 1
        self.episodes.append(ep)
        self.active_frames = []
        self.active_pooled = []
        if len(self.episodes) > self.capacity:
            self.consolidate()

    def consolidate(self) -> int:
        """Bring the episode count back to ``capacity``; returns merges done.

        The most similar adjacent pair is merged. If no pair clears
        ``theta_merge`` it is merged anyway (``fallback="merge"``) or the
        oldest episode is dropped (``fallback="fifo"``).
        """
        if len(self.episodes) <= self.capacity:
            raise BudgetError(f"{len(self.episodes)} episodes is within capacity {self.capacity}")
        merges = 0
        eps, sims = self.episodes, self._pair_sims
        while len(eps) > self.capacity:
            self.last_ops += len(sims)
            i = max(range(len(sims)), key=sims.__getitem__)
            if sims[i] <= self.theta_merge and self.fallback == "fifo":
                self.dropped += eps.pop(0).count
                sims.pop(0)
                continue
            merged = merge_episodes(eps[i], eps[i + 1], self.rho_min, self.rho_max)
            eps[i : i + 2] = [merged]
            fresh = []
            if i > 0:
                fresh.append(centroid_similarity(eps[i - 1], merged))
            if i + 1 < len(eps):
                fresh.append(centroid_similarity(merged, eps[i + 1]))
            sims[max(i - 1, 0) : i + 2] = fresh
            self.last_ops += len(fresh)
            merges += 1
        self.last_merges += merges
        return merges

    @property
    def frames_accounted(self) -> int:
        """Frames held in episodes or the open accumulator (plus any dropped
        by FIFO fallback); equals ``ingested`` at all times."""
        return sum(e.count for e in self.episodes) + len(self.active_frames) + self.dropped

    def view(self) -> tuple[StmSegment, ...]:
        segments = [
            StmSegment(e.start_t, e.end_t, e.count, e.thumbnails, e.merged_from)
            for e in self.episodes
        ]
        if self.active_frames:
            a = self.active_frames
            segments.append(StmSegment(a[0].t, a[-1].t, len(a), tuple(a), active=True))
        return tuple(segments)


def stm_memory_view(state: StmState) -> tuple[StmSegment, ...]:
    return state.view()


def view_frames(view: Sequence[StmSegment]) -> list[FrameFeature]:
    return [f for seg in view for f in seg.frames]
