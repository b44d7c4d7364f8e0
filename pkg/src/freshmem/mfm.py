"""Multi-scale frequency memory.

Frames that leave the sliding window are folded into a bank of
exponentially decayed DFT coefficients, one complex ``S x D`` slab per
frequency band::

    C[k] <- gamma * C[k] + x_t * exp(-1j * omega[k] * t)

Each update costs ``K * S * D`` multiply-adds whatever ``t`` is. The bank
forgets smoothly: a frame evicted ``n`` updates ago weighs ``gamma**n``.

Alongside the bank, the highest-norm tokens of every evicted frame are kept
verbatim in a small circular buffer. Reconstruction at a past step evaluates
the inverse transform of the bank and pastes any stored tokens for that step
on top.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyBankError,
    InvalidRangeError,
    ShapeMismatchError,
    StepOrderError,
    TauOutOfRangeError,
)
from .streamio import FrameFeature

TWO_PI = 2.0 * np.pi


def make_band_frequencies(K: int = 16, f_min: float = 0.01, f_max: float = 0.5) -> np.ndarray:
    """Angular frequencies (rad/step) for ``K`` geometrically spaced bands.

    Band frequencies in cycles/step run from ``f_min`` to ``f_max`` inclusive
    with a constant ratio between neighbours; ``K=1`` gives ``f_min`` alone.
    """
    if K < 1:
        raise InvalidRangeError(f"band count must be >= 1, got {K}")
    if not (0.0 < f_min < f_max <= 0.5):
        raise InvalidRangeError(f"need 0 < f_min < f_max <= 0.5, got f_min={f_min}, f_max={f_max}")
    if K == 1:
        return np.array([TWO_PI * f_min])
    return TWO_PI * np.geomspace(f_min, f_max, K)


def reduced_phase(omega: np.ndarray, t: int) -> np.ndarray:
    # keeps trig arguments in [0, 2pi) so large t does not eat precision
    return np.mod(omega * t, TWO_PI)


class FrequencyBank:
    """Decayed DFT coefficients of every frame assimilated so far.

    Parameters
    ----------
    S, D : int
        Frame shape.
    omega : array of float
        Band angular frequencies, strictly increasing.
    gamma : float
        Per-update decay in the open interval (0, 1).
    """

    def __init__(self, S: int, D: int, omega, gamma: float = 0.9):
        omega = np.asarray(omega, dtype=np.float64)
        if omega.ndim != 1 or omega.size < 1:
            raise InvalidRangeError("omega must be a non-empty 1-D array")
        if np.any(np.diff(omega) <= 0):
            raise InvalidRangeError("omega must be strictly increasing")
        if not (0.0 < gamma < 1.0):
            raise InvalidRangeError(f"gamma must lie in (0, 1), got {gamma}")
        self.S, self.D = int(S), int(D)
        self.omega = omega
        self.omega.setflags(write=False)
        self.gamma = float(gamma)
        self.coeff = np.zeros((omega.size, self.S, self.D), dtype=np.complex128)
        self._term = np.empty_like(self.coeff)
        self.first_t: int | None = None
        self.last_t: int | None = None
        self.updates = 0
        self.last_update_ops = 0
        self.max_abs_seen = 0.0

    @classmethod
    def from_bands(cls, S, D, K=16, f_min=0.01, f_max=0.5, gamma=0.9):
        return cls(S, D, make_band_frequencies(K, f_min, f_max), gamma)

    @property
    def K(self) -> int:
        return self.omega.size

    def update_ops(self) -> int:
        """Multiply-adds performed by one update: K phases plus K*S*D MACs."""
        return self.K + self.coeff.size

    def update(self, frame: FrameFeature):
        x = frame.tokens
        if x.shape != (self.S, self.D):
            raise ShapeMismatchError(f"frame shape {x.shape} does not match bank ({self.S}, {self.D})")
        if self.last_t is not None and frame.t <= self.last_t:
            raise StepOrderError(f"bank last updated at t={self.last_t}, got t={frame.t}")
        rot = np.exp(reduced_phase(self.omega, frame.t) * -1j)
        np.multiply(rot.reshape(-1, 1, 1), x, out=self._term)
        coeff = self.coeff
        coeff *= self.gamma
        coeff += self._term
        if self.first_t is None:
            self.first_t = frame.t
        self.last_t = frame.t
        self.updates += 1
        self.last_update_ops = self.update_ops()
        peak = float(np.abs(x).max())
        if peak > self.max_abs_seen:
            self.max_abs_seen = peak

    def snapshot(self) -> FrequencyBank:
        """Read-only copy, safe to hand to another thread."""
        snap = object.__new__(FrequencyBank)
        snap.__dict__.update(self.__dict__)
        snap.coeff = self.coeff.copy()
        snap._term = np.empty_like(snap.coeff)
        snap.coeff.setflags(write=False)
        return snap


def update_coefficients(bank: FrequencyBank, frame: FrameFeature):
    bank.update(frame)


@dataclass(frozen=True, eq=False)
class ResidualEntry:
    """Salient tokens of one frame: spatial ``indices`` (ascending), the
    tokens themselves and their L2 norms."""

    t: int
    indices: np.ndarray
    tokens: np.ndarray = field(repr=False)
    norms: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("indices", "tokens", "norms"):
            arr = np.array(getattr(self, name), copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __eq__(self, other):
        if not isinstance(other, ResidualEntry):
            return NotImplemented
        return (
            self.t == other.t
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.tokens, other.tokens)
            and np.array_equal(self.norms, other.norms)
        )

    __hash__ = None


def residual_count(S: int, ratio: float) -> int:
    # 0.1 * 30 == 3.0000000000000004 must still give 3
    return max(1, math.ceil(ratio * S - 1e-9))


def select_residual(frame: FrameFeature, ratio: float = 0.10) -> ResidualEntry:
    """Keep the ``ceil(ratio * S)`` tokens of ``frame`` with the largest L2
    norm. Equal norms go to the lower spatial index."""
    if not (0.0 < ratio <= 1.0):
        raise InvalidRangeError(f"residual ratio must lie in (0, 1], got {ratio}")
    tokens = frame.tokens
    S = tokens.shape[0]
    norms = np.sqrt(np.einsum("ij,ij->i", tokens, tokens))
    n_keep = residual_count(S, ratio)
    if n_keep == 1:
        # argmax returns the first maximum, i.e. the lowest index on ties
        keep = np.array([int(np.argmax(norms))])
    else:
        keep = np.sort(np.argsort(-norms, kind="stable")[:n_keep])
    return ResidualEntry(t=frame.t, indices=keep, tokens=tokens[keep], norms=norms[keep])


class ResidualBuffer:
    """Circular store of residual entries; the oldest entry is overwritten
    once ``capacity`` is reached."""

    def __init__(self, capacity: int = 15):
        if capacity < 1:
            raise ValueError(f"residual capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self._entries: deque[ResidualEntry] = deque()
        self._by_t: dict[int, ResidualEntry] = {}

    def __len__(self):
        return len(self._entries)

    def store(self, entry: ResidualEntry) -> ResidualEntry | None:
        if self._entries and entry.t <= self._entries[-1].t:
            raise StepOrderError(f"residual for t={entry.t} is not newer than t={self._entries[-1].t}")
        self._entries.append(entry)
        self._by_t[entry.t] = entry
        if len(self._entries) > self.capacity:
            old = self._entries.popleft()
            del self._by_t[old.t]
            return old
        return None

    def get(self, t: int) -> ResidualEntry | None:
        return self._by_t.get(t)

    def entries(self) -> tuple[ResidualEntry, ...]:
        return tuple(self._entries)

    def steps(self) -> list[int]:
        return [e.t for e in self._entries]

    def snapshot(self) -> ResidualBuffer:
        snap = ResidualBuffer(self.capacity)
        snap._entries = deque(self._entries)
        snap._by_t = dict(self._by_t)
        return snap


def store_residual(buffer: ResidualBuffer, entry: ResidualEntry) -> ResidualEntry | None:
    return buffer.store(entry)


@dataclass(frozen=True, eq=False)
class ReconstructedFrame:
    tau: int
    tokens: np.ndarray = field(repr=False)
    residual_applied: int | None = None

    def __eq__(self, other):
        if not isinstance(other, ReconstructedFrame):
            return NotImplemented
        return (
            self.tau == other.tau
            and self.residual_applied == other.residual_applied
            and np.array_equal(self.tokens, other.tokens)
        )

    __hash__ = None


def reconstruct(bank: FrequencyBank, buffer: ResidualBuffer | None, tau: int) -> ReconstructedFrame:
    """Gist of step ``tau``: ``Re(sum_k C[k] exp(+1j omega_k tau)) / K``,
    with the stored residual tokens for ``tau`` (if any) written over it."""
    if bank.last_t is None:
        raise EmptyBankError("frequency bank has not assimilated any frame")
    if not (0 <= tau <= bank.last_t):
        raise TauOutOfRangeError(f"tau={tau} outside [0, {bank.last_t}]")
    rot = np.exp(1j * reduced_phase(bank.omega, tau))
    tokens = np.real(np.tensordot(rot, bank.coeff, axes=(0, 0))) / bank.K
    applied = None
    entry = buffer.get(tau) if buffer is not None else None
    if entry is not None:
        tokens[entry.indices] = entry.tokens
        applied = tau
    tokens.setflags(write=False)
    return ReconstructedFrame(tau=int(tau), tokens=tokens, residual_applied=applied)


def memory_steps(bank: FrequencyBank, buffer: ResidualBuffer | None, slots: int) -> list[int]:
    """Query steps used by :func:`mfm_memory_view`, ascending.

    Residual steps come first (newest first) up to ``slots``; any remaining
    slots are filled with steps whose distance from the newest step is
    log-spaced, so recent history is sampled densely and distant history
    sparsely.
    """
    if slots < 1:
        raise ValueError(f"slots must be positive, got {slots}")
    if bank.last_t is None:
        raise EmptyBankError("frequency bank has not assimilated any frame")
    lo, hi = bank.first_t, bank.last_t
    history = hi - lo + 1
    target = min(slots, history)

    chosen: list[int] = []
    seen: set[int] = set()
    residual_steps = sorted(buffer.steps(), reverse=True) if buffer is not None else []
    for t in residual_steps:
        if len(chosen) == target:
            break
        if lo <= t <= hi and t not in seen:
            chosen.append(t)
            seen.add(t)

    need = target - len(chosen)
    if need > 0:
        lags = np.rint(np.geomspace(1, history, need)).astype(np.int64) - 1
        for lag in lags:
            t = int(hi - lag)
            if t not in seen and len(chosen) < target:
                chosen.append(t)
                seen.add(t)
        t = hi
        while len(chosen) < target:
            if t not in seen:
                chosen.append(t)
                seen.add(t)
            t -= 1
    return sorted(chosen)


def mfm_memory_view(bank: FrequencyBank, buffer: ResidualBuffer | None, slots: int = 15) -> tuple[ReconstructedFrame, ...]:
    return tuple(reconstruct(bank, buffer, tau) for tau in memory_steps(bank, buffer, slots))
