"""Short-term memory: the most recent raw frames, oldest first."""

from __future__ import annotations

from collections import deque

from .errors import StepOrderError
from .streamio import FrameFeature


class SlidingWindow:
    """Fixed-capacity FIFO of frames with consecutive step indices.

    ``push`` returns the frame that fell out of the window, if any; the
    engine forwards it to the long-term memories.
    """

    def __init__(self, capacity: int = 5):
        if capacity < 1:
            raise ValueError(f"window capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self._frames: deque[FrameFeature] = deque()
        self.evictions = 0

    def __len__(self):
        return len(self._frames)

    @property
    def last_t(self) -> int | None:
        return self._frames[-1].t if self._frames else None

    def push(self, frame: FrameFeature) -> FrameFeature | None:
        last = self.last_t
        if last is not None and frame.t != last + 1:
            raise StepOrderError(f"window expected t={last + 1}, got t={frame.t}")
        self._frames.append(frame)
        if len(self._frames) > self.capacity:
            self.evictions += 1
            return self._frames.popleft()
        return None

    def contents(self) -> tuple[FrameFeature, ...]:
        # frames are immutable, so a tuple is a safe snapshot
        return tuple(self._frames)

    def restore(self, frames, evictions: int = 0):
        self._frames = deque()
        for frame in frames:
            self.push(frame)
        self.evictions = evictions
