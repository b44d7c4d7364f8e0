"""The hybrid memory engine.

Each incoming frame enters the sliding window. A frame pushed out of the
window is folded into the frequency memory (coefficients, then residual
tokens) and then handed to the episodic memory. ``snapshot()`` assembles
the three memories in the fixed order frequency, episodic, short-term.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .config import EngineConfig
from .errors import ShapeMismatchError
from .mfm import (
    FrequencyBank,
    ReconstructedFrame,
    ResidualBuffer,
    make_band_frequencies,
    mfm_memory_view,
    select_residual,
)
from .stm import StmSegment, StmState, view_frames
from .streamio import FrameFeature
from .window import SlidingWindow

SECTION_ORDER = ("mfm", "stm", "short")


@dataclass(frozen=True)
class StepReport:
    t: int
    evicted: bool
    stm_event: str | None = None
    merges: int = 0
    mfm_ops: int = 0
    stm_ops: int = 0


@dataclass(frozen=True, eq=False)
class MemorySnapshot:
    step: int
    m_mfm: tuple[ReconstructedFrame, ...] = field(repr=False)
    m_stm: tuple[StmSegment, ...] = field(repr=False)
    m_short: tuple[FrameFeature, ...] = field(repr=False)
    config_fingerprint: str = ""
    ordering: tuple[str, ...] = SECTION_ORDER

    def sections(self):
        """``(source, step, tokens)`` for every frame, in output order."""
        for r in self.m_mfm:
            yield "mfm", r.tau, r.tokens
        for f in view_frames(self.m_stm):
            yield "stm", f.t, f.tokens
        for f in self.m_short:
            yield "short", f.t, f.tokens

    @property
    def frame_count(self) -> int:
        return len(self.m_mfm) + len(view_frames(self.m_stm)) + len(self.m_short)

    def tokens(self) -> np.ndarray:
        """All memory tokens concatenated: ``(frame_count * S, D)``."""
        blocks = [tokens for _, _, tokens in self.sections()]
        if not blocks:
            return np.empty((0, 0))
        return np.concatenate(blocks, axis=0)

    def digest(self) -> str:
        """Hash of every step index, flag and token bit in the snapshot."""
        h = hashlib.sha256()
        h.update(f"{self.step}|{self.config_fingerprint}|".encode())
        for r in self.m_mfm:
            h.update(f"mfm:{r.tau}:{r.residual_applied}|".encode())
            h.update(np.ascontiguousarray(r.tokens, dtype="<f8").tobytes())
        for seg in self.m_stm:
            h.update(f"seg:{seg.start_t}:{seg.end_t}:{seg.count}:{seg.merged_from}:{seg.active}|".encode())
            for f in seg.frames:
                h.update(f"stm:{f.t}|".encode())
                h.update(np.ascontiguousarray(f.tokens, dtype="<f8").tobytes())
        for f in self.m_short:
            h.update(f"short:{f.t}|".encode())
            h.update(np.ascontiguousarray(f.tokens, dtype="<f8").tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, MemorySnapshot):
            return NotImplemented
        return self.digest() == other.digest()

    __hash__ = None

    def to_dict(self, inline_tokens: bool = True) -> dict:
        """JSON-ready form. Without ``inline_tokens`` each frame carries an
        ``index`` into the token sidecar (see ``freshmem snapshot --sidecar``)."""
        out: dict = {
            "step": self.step,
            "config_fingerprint": self.config_fingerprint,
            "ordering": list(self.ordering),
            "sections": {name: [] for name in SECTION_ORDER},
        }
        index = 0
        for r in self.m_mfm:
            out["sections"]["mfm"].append(
                _frame_entry("mfm", {"tau": r.tau, "residual_applied": r.residual_applied}, r.tokens, inline_tokens, index)
            )
            index += 1
        for ep_index, seg in enumerate(self.m_stm):
            for f in seg.frames:
                extra = {"t": f.t, "episode": ep_index, "active": seg.active}
                out["sections"]["stm"].append(_frame_entry("stm", extra, f.tokens, inline_tokens, index))
                index += 1
        for f in self.m_short:
            out["sections"]["short"].append(_frame_entry("short", {"t": f.t}, f.tokens, inline_tokens, index))
            index += 1
        out["episodes"] = [
            {
                "start_t": seg.start_t,
                "end_t": seg.end_t,
                "count": seg.count,
                "merged_from": seg.merged_from,
                "active": seg.active,
                "thumbnail_t": [f.t for f in seg.frames],
            }
            for seg in self.m_stm
        ]
        return out


def _frame_entry(source, extra, tokens, inline, index):
    entry = {"source": source, **extra}
    if inline:
        entry["tokens"] = tokens.tolist()
    else:
        entry["index"] = index
    return entry


class Engine:
    """Streaming hybrid memory over frames of a fixed ``S x D`` shape.

    If the config carries no shape, it is fixed by the first frame.
    """

    def __init__(self, config: EngineConfig | None = None):
        self.config = (config or EngineConfig()).validate()
        m, s = self.config.mfm, self.config.stm
        self.window = SlidingWindow(self.config.window_len)
        self.omega = make_band_frequencies(m.K, m.f_min, m.f_max)
        self.residuals = ResidualBuffer(m.residual_capacity)
        self.stm = StmState(
            capacity=s.capacity,
            theta_event=s.theta_event,
            theta_merge=s.theta_merge,
            rho_min=s.rho_min,
            rho_max=s.rho_max,
            fallback=s.fallback,
            context=s.context,
        )
        self.bank: FrequencyBank | None = None
        self.step_count = 0
        if self.config.S is not None and self.config.D is not None:
            self._allocate(self.config.S, self.config.D)

    def _allocate(self, S, D):
        self.bank = FrequencyBank(S, D, self.omega, self.config.mfm.gamma)

    def bind_shape(self, S: int, D: int):
        """Fix the frame shape up front (e.g. from a stream header)."""
        if self.bank is None:
            self.config = self.config.with_shape(S, D)
            self._allocate(S, D)
        elif (S, D) != self.shape:
            raise ShapeMismatchError(f"stream shape ({S}, {D}) does not match engine {self.shape}")

    @property
    def shape(self) -> tuple[int, int] | None:
        return None if self.bank is None else (self.bank.S, self.bank.D)

    def step(self, frame: FrameFeature) -> StepReport:
        if self.bank is None:
            self.bind_shape(*frame.shape)
        elif frame.shape != self.shape:
            raise ShapeMismatchError(f"frame t={frame.t} has shape {frame.shape}, engine expects {self.shape}")
        evicted = self.window.push(frame)
        self.step_count += 1
        if evicted is None:
            return StepReport(t=frame.t, evicted=False)
        self.assimilate_frequency(evicted)
        event = self.stm.ingest(evicted)
        return StepReport(
            t=frame.t,
            evicted=True,
            stm_event=event,
            merges=self.stm.last_merges,
            mfm_ops=self.bank.last_update_ops + evicted.tokens.size,
            stm_ops=self.stm.last_ops,
        )

    def assimilate_frequency(self, frame: FrameFeature):
        self.bank.update(frame)
        self.residuals.store(select_residual(frame, self.config.mfm.residual_ratio))

    def run(self, frames) -> list[StepReport]:
        return [self.step(f) for f in frames]

    def snapshot(self) -> MemorySnapshot:
        if self.bank is not None and self.bank.last_t is not None:
            m_mfm = mfm_memory_view(self.bank.snapshot(), self.residuals.snapshot(), self.config.mfm.slots)
        else:
            m_mfm = ()
        return MemorySnapshot(
            step=self.step_count,
            m_mfm=m_mfm,
            m_stm=self.stm.view(),
            m_short=self.window.contents(),
            config_fingerprint=self.config.fingerprint(),
        )

    @property
    def boundary_log(self) -> list[int]:
        return list(self.stm.boundary_log)

    def export_state(self, path):
        from .state import export_state

        export_state(self, path)

    @classmethod
    def import_state(cls, path, config: EngineConfig | None = None) -> Engine:
        from .state import import_state

        return import_state(path, config)


def new_engine(config: EngineConfig | None = None) -> Engine:
    return Engine(config)
