"""Bounded-memory streaming summarization of frame-feature sequences.

Three memories are kept side by side: a short window of raw frames, a
decayed frequency-domain summary of everything that left the window (with
the most salient tokens kept verbatim), and a budgeted store of episodic
thumbnails.

>>> from freshmem import Engine, EngineConfig
>>> from freshmem.harness import random_frames
>>> engine = Engine(EngineConfig())
>>> reports = engine.run(random_frames(50, S=4, D=8, seed=0))
>>> snap = engine.snapshot()
>>> [len(snap.m_short), len(snap.m_mfm)]
[5, 15]
"""

from .config import EngineConfig, MfmConfig, StmConfig, load_config
from .engine import Engine, MemorySnapshot, StepReport, new_engine
from .mfm import (
    FrequencyBank,
    ReconstructedFrame,
    ResidualBuffer,
    ResidualEntry,
    make_band_frequencies,
    mfm_memory_view,
    reconstruct,
    select_residual,
    store_residual,
    update_coefficients,
)
from .state import export_state, import_state
from .stm import (
    Episode,
    StmState,
    boundary_score,
    centroid,
    compress_episode,
    pool_frame,
    sampling_rate,
    stm_memory_view,
)
from .streamio import FrameFeature, StreamHeader, open_stream, read_all, write_stream
from .window import SlidingWindow

__version__ = "0.1.0"

__all__ = [
    "Engine",
    "EngineConfig",
    "Episode",
    "FrameFeature",
    "FrequencyBank",
    "MemorySnapshot",
    "MfmConfig",
    "ReconstructedFrame",
    "ResidualBuffer",
    "ResidualEntry",
    "SlidingWindow",
    "StepReport",
    "StmConfig",
    "StmState",
    "StreamHeader",
    "boundary_score",
    "centroid",
    "compress_episode",
    "export_state",
    "import_state",
    "load_config",
    "make_band_frequencies",
    "mfm_memory_view",
    "new_engine",
    "open_stream",
    "pool_frame",
    "read_all",
    "reconstruct",
    "sampling_rate",
    "select_residual",
    "stm_memory_view",
    "store_residual",
    "update_coefficients",
    "write_stream",
]
