"""Run the full engine, pause it to disk, and carry on elsewhere.

The resumed engine ends in exactly the same state as one that never
stopped; snapshot digests cover every token bit.
"""

import os
import tempfile

from freshmem import Engine, EngineConfig
from freshmem import harness as H

config = EngineConfig()
frames = H.correlated_frames(4000, 4, 8, seed=3)

whole = Engine(config)
whole.run(frames)
snap = whole.snapshot()
print("snapshot sections:", snap.ordering)
print("frames per section:", len(snap.m_mfm), sum(len(s.frames) for s in snap.m_stm), len(snap.m_short))
print("memory tokens:", snap.tokens().shape, "for", whole.step_count, "frames seen")

first = Engine(config)
first.run(frames[:2500])
path = os.path.join(tempfile.mkdtemp(), "paused.fmst")
first.export_state(path)
print(f"\nstate file after 2500 steps: {os.path.getsize(path)} bytes")

resumed = Engine.import_state(path, config=config)
resumed.run(frames[2500:])
print("digest, uninterrupted:", whole.snapshot().digest()[:24])
print("digest, resumed:      ", resumed.snapshot().digest()[:24])
