"""Episodic memory on a stream with planted scene changes.

Frames are mean-pooled; a cosine below 0.4 against the previous frame
starts a new episode. Closed episodes keep a handful of thumbnail frames.
With a tight episode budget, the most similar neighbouring episodes are
merged and their frame counts summed.
"""

from freshmem import Engine, EngineConfig
from freshmem import harness as H

spec = H.SyntheticSpec(episode_count=8)
frames, truth = H.gen_synthetic_stream(spec, seed=11)
print(f"{len(frames)} frames, planted boundaries at {list(truth)}")

engine = Engine(EngineConfig())
engine.run(frames)
print("detected boundaries:         ", engine.boundary_log)
visible = [b for b in truth if b <= engine.stm.last_t]
print("scores:", H.boundary_metrics(engine.boundary_log, visible, tolerance=0))

print("\nepisode       frames  thumbnails at")
for seg in engine.stm.view():
    tag = " (open)" if seg.active else ""
    print(f"{seg.start_t:>4}-{seg.end_t:<4}  {seg.count:>8}  {[f.t for f in seg.frames]}{tag}")

# same stream, room for only three episodes
tight = Engine(H.with_stm(EngineConfig(), capacity=3))
tight.run(frames)
print("\nwith capacity 3:")
for ep in tight.stm.episodes:
    n = ep.merged_from + 1
    print(f"  steps {ep.start_t}-{ep.end_t}: {ep.count} frames from {n} episode{'s' if n > 1 else ''}")
print("frames accounted for:", tight.stm.frames_accounted, "of", tight.stm.ingested)
