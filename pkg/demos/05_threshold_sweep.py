"""How sensitive is segmentation to the boundary threshold?

Sweep theta_event over planted streams and average boundary F1. A wide
flat top around the default 0.4 means the choice is not delicate; the
extremes fail in opposite ways (0 never splits, 0.99 splits everywhere).
"""

from freshmem import harness as H

streams = H.planted_streams(H.SyntheticSpec(), range(10))
values = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99]
rows = H.sweep("theta_event", values, streams)

p, r, f1 = (H.mean_by_x(rows, s) for s in ("precision", "recall", "f1"))
print("theta   precision  recall   F1")
for x in values:
    print(f"{x:5.2f}   {p[x]:9.3f}  {r[x]:6.3f}  {f1[x]:5.3f}  {'#' * round(20 * f1[x])}")
top = H.plateau(f1)
print(f"\nplateau: {top[0]} .. {top[-1]}")
