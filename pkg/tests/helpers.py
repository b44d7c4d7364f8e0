import numpy as np

from freshmem.streamio import FrameFeature


def frames_of(*arrays, start=0):
    return [FrameFeature(start + i, np.asarray(a, dtype=float)) for i, a in enumerate(arrays)]
