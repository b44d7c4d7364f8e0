import numpy as np
import pytest

from freshmem.errors import StepOrderError
from freshmem.window import SlidingWindow

from helpers import frames_of


def test_fifo_eviction_order():
    w = SlidingWindow(capacity=3)
    frames = frames_of(*[np.full((1, 1), t) for t in range(5)])
    evicted = [w.push(f) for f in frames]
    assert evicted[:3] == [None, None, None]
    assert [e.t for e in evicted[3:]] == [0, 1]
    assert [f.t for f in w.contents()] == [2, 3, 4]
    assert w.evictions == 2 and len(w) == 3


def test_length_never_exceeds_capacity():
    w = SlidingWindow(capacity=5)
    for f in frames_of(*[np.zeros((2, 2))] * 20):
        w.push(f)
        assert len(w) <= 5


def test_gap_in_steps_rejected():
    w = SlidingWindow(capacity=2)
    a, b, c = frames_of(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)))
    w.push(a)
    with pytest.raises(StepOrderError):
        w.push(c)


def test_contents_is_a_snapshot():
    w = SlidingWindow(capacity=2)
    frames = frames_of(np.zeros((1, 1)), np.ones((1, 1)), np.ones((1, 1)))
    w.push(frames[0])
    snap = w.contents()
    w.push(frames[1])
    w.push(frames[2])
    assert [f.t for f in snap] == [0]


def test_capacity_must_be_positive():
    with pytest.raises(ValueError):
        SlidingWindow(0)
