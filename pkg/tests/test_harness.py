import numpy as np
import pytest

from freshmem import EngineConfig
from freshmem import harness as H
from freshmem.errors import HistoryTooShortError, MarginUnsatisfiableError
from freshmem.streamio import FrameFeature


def test_planted_stream_margins_hold():
    spec = H.SyntheticSpec()
    for seed in range(5):
        frames, truth = H.gen_synthetic_stream(spec, seed=seed)
        assert len(truth) == spec.episode_count - 1
        assert H.certify_margins(frames, truth, spec.min_adjacent_gap, spec.min_within_sim)
        assert 5 * 20 <= len(frames) <= 5 * 40


def test_planted_stream_is_seeded():
    a, ta = H.gen_synthetic_stream(H.SyntheticSpec(), seed=3)
    b, tb = H.gen_synthetic_stream(H.SyntheticSpec(), seed=3)
    assert ta == tb and a == b


def test_impossible_margins():
    with pytest.raises(MarginUnsatisfiableError):
        H.gen_synthetic_stream(H.SyntheticSpec(min_adjacent_gap=0.7, min_within_sim=0.6))


def test_offline_oracle_hand_case():
    vecs = [[1, 0], [1, 0.1], [0, 1], [0.1, 1], [-1, 0]]
    frames = [FrameFeature(t, np.array([v], dtype=float)) for t, v in enumerate(vecs)]
    assert H.offline_segment_oracle(frames, 0.4) == (2, 4)


def test_topk_oracle_ties():
    tokens = np.array([[1.0], [2.0], [2.0], [0.5]])
    assert H.topk_by_sort(tokens, 2) == [1, 2]
    assert H.topk_by_sort(tokens, 1) == [1]


@pytest.mark.parametrize(
    "pred, truth, tol, p, r",
    [
        ([10, 20], [10, 20], 0, 1.0, 1.0),
        ([11, 20], [10, 20], 0, 0.5, 0.5),
        ([11, 20], [10, 20], 1, 1.0, 1.0),
        ([10, 11], [10], 1, 0.5, 1.0),  # one-to-one matching
        ([], [5], 0, 1.0, 0.0),
    ],
)
def test_boundary_metrics(pred, truth, tol, p, r):
    sc = H.boundary_metrics(pred, truth, tol)
    assert (sc.precision, sc.recall) == (p, r)


def test_boundary_metrics_undefined_flags():
    sc = H.boundary_metrics([], [])
    assert sc.precision_undefined and sc.recall_undefined


def test_max_relative_error_is_normwise():
    assert H.max_relative_error(np.array([1.0, 10.0]), np.array([2.0, 10.0])) == 0.1
    assert H.max_relative_error(np.zeros(2), np.zeros(2)) == 0.0


def test_reconstruction_errors_too_short():
    frames = H.random_frames(20, 2, 2, seed=0)
    with pytest.raises(HistoryTooShortError):
        H.reconstruction_errors(EngineConfig(), frames, [100])


def test_latency_profile_op_counts():
    prof = H.latency_profile(EngineConfig(), length=2000, S=2, D=2, wall_clock=False)
    assert prof.wall_ns is None
    assert set(prof.mfm_ops[5:].tolist()) == {16 + 16 * 4 + 4}
    with pytest.raises(ValueError):
        H.latency_profile(length=100)


def test_sweep_rows_and_csv():
    streams = H.planted_streams(H.SyntheticSpec(), [0, 1])
    rows = H.sweep("theta_event", [0.4, 0.99], streams, seeds=[0, 1])
    assert len(rows) == 2 * 2 * 3
    f1 = H.mean_by_x(rows)
    assert f1[0.4] == 1.0 and f1[0.99] < 1.0
    text = H.rows_to_csv(rows)
    assert text.splitlines()[0] == "x,y,series,seed"


def test_plateau_picks_longest_top_run():
    curve = {0.0: 0.5, 0.1: 1.0, 0.2: 1.0, 0.3: 0.9, 0.4: 1.0}
    assert H.plateau(curve) == [0.1, 0.2]


def test_config_with_aliases():
    c = H.config_with(EngineConfig(), "mfm_capacity", 7)
    assert (c.mfm.residual_capacity, c.mfm.slots) == (7, 7)
    assert H.config_with(EngineConfig(), "window", 3).window_len == 3
