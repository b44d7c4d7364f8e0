import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freshmem import harness as H
from freshmem.errors import BudgetError, InvalidConfigError, StepOrderError
from freshmem.stm import (
    CLOSED_AND_OPENED,
    EXTENDED,
    OPENED,
    Episode,
    StmState,
    adjacent_similarities,
    boundary_score,
    centroid,
    compress_episode,
    merge_episodes,
    pool_frame,
    sampling_rate,
    thumbnail_count,
)
from freshmem.streamio import FrameFeature

from helpers import frames_of

E1, E2, E3 = np.eye(3)


def frame_with_mean(t, vec, S=2):
    # tokens whose mean is exactly vec
    vec = np.asarray(vec, dtype=float)
    return FrameFeature(t, np.stack([vec + 1.0, vec - 1.0] if S == 2 else [vec] * S))


def episode(start, end, mu, thumbs=None):
    thumbs = thumbs or [FrameFeature(start, np.asarray([mu], dtype=float))]
    return Episode(start, end, end - start + 1, np.asarray(mu, dtype=float), thumbs)


# ---------------------------------------------------------------- scoring


def test_pool_is_token_mean():
    f = FrameFeature(0, np.array([[1.0, 2.0], [3.0, 6.0]]))
    assert pool_frame(f).tolist() == [2.0, 4.0]


def test_boundary_score_values():
    assert boundary_score(E1, E1 * 3) == pytest.approx(1.0)
    assert boundary_score(E1, E2) == 0.0
    assert boundary_score(E1, -E1) == pytest.approx(-1.0)
    assert boundary_score(np.array([1.0, 1.0, 0.0]), E1) == pytest.approx(1 / np.sqrt(2))


def test_zero_vector_scores_zero_with_warning(caplog):
    with caplog.at_level(logging.WARNING, logger="freshmem.stm"):
        assert boundary_score(np.zeros(3), E1) == 0.0
    assert "zero pooled vector" in caplog.text


# ---------------------------------------------------------------- compression


@pytest.mark.parametrize("N, rho", [(1, 0.25), (8, 0.25), (16, 0.25), (32, 0.125), (64, 0.0625), (1000, 0.0625)])
def test_sampling_rate_clamps(N, rho):
    assert sampling_rate(N) == rho


@pytest.mark.parametrize("N, rho, m", [(1, 0.25, 1), (6, 0.25, 2), (10, 0.25, 3), (100, 0.0625, 6), (40, 0.0625, 3)])
def test_thumbnail_count_rounds_half_up(N, rho, m):
    assert thumbnail_count(N, rho) == m


def test_compress_uniform_stride():
    frames = frames_of(*[np.full((1, 1), t) for t in range(10)])
    thumbs = compress_episode(frames, 0.25)
    assert [f.t for f in thumbs] == [0, 3, 6]


def test_compress_capped_by_available_frames():
    frames = frames_of(np.zeros((1, 1)), np.ones((1, 1)))
    assert len(compress_episode(frames, 0.25, count=100)) == 2


def test_centroid_weighted_and_plain():
    assert centroid([E1, E2]).tolist() == [0.5, 0.5, 0.0]
    assert centroid([E1, E2], weights=[3, 1]).tolist() == [0.75, 0.25, 0.0]
    with pytest.raises(ValueError):
        centroid([E1], weights=[0])


def test_merge_is_count_weighted_and_conserves_frames():
    a = Episode(0, 1, 2, [1.0, 0.0], [FrameFeature(0, [[1.0, 0.0]])])
    b = Episode(2, 7, 6, [0.0, 1.0], [FrameFeature(2, [[0.0, 1.0]]), FrameFeature(5, [[0.0, 1.0]])])
    m = merge_episodes(a, b)
    assert (m.start_t, m.end_t, m.count, m.merged_from) == (0, 7, 8, 1)
    assert m.centroid.tolist() == [0.25, 0.75]
    # 8 frames at rate 1/4 -> 2 thumbnails from the 3 available, stride 3/2
    assert [f.t for f in m.thumbnails] == [0, 2]


# ---------------------------------------------------------------- online state


def test_event_sequence_and_boundary_log():
    stm = StmState()
    vecs = [E1, E1, E2, E2 + 0.1 * E1, E3]
    events = [stm.ingest(frame_with_mean(t, v)) for t, v in enumerate(vecs)]
    assert events == [OPENED, EXTENDED, CLOSED_AND_OPENED, EXTENDED, CLOSED_AND_OPENED]
    assert stm.boundary_log == [2, 4]
    assert [(e.start_t, e.end_t, e.count) for e in stm.episodes] == [(0, 1, 2), (2, 3, 2)]
    assert len(stm.active_frames) == 1


def test_threshold_is_strict():
    # cosine exactly 0.5 with theta 0.5 does not split
    stm = StmState(theta_event=0.5)
    stm.ingest(frame_with_mean(0, [1.0, 0.0]))
    stm.ingest(frame_with_mean(1, [0.5, np.sqrt(3) / 2]))
    assert stm.boundary_log == []


def test_rejects_out_of_order():
    stm = StmState()
    stm.ingest(frame_with_mean(3, E1))
    with pytest.raises(StepOrderError):
        stm.ingest(frame_with_mean(3, E1))


def test_zero_vector_counts_as_boundary():
    stm = StmState()
    stm.ingest(frame_with_mean(0, E1))
    stm.ingest(FrameFeature(1, np.zeros((2, 3))))
    assert stm.boundary_log == [1] and stm.zero_vector_warnings == 1


def test_consolidation_merges_most_similar_adjacent_pair():
    stm = StmState(capacity=2)
    # centroids: E1, E2, ~E2, E3 ; pair (1, 2) is the most similar
    stm.restore_episodes([
        episode(0, 0, E1),
        episode(1, 1, E2),
        episode(2, 3, E2 + 0.2 * E3),
    ])
    stm._pair_sims = adjacent_similarities(stm.episodes)
    assert stm.consolidate() == 1
    assert [(e.start_t, e.end_t, e.count) for e in stm.episodes] == [(0, 0, 1), (1, 3, 3)]
    assert stm._pair_sims == pytest.approx(adjacent_similarities(stm.episodes))


def test_consolidation_fallback_merges_below_threshold():
    stm = StmState(capacity=1, theta_merge=0.9)
    stm.restore_episodes([episode(0, 0, E1), episode(1, 1, E2)])
    stm.consolidate()
    assert len(stm.episodes) == 1 and stm.episodes[0].count == 2


def test_fifo_fallback_drops_oldest():
    stm = StmState(capacity=1, theta_merge=0.9, fallback="fifo")
    stm.restore_episodes([episode(0, 0, E1), episode(1, 2, E2)])
    stm.consolidate()
    assert [(e.start_t, e.count) for e in stm.episodes] == [(1, 2)]
    assert stm.dropped == 1


def test_consolidate_within_budget_is_an_error():
    stm = StmState(capacity=3)
    stm.restore_episodes([episode(0, 0, E1)])
    with pytest.raises(BudgetError):
        stm.consolidate()


def test_invalid_options():
    with pytest.raises(InvalidConfigError):
        StmState(fallback="drop")
    with pytest.raises(InvalidConfigError):
        StmState(context="global")


def test_running_mean_context_differs_from_previous():
    # slow drift: each step is close to the last but far from the start
    angles = np.linspace(0, np.pi / 2, 12)
    frames = [frame_with_mean(t, [np.cos(a), np.sin(a), 0.0]) for t, a in enumerate(angles)]
    prev, mean = StmState(theta_event=0.9), StmState(theta_event=0.9, context="running_mean")
    for f in frames:
        prev.ingest(f)
        mean.ingest(f)
    assert prev.boundary_log == []
    assert mean.boundary_log != []


def test_view_lists_active_episode_last():
    stm = StmState()
    for t, v in enumerate([E1, E1, E2]):
        stm.ingest(frame_with_mean(t, v))
    view = stm.view()
    assert [s.active for s in view] == [False, True]
    assert [f.t for f in view[-1].frames] == [2]


@settings(max_examples=30, deadline=None)
@given(st.integers(20, 400), st.integers(1, 6), st.floats(0.0, 1.0), st.integers(0, 2**31))
def test_budget_and_conservation_property(length, capacity, rho, seed):
    stm = StmState(capacity=capacity)
    for f in H.correlated_frames(length, 2, 3, seed=seed, rho=rho):
        stm.ingest(f)
        assert len(stm.episodes) <= capacity
        assert stm.frames_accounted == stm.ingested
        assert len(stm._pair_sims) == max(len(stm.episodes) - 1, 0)
    # episodes tile the ingested steps without gaps
    segs = stm.view()
    assert segs[0].start_t == 0
    for a, b in zip(segs, segs[1:]):
        assert b.start_t == a.end_t + 1


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 300), st.floats(-0.5, 0.95), st.integers(0, 2**31))
def test_streaming_boundaries_match_offline_pass(length, theta, seed):
    frames = H.correlated_frames(length, 3, 4, seed=seed)
    stm = StmState(theta_event=theta, capacity=3)
    for f in frames:
        stm.ingest(f)
    assert tuple(stm.boundary_log) == H.offline_segment_oracle(frames, theta)


# ---------------------------------------------------------------- worked examples


def test_pool_single_token_and_cancelling_pair():
    v = np.array([0.5, -2.0, 3.0])
    assert pool_frame(FrameFeature(0, v[None, :])).tolist() == v.tolist()
    assert not pool_frame(FrameFeature(0, np.stack([v, -v]))).any()


@pytest.mark.parametrize("N, rho, idx", [(1, 0.25, [0]), (8, 0.25, [0, 4]), (20, 0.25, [0, 4, 8, 12, 16])])
def test_compress_worked_examples(N, rho, idx):
    frames = [FrameFeature(t, np.zeros((1, 1))) for t in range(N)]
    assert [f.t for f in compress_episode(frames, rho)] == idx


def test_identical_frames_one_open_episode():
    stm = StmState()
    events = [stm.ingest(frame_with_mean(t, E1)) for t in range(50)]
    assert events == [OPENED] + [EXTENDED] * 49
    assert stm.episodes == [] and len(stm.active_frames) == 50


def test_alternating_orthogonal_frames_split_every_step():
    stm = StmState(capacity=100)
    for t in range(30):
        stm.ingest(frame_with_mean(t, E1 if t % 2 else E2))
    assert stm.boundary_log == list(range(1, 30))


def test_41st_episode_merges_only_the_identical_pair():
    D = 41
    basis = np.eye(D)
    eps = [episode(i, i, basis[i]) for i in range(D)]
    eps[21] = episode(21, 21, basis[20])  # identical to its left neighbour
    stm = StmState(capacity=40)
    stm.restore_episodes(eps)
    assert stm.consolidate() == 1
    assert len(stm.episodes) == 40
    merged = stm.episodes[20]
    assert (merged.start_t, merged.end_t, merged.count, merged.merged_from) == (20, 21, 2, 1)
    assert sum(e.count for e in stm.episodes) == 41


def test_weighted_merge_worked_example():
    v, w = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    a = Episode(0, 2, 3, v, [FrameFeature(0, v[None, :])])
    b = Episode(3, 3, 1, w, [FrameFeature(3, w[None, :])])
    m = merge_episodes(a, b)
    assert m.count == 4 and m.centroid.tolist() == ((3 * v + w) / 4).tolist()


def test_fallback_merge_picks_max_similarity_pair():
    rng = np.random.default_rng(0)
    mus = rng.standard_normal((41, 64))  # nearly orthogonal in 64 dims
    eps = [episode(i, i, mus[i]) for i in range(41)]
    sims = adjacent_similarities(eps)
    best = int(np.argmax(sims))
    assert max(sims) < 0.3  # nothing clears theta_merge
    stm = StmState(capacity=40)
    stm.restore_episodes(eps)
    stm.consolidate()
    assert stm.episodes[best].count == 2 and stm.episodes[best].start_t == best


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 200), st.floats(1e-3, 1e3), st.integers(0, 2**31))
def test_segmentation_scale_invariant(length, scale, seed):
    frames = H.correlated_frames(length, 2, 3, seed=seed)
    scaled = [FrameFeature(f.t, f.tokens * scale) for f in frames]
    a, b = StmState(), StmState()
    for f, g in zip(frames, scaled):
        a.ingest(f)
        b.ingest(g)
    assert a.boundary_log == b.boundary_log
