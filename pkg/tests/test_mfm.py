import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freshmem import harness as H
from freshmem.errors import (
    EmptyBankError,
    InvalidRangeError,
    ShapeMismatchError,
    StepOrderError,
    TauOutOfRangeError,
)
from freshmem.mfm import (
    FrequencyBank,
    ResidualBuffer,
    make_band_frequencies,
    memory_steps,
    mfm_memory_view,
    reconstruct,
    reduced_phase,
    residual_count,
    select_residual,
)
from freshmem.streamio import FrameFeature

from helpers import frames_of


# ---------------------------------------------------------------- bands


def test_default_bands_are_geometric_from_001_to_nyquist():
    omega = make_band_frequencies()
    assert omega.shape == (16,)
    assert omega[0] == pytest.approx(2 * math.pi * 0.01, rel=1e-15)
    assert omega[-1] == pytest.approx(math.pi, rel=1e-15)
    ratios = omega[1:] / omega[:-1]
    assert np.allclose(ratios, 50 ** (1 / 15), rtol=1e-12)


def test_single_band_is_f_min():
    assert make_band_frequencies(1, 0.1, 0.2).tolist() == [2 * math.pi * 0.1]


@pytest.mark.parametrize("args", [(0, 0.01, 0.5), (4, 0.0, 0.5), (4, 0.2, 0.1), (4, 0.1, 0.6)])
def test_bad_band_ranges(args):
    with pytest.raises(InvalidRangeError):
        make_band_frequencies(*args)


def test_reduced_phase_stays_in_range():
    omega = make_band_frequencies()
    for t in (0, 1, 10**6, 10**9 + 7):
        ph = reduced_phase(omega, t)
        assert np.all((0 <= ph) & (ph < 2 * math.pi))


# ---------------------------------------------------------------- bank


def test_two_updates_hand_computed():
    # one band at a quarter turn per step: e^{-j pi/2} = -j
    bank = FrequencyBank(1, 2, [math.pi / 2], gamma=0.5)
    x0, x1 = np.array([[2.0, -4.0]]), np.array([[1.0, 3.0]])
    for f in frames_of(x0, x1):
        bank.update(f)
    expected = 0.5 * x0 - 1j * x1
    assert np.allclose(bank.coeff[0], expected, atol=1e-15)
    # inverse at each step: tau=1 gives x1 back, tau=0 gives the decayed x0
    assert np.allclose(reconstruct(bank, None, 1).tokens, x1, atol=1e-15)
    assert np.allclose(reconstruct(bank, None, 0).tokens, 0.5 * x0, atol=1e-15)


def test_single_frame_identity_at_defaults():
    x = np.random.default_rng(5).standard_normal((4, 6))
    bank = FrequencyBank.from_bands(4, 6)
    bank.update(FrameFeature(0, x))
    rec = reconstruct(bank, ResidualBuffer(), 0)
    assert np.abs(rec.tokens - x).max() <= 1e-12
    assert rec.residual_applied is None


def test_update_cost_constant():
    bank = FrequencyBank.from_bands(3, 5)
    assert bank.update_ops() == 16 + 16 * 3 * 5


def test_bank_rejects_shape_and_order_errors():
    bank = FrequencyBank.from_bands(2, 2)
    with pytest.raises(ShapeMismatchError):
        bank.update(FrameFeature(0, np.zeros((3, 2))))
    bank.update(FrameFeature(4, np.zeros((2, 2))))
    with pytest.raises(StepOrderError):
        bank.update(FrameFeature(4, np.zeros((2, 2))))


@pytest.mark.parametrize("gamma", [0.0, 1.0, 1.5])
def test_gamma_must_be_open_unit(gamma):
    with pytest.raises(InvalidRangeError):
        FrequencyBank.from_bands(1, 1, gamma=gamma)


def test_coefficient_magnitude_bounded_by_geometric_series():
    frames = H.random_frames(400, 3, 4, seed=2)
    bank = FrequencyBank.from_bands(3, 4)
    for f in frames:
        bank.update(f)
    assert np.abs(bank.coeff).max() <= bank.max_abs_seen / (1 - bank.gamma) + 1e-12


def test_matches_batch_oracle_at_large_offsets():
    # phase reduction keeps precision when t is large
    frames = [FrameFeature(10**9 + i, f.tokens) for i, f in enumerate(H.random_frames(300, 2, 3, seed=3))]
    bank = FrequencyBank.from_bands(2, 3)
    for f in frames:
        bank.update(f)
    assert H.max_relative_error(bank.coeff, H.batch_dft_oracle(frames, bank.omega, bank.gamma)) <= 1e-10


def test_snapshot_is_read_only_and_detached():
    bank = FrequencyBank.from_bands(1, 1)
    bank.update(FrameFeature(0, np.ones((1, 1))))
    snap = bank.snapshot()
    bank.update(FrameFeature(1, np.ones((1, 1))))
    assert snap.last_t == 0
    with pytest.raises(ValueError):
        snap.coeff[0, 0, 0] = 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 60), st.integers(1, 3), st.integers(1, 3), st.floats(0.05, 0.99), st.integers(0, 2**31))
def test_incremental_equals_closed_form(n, S, D, gamma, seed):
    frames = H.random_frames(n, S, D, seed=seed)
    bank = FrequencyBank.from_bands(S, D, gamma=gamma)
    for f in frames:
        bank.update(f)
    assert H.max_relative_error(bank.coeff, H.batch_dft_oracle(frames, bank.omega, gamma)) <= 1e-10


# ---------------------------------------------------------------- residuals


@pytest.mark.parametrize("S, ratio, k", [(8, 0.1, 1), (10, 0.1, 1), (20, 0.1, 2), (30, 0.1, 3), (10, 0.25, 3), (4, 1.0, 4)])
def test_residual_count(S, ratio, k):
    assert residual_count(S, ratio) == k


def test_selection_prefers_lower_index_on_ties():
    # row norms 3, 5, 5, 1
    tokens = np.array([[3.0, 0.0], [3.0, 4.0], [0.0, 5.0], [1.0, 0.0]])
    one = select_residual(FrameFeature(0, tokens), ratio=0.25)
    two = select_residual(FrameFeature(0, tokens), ratio=0.5)
    assert one.indices.tolist() == [1]
    assert two.indices.tolist() == [1, 2]
    assert two.norms.tolist() == [5.0, 5.0]
    assert np.array_equal(two.tokens, tokens[[1, 2]])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40), st.integers(1, 6), st.floats(0.01, 1.0), st.integers(0, 2**31))
def test_selection_matches_sort_oracle(S, D, ratio, seed):
    rng = np.random.default_rng(seed)
    tokens = rng.integers(-2, 3, size=(S, D)).astype(float)  # small ints: plenty of ties
    entry = select_residual(FrameFeature(0, tokens), ratio)
    assert entry.indices.tolist() == H.topk_by_sort(tokens, residual_count(S, ratio))


def test_buffer_overwrites_oldest():
    buf = ResidualBuffer(capacity=2)
    frames = frames_of(*[np.full((3, 1), t + 1.0) for t in range(3)])
    assert buf.store(select_residual(frames[0])) is None
    buf.store(select_residual(frames[1]))
    old = buf.store(select_residual(frames[2]))
    assert old.t == 0
    assert buf.steps() == [1, 2]
    assert buf.get(0) is None and buf.get(2).t == 2


def test_buffer_rejects_stale_entry():
    buf = ResidualBuffer()
    buf.store(select_residual(FrameFeature(3, np.ones((2, 2)))))
    with pytest.raises(StepOrderError):
        buf.store(select_residual(FrameFeature(3, np.ones((2, 2)))))


def test_fusion_overwrites_only_selected_rows():
    frames = H.random_frames(30, 10, 4, seed=9)
    bank, buf = FrequencyBank.from_bands(10, 4), ResidualBuffer()
    for f in frames:
        bank.update(f)
        buf.store(select_residual(f))
    tau = 25
    entry = buf.get(tau)
    fused = reconstruct(bank, buf, tau)
    plain = reconstruct(bank, None, tau)
    assert fused.residual_applied == tau
    assert np.array_equal(fused.tokens[entry.indices], entry.tokens)
    rest = np.setdiff1d(np.arange(10), entry.indices)
    assert np.array_equal(fused.tokens[rest], plain.tokens[rest])


def test_reconstruct_errors():
    bank = FrequencyBank.from_bands(1, 1)
    with pytest.raises(EmptyBankError):
        reconstruct(bank, None, 0)
    bank.update(FrameFeature(0, np.ones((1, 1))))
    with pytest.raises(TauOutOfRangeError):
        reconstruct(bank, None, 1)
    with pytest.raises(TauOutOfRangeError):
        reconstruct(bank, None, -1)


# ---------------------------------------------------------------- memory view


def test_memory_steps_log_spaced_without_residuals():
    bank = FrequencyBank.from_bands(1, 1)
    for f in H.random_frames(100, 1, 1, seed=0):
        bank.update(f)
    # lags rint(geomspace(1, 100, 5)) - 1 = 0, 2, 9, 31, 99
    assert memory_steps(bank, None, 5) == [0, 68, 90, 97, 99]


def test_memory_steps_residuals_first_then_fill():
    bank, buf = FrequencyBank.from_bands(2, 1), ResidualBuffer(capacity=3)
    for f in H.random_frames(50, 2, 1, seed=0):
        bank.update(f)
        buf.store(select_residual(f))
    steps = memory_steps(bank, buf, 6)
    assert len(steps) == 6 and steps == sorted(set(steps))
    assert {47, 48, 49} <= set(steps)
    assert steps[0] == 0


def test_memory_view_short_history():
    bank = FrequencyBank.from_bands(1, 1)
    for f in H.random_frames(3, 1, 1, seed=0):
        bank.update(f)
    assert [r.tau for r in mfm_memory_view(bank, None, 15)] == [0, 1, 2]
