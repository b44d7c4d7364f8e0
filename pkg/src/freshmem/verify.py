"""Desk-scale oracle and invariant suite behind ``freshmem verify``.

Every check is deterministic given the seed; nothing here reads a clock,
so two runs with the same seed give byte-identical reports.
"""

from __future__ import annotations

import dataclasses
import os
import tempfile

import numpy as np

from . import harness as H
from .config import EngineConfig
from .engine import Engine
from .mfm import FrequencyBank, ResidualBuffer, reconstruct, residual_count, select_residual
from .streamio import FrameFeature


def _check(name, passed, value=None, limit=None):
    return {"name": name, "passed": bool(passed), "value": value, "limit": limit}


def check_dft_oracle(config, seed, lengths=(1000, 3000, 10000), S=2, D=4):
    worst = 0.0
    for i, n in enumerate(lengths):
        frames = H.correlated_frames(n, S, D, seed=seed + i)
        engine = Engine(config)
        engine.run(frames)
        evicted = frames[: len(frames) - config.window_len]
        oracle = H.batch_dft_oracle(evicted, engine.omega, config.mfm.gamma)
        worst = max(worst, H.max_relative_error(engine.bank.coeff, oracle))
    return _check("dft_oracle_equivalence", worst <= 1e-10, worst, 1e-10)


def check_reconstruction_identity(config, seed, S=4, D=8):
    rng = np.random.default_rng(seed)
    x = FrameFeature(0, rng.standard_normal((S, D)))
    bank = FrequencyBank(S, D, Engine(config).omega, config.mfm.gamma)
    bank.update(x)
    err = float(np.abs(reconstruct(bank, ResidualBuffer(), 0).tokens - x.tokens).max())
    return _check("reconstruction_identity", err <= 1e-12, err, 1e-12)


def check_fidelity_decay(config, seed, seeds=20, length=200, S=10, D=8, deltas=(1, 20, 100)):
    streams = [H.random_frames(length, S, D, seed=seed * 1000 + i) for i in range(seeds)]
    curve = H.reconstruction_error_curve(config, streams, deltas)
    mses = [m for _, m in curve]
    ordered = all(a < b for a, b in zip(mses, mses[1:]))
    return _check("fidelity_decay", ordered, mses, "strictly increasing")


def check_residuals(config, seed, frames=1000, S=20, D=8):
    rng = np.random.default_rng(seed)
    ratio = config.mfm.residual_ratio
    k = residual_count(S, ratio)
    mismatches = 0
    for t in range(frames):
        tokens = rng.standard_normal((S, D))
        if t % 10 == 0:
            tokens[rng.integers(S)] = tokens[rng.integers(S)]  # plant a tie
        entry = select_residual(FrameFeature(t, tokens), ratio)
        if list(entry.indices) != H.topk_by_sort(tokens, k):
            mismatches += 1

    stream = H.random_frames(300, S, D, seed=seed)
    engine = Engine(config)
    engine.run(stream)
    fused_ok = True
    for r in engine.snapshot().m_mfm:
        entry = engine.residuals.get(r.tau)
        if entry is not None:
            fused_ok &= r.residual_applied == r.tau and np.array_equal(r.tokens[entry.indices], entry.tokens)
    return _check("residual_selection_and_fusion", mismatches == 0 and fused_ok, mismatches, 0)


def check_segmentation(config, seed, streams=3, length=3000, S=4, D=8):
    mismatched = 0
    for i in range(streams):
        frames = H.correlated_frames(length, S, D, seed=seed + 100 + i)
        engine = Engine(config)
        engine.run(frames)
        evicted = frames[: len(frames) - config.window_len]
        if tuple(engine.boundary_log) != H.offline_segment_oracle(evicted, config.stm.theta_event):
            mismatched += 1
    return _check("segmentation_equivalence", mismatched == 0, mismatched, 0)


def _planted(seed, n=5):
    return H.planted_streams(H.SyntheticSpec(), [seed * 100 + i for i in range(n)])


def check_planted(config, seed):
    worst_p, worst_r = 1.0, 1.0
    for frames, truth in _planted(seed):
        sc = H.evaluate_segmentation(config, frames, truth, tolerance=0)
        worst_p, worst_r = min(worst_p, sc.precision), min(worst_r, sc.recall)
    ok = worst_p == 1.0 and worst_r == 1.0
    return _check("planted_boundary_recovery", ok, [worst_p, worst_r], [1.0, 1.0])


def check_budget(config, seed, length=5000, S=4, D=8):
    frames = H.correlated_frames(length, S, D, seed=seed + 7)
    engine = Engine(config)
    ok = True
    for f in frames:
        engine.step(f)
        stm = engine.stm
        ok &= len(stm.episodes) <= config.stm.capacity
        ok &= len(engine.residuals) <= config.mfm.residual_capacity
        ok &= len(engine.window) <= config.window_len
    ok &= engine.stm.frames_accounted == engine.stm.ingested == length - config.window_len
    return _check("budget_and_conservation", ok)


def check_op_counts(config, seed, length=5000):
    prof = H.latency_profile(config, length=length, seed=seed, wall_clock=False)
    same = int(prof.mfm_ops[100]) == int(prof.mfm_ops[length - 1])
    return _check("constant_update_cost", same, [int(prof.mfm_ops[100]), int(prof.mfm_ops[length - 1])])


def check_split_run(config, seed, length=2000, split=1000, S=4, D=8):
    frames = H.correlated_frames(length, S, D, seed=seed + 11)
    whole = Engine(config)
    whole.run(frames)
    first = Engine(config)
    first.run(frames[:split])
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "state.fmst")
        first.export_state(path)
        resumed = Engine.import_state(path, config=first.config)
    resumed.run(frames[split:])
    return _check("split_run_equivalence", whole.snapshot().digest() == resumed.snapshot().digest())


THETA_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99)


def check_sweep(config, seed):
    streams = _planted(seed)
    rows = H.sweep("theta_event", THETA_GRID, streams, config=config)
    curve = H.mean_by_x(rows, "f1")
    top = H.plateau(curve)
    best = max(curve.values())
    ok = 0.4 in top and curve[0.0] < best and curve[0.99] < best
    return _check("theta_event_plateau", ok, [curve[x] for x in THETA_GRID], "plateau contains 0.4")


CHECKS = (
    check_dft_oracle,
    check_reconstruction_identity,
    check_fidelity_decay,
    check_residuals,
    check_segmentation,
    check_planted,
    check_budget,
    check_op_counts,
    check_split_run,
    check_sweep,
)


def run_verification(config: EngineConfig | None = None, seed: int = 7) -> dict:
    # each check picks its own frame shape
    config = dataclasses.replace(config or EngineConfig(), S=None, D=None).validate()
    results = [check(config, seed) for check in CHECKS]
    return {
        "seed": seed,
        "config_fingerprint": config.fingerprint(),
        "passed": all(r["passed"] for r in results),
        "checks": results,
    }
