import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twbh.engine import (
    EnsembleDiverged, EnsemblePlan, MomentAccumulator, UnknownSampleTime, batch_snapshots, population,
    populations, run_ensemble, run_trajectory, sample_vacuum, snapshot, step, trajectory_rng,
)
from twbh.model import ChainConfig, Diverged

SHORT = ChainConfig(t_final=2.0, sample_times=(0.0, 1.0, 2.0), chi=1e-2)


def test_vacuum_sample_moments():
    g = trajectory_rng(7, 0)
    a = np.array([sample_vacuum(1, g)[0] for _ in range(40_000)])
    assert abs(np.mean(np.abs(a) ** 2) - 0.5) < 0.02
    assert abs(np.mean(a)) < 0.01
    assert abs(np.mean(a * a)) < 0.01


def test_streams_are_independent_of_draw_chunking():
    a = trajectory_rng(3, 5).standard_normal(1000)
    g = trajectory_rng(3, 5)
    b = np.concatenate([g.standard_normal(10), g.standard_normal(990)])
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, trajectory_rng(3, 6).standard_normal(1000))


def test_kernel_matches_reference_step():
    cfg = ChainConfig(chi=1e-2, t_final=0.05, sample_times=(0.05,), damp_well=1)
    g = trajectory_rng(11, 4)
    a = sample_vacuum(3, g)
    for _ in range(50):
        a = step(a, cfg, g)
    np.testing.assert_allclose(run_trajectory(4, cfg, base_seed=11)[-1], a, rtol=1e-13, atol=1e-13)


def test_rk4_is_exact_for_linear_decay():
    # single damped mode, no pump: alpha(t) = alpha0 exp(-gamma t) within RK4 error
    cfg = ChainConfig(n_wells=2, tunneling=0.0, pump_rate=0.0, damp_well=1, dt=1e-2, t_final=1.0)
    a = np.array([1.0 + 1.0j, 0.5])
    for _ in range(100):
        a = step(a, cfg, None)
    assert abs(a[0] - (1 + 1j) * math.exp(-1)) < 1e-10
    assert a[1] == 0.5


def test_rk4_constant_drift_exact():
    cfg = ChainConfig(n_wells=2, tunneling=0.0, damp_rate=0.0, pump_rate=3.0, damp_well=2, dt=1e-3, t_final=1.0)
    a = np.zeros(2, complex)
    for _ in range(1000):
        a = step(a, cfg, None)
    assert abs(a[0] - 3.0) < 1e-12


def test_damped_mode_relaxes_to_vacuum():
    # a lone damped mode is an Ornstein-Uhlenbeck process with <|a|^2> -> 1/2
    cfg = ChainConfig(n_wells=2, tunneling=0.0, pump_rate=0.0, damp_well=1, dt=1e-2, t_final=8.0,
                      sample_times=(8.0,))
    acc = run_ensemble(cfg, EnsemblePlan(4000, 1, 40))
    n, err = population(acc, 1, 8.0)
    assert abs(n) < 4 * err + 1e-3


def test_ensemble_is_deterministic_and_thread_invariant():
    plan = EnsemblePlan(256, 42, 8)
    a = run_ensemble(SHORT, plan, workers=1)
    b = run_ensemble(SHORT, plan, workers=3)
    assert a.equals(b)
    assert not a.equals(run_ensemble(SHORT, EnsemblePlan(256, 43, 8)))


def test_trajectory_identical_inside_and_outside_batch():
    plan = EnsemblePlan(70, 9, 1)
    acc = run_ensemble(SHORT, plan)
    states = np.stack([run_trajectory(i, SHORT, 9) for i in range(70)])
    np.testing.assert_array_equal(acc.s1[0], states.sum(axis=0))


def test_checkpoint_round_trip(tmp_path):
    plan = EnsemblePlan(128, 5, 4)
    acc = run_ensemble(SHORT, plan)
    acc.save(tmp_path / "c.npz")
    back = MomentAccumulator.load(tmp_path / "c.npz")
    assert back.equals(acc)


def test_resume_from_partial_checkpoint(tmp_path):
    plan = EnsemblePlan(128, 5, 4)
    full = run_ensemble(SHORT, plan)
    partial = MomentAccumulator(SHORT, plan)
    partial.add_batch(0, full_batch(full, 0))
    partial.save(tmp_path / "c.npz")
    resumed = run_ensemble(SHORT, plan, checkpoint=tmp_path / "c.npz")
    assert resumed.equals(full)
    assert MomentAccumulator.load(tmp_path / "c.npz").equals(full)


def full_batch(acc, b):
    return np.stack([run_trajectory(i, acc.cfg, acc.plan.base_seed) for i in acc.plan.batch_range(b)])


def test_checkpoint_rejects_other_experiment(tmp_path):
    plan = EnsemblePlan(64, 5, 2)
    run_ensemble(SHORT, plan, checkpoint=tmp_path / "c.npz")
    with pytest.raises(ValueError):
        run_ensemble(SHORT.replace(chi=0.0), plan, checkpoint=tmp_path / "c.npz")


@settings(max_examples=20, deadline=None)
@given(st.lists(st.booleans(), min_size=6, max_size=6))
def test_merge_of_disjoint_halves_is_the_whole(mask):
    plan = EnsemblePlan(60, 2, 6)
    whole = _whole()
    left, right = MomentAccumulator(SHORT, plan), MomentAccumulator(SHORT, plan)
    for b in range(6):
        (left if mask[b] else right).add_batch(b, _batches()[b])
    assert left.merge(right).equals(whole)
    assert right.merge(left).equals(whole)


_CACHE = {}


def _batches():
    if "b" not in _CACHE:
        plan = EnsemblePlan(60, 2, 6)
        _CACHE["b"] = [np.stack([run_trajectory(i, SHORT, 2) for i in plan.batch_range(b)]) for b in range(6)]
    return _CACHE["b"]


def _whole():
    acc = MomentAccumulator(SHORT, EnsemblePlan(60, 2, 6))
    for b, s in enumerate(_batches()):
        acc.add_batch(b, s)
    return acc


def test_merge_rejects_overlap():
    a = _whole()
    with pytest.raises(ValueError):
        a.merge(a)


def test_snapshot_and_populations_agree():
    acc = _whole()
    pop, err = populations(acc)
    for i in range(3):
        v, e = population(acc, i + 1, 2.0)
        assert math.isclose(v, pop[2, i], rel_tol=1e-12) and math.isclose(e, err[2, i], rel_tol=1e-12)
    np.testing.assert_allclose(snapshot(acc, 2.0).populations(), pop[2], rtol=1e-10)
    assert len(batch_snapshots(acc, 1.0)) == 6
    with pytest.raises(UnknownSampleTime):
        snapshot(acc, 1.5)


def test_divergence_is_reported():
    cfg = ChainConfig(t_final=1.0, sample_times=(1.0,))
    with pytest.raises(Diverged):
        step(np.array([2e7, 0, 0]), cfg, None)
    # blow the bath noise far past the guard radius
    with pytest.raises(Diverged):
        run_trajectory(0, cfg, noise_scale=1e12)
    with pytest.raises(EnsembleDiverged) as info:
        run_ensemble(cfg, EnsemblePlan(4, 0, 2), noise_scale=1e12)
    assert info.value.n_diverged == 4 and info.value.first_index == 0
