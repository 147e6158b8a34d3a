import numpy as np
import pytest

from twbh.engine import EnsemblePlan, run_ensemble
from twbh.model import ChainConfig, NonZeroChi, classical_fixed_point
from twbh.oracle import ConfigMismatch, compare, linear_moments, meanfield_evolve


def grid(t_final, every=1.0):
    return tuple(float(t) for t in np.arange(0, t_final + every / 2, every))


@pytest.mark.parametrize("damp", [1, 3])
def test_relaxes_to_stationary_solution(damp):
    cfg = ChainConfig(damp_well=damp, t_final=150.0)
    lm = linear_moments(cfg, [150.0])
    st = lm.stationary
    np.testing.assert_allclose(st.m, classical_fixed_point(cfg), atol=1e-10)
    np.testing.assert_allclose(lm.m[-1], st.m, atol=1e-6)
    np.testing.assert_allclose(lm.D[-1], st.D, atol=1e-6)
    np.testing.assert_allclose(lm.C[-1], 0, atol=1e-9)


def test_stationary_populations():
    p3 = linear_moments(ChainConfig(damp_well=3, t_final=60.0), [60.0]).stationary.populations()
    np.testing.assert_allclose(p3, 100, atol=1e-9)
    p1 = linear_moments(ChainConfig(damp_well=1, t_final=60.0), [60.0]).stationary.populations()
    assert abs(p1[1]) < 1e-9


def test_closed_chain_keeps_vacuum_noise():
    cfg = ChainConfig(pump_rate=0.0, damp_rate=0.0, t_final=5.0)
    lm = linear_moments(cfg, [0.0, 5.0])
    np.testing.assert_allclose(lm.D[-1], 0.5 * np.eye(3), atol=1e-12)
    assert lm.stationary is None


@pytest.mark.parametrize("damp", [1, 2, 3])
def test_meanfield_equals_linear_mean(damp):
    cfg = ChainConfig(damp_well=damp)
    ts = grid(40.0, 5.0)
    np.testing.assert_allclose(meanfield_evolve(cfg, ts), linear_moments(cfg, ts).m, atol=1e-9)


def test_middle_loss_grows_quadratically():
    cfg = ChainConfig(damp_well=2)
    ts = grid(40.0, 0.5)
    n = np.abs(meanfield_evolve(cfg, ts)) ** 2
    t = np.array(ts)
    sel = t >= 20
    slope = np.polyfit(np.log(t[sel]), np.log(n[sel, 0]), 1)[0]
    assert abs(slope - 2.0) < 0.05
    assert abs(n[-1, 1] - 25) < 2
    assert linear_moments(cfg, ts).stationary is None


def test_requires_linear_chain():
    with pytest.raises(NonZeroChi):
        linear_moments(ChainConfig(chi=1e-3), [0.0])


def test_grid_must_be_on_steps():
    with pytest.raises(ValueError):
        linear_moments(ChainConfig(), [0.00015])


@pytest.fixture(scope="module")
def short_run():
    cfg = ChainConfig(damp_well=3, t_final=4.0, sample_times=(0.0, 2.0, 4.0))
    return cfg, run_ensemble(cfg, EnsemblePlan(2000, 3, 50))


def test_engine_matches_oracle(short_run):
    cfg, acc = short_run
    lm = linear_moments(cfg, cfg.sample_times)
    for t in (2.0, 4.0):
        assert compare(acc, lm, t).passed()


def test_fault_injection_is_caught(short_run):
    cfg, _ = short_run
    loud = run_ensemble(cfg, EnsemblePlan(2000, 3, 50), noise_scale=2.0)
    assert not compare(loud, linear_moments(cfg, cfg.sample_times), 4.0).passed()


def test_compare_rejects_mismatched_config(short_run):
    cfg, acc = short_run
    with pytest.raises(ConfigMismatch):
        compare(acc, linear_moments(cfg.replace(damp_well=1), cfg.sample_times), 4.0)
