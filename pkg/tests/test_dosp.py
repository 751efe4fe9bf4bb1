import math

import numpy as np
import pytest

from dospsim.dosp import (
    AlgoConfig,
    InfeasibleBoxError,
    RunState,
    SineParams,
    default_record_ks,
    project,
    run,
    step_dosp,
    step_dosp_incomplete,
    step_exact_gradient_baseline,
    step_sine_baseline,
    streams,
)
from dospsim.exchange import ExchangeModel, incomplete_estimate, sample_masks
from dospsim.objectives import ObjectiveModel, QuadraticToy
from dospsim.perturbation import PerturbationModel, sample_array
from dospsim.schedules import PowerLawSchedule


class _LinearStub(ObjectiveModel):
    """Deterministic objective for hand-computed step checks: u_i = a_i."""

    n_nodes = 2
    noise_variance = 0.0
    bounds = None
    strong_concavity = None
    hessian_bound = None

    def sample_state(self, rng, batch_shape=()):
        return np.ones(tuple(batch_shape) + (2,))

    def local_utilities(self, a, s):
        return np.asarray(a, dtype=float)

    def exact_sample_gradient(self, a, s):
        return np.ones_like(np.asarray(a, dtype=float))

    def init_action(self, rng, batch_shape=()):
        return np.zeros(tuple(batch_shape) + (2,))


# --- configuration validation -------------------------------------------------


def test_sine_params_validation():
    with pytest.raises(ValueError):
        SineParams(frequencies=(3.0, 3.0))
    with pytest.raises(ValueError):
        SineParams(frequencies=(1.0, 2.0, 3.0))  # 1 + 2 == 3
    with pytest.raises(ValueError):
        SineParams(frequencies=(2.0, 4.0))  # 2 + 2 == 4
    with pytest.raises(ValueError):
        SineParams(frequencies=(1.0, 2.5), amplitude=0.0)
    SineParams(frequencies=(63.0, 70.0, 56.0, 49.0))  # default set is legal


def test_algo_config_validation():
    sched = PowerLawSchedule(0.5, 0.75, 1.0, 0.25)
    with pytest.raises(ValueError):
        AlgoConfig(schedule=sched, variant="adam")
    with pytest.raises(ValueError):
        AlgoConfig(schedule=sched, variant="sine_baseline")  # missing sine
    with pytest.raises(ValueError):
        AlgoConfig(schedule=sched, sine=SineParams(frequencies=(1.0, 2.5)))
    with pytest.raises(ValueError):
        AlgoConfig(schedule=sched, variant="dosp_incomplete")  # missing exchange


def test_effective_bounds_override():
    sched = PowerLawSchedule(0.5, 0.75, 1.0, 0.25)
    toy = QuadraticToy()
    assert AlgoConfig(schedule=sched).effective_bounds(toy) == (0.0, 3.0)
    assert AlgoConfig(schedule=sched, bounds=(0.0, 5.0)).effective_bounds(toy) == (0.0, 5.0)


# --- projection ---------------------------------------------------------------


def test_project_examples():
    # constant gamma = 0.4, amplitude 1 -> shrunken box [0.4, 2.6] inside [0, 3]
    sched = PowerLawSchedule(1.0, 0.75, 0.4, 0.0)
    config = AlgoConfig(schedule=sched, bounds=(0.0, 3.0))
    assert project(2.9, 1, config) == 2.6
    assert project(0.0, 1, config) == 0.4
    assert project(1.0, 1, config) == 1.0
    np.testing.assert_allclose(project(np.array([-1.0, 3.0]), 1, config), [0.4, 2.6])


def test_project_raises_when_box_empty():
    sched = PowerLawSchedule(1.0, 0.75, 2.0, 0.0)
    config = AlgoConfig(schedule=sched, bounds=(0.0, 3.0))
    with pytest.raises(InfeasibleBoxError):
        project(1.5, 1, config)


def test_project_requires_bounds():
    config = AlgoConfig(schedule=PowerLawSchedule(1.0, 0.75, 0.4, 0.0))
    with pytest.raises(ValueError):
        project(1.0, 1, config)


# --- streams -------------------------------------------------------------------


def test_streams_reproducible_and_purpose_separated():
    a = streams(7, 3).phi.random(5)
    b = streams(7, 3).phi.random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, streams(7, 3).state.random(5))
    assert not np.array_equal(a, streams(7, 4).phi.random(5))
    assert not np.array_equal(a, streams(8, 3).phi.random(5))


# --- hand-checked single steps --------------------------------------------------


def test_sine_step_offset1_starts_at_phase_zero():
    # default phase: phi = sin(0) = 0 on the very first step, so the action
    # is unchanged while t advances by beta_0
    sched = PowerLawSchedule(0.5, 0.75, 1.0, 0.25, index_offset=1)
    config = AlgoConfig(
        schedule=sched,
        variant="sine_baseline",
        sine=SineParams(frequencies=(63.0, 70.0), amplitude=1.5),
    )
    state = RunState(k=0, a=np.array([1.0, 2.0]))
    new, rec = step_sine_baseline(state, config, _LinearStub(), streams(0, 0))
    np.testing.assert_array_equal(new.a, [1.0, 2.0])
    assert new.t == 0.5
    np.testing.assert_array_equal(new.last_phi, [0.0, 0.0])
    np.testing.assert_array_equal(rec.performed_action, [1.0, 2.0])  # phi = 0


def test_sine_step_offset0_hand_values():
    # offset 0: the step at k = 1 uses t = beta(1) = beta0
    beta0, gamma0, amp = 0.5, 0.8, 1.5
    w = (63.0, 70.0)
    sched = PowerLawSchedule(beta0, 0.75, gamma0, 0.0, index_offset=0)
    config = AlgoConfig(
        schedule=sched,
        variant="sine_baseline",
        sine=SineParams(frequencies=w, amplitude=amp),
    )
    a = np.array([1.0, 2.0])
    new, rec = step_sine_baseline(RunState(k=1, a=a), config, _LinearStub(), streams(0, 1))
    phi = np.array([amp * math.sin(wi * beta0) for wi in w])
    ahat = a + gamma0 * phi
    ftil = ahat.sum()
    np.testing.assert_allclose(rec.performed_action, ahat, rtol=1e-15)
    np.testing.assert_allclose(rec.observed_global, ftil, rtol=1e-15)
    np.testing.assert_allclose(new.a, a + beta0 * phi * ftil, rtol=1e-15)
    assert new.t == pytest.approx(beta0)


def test_dosp_step_matches_scalar_recomputation():
    sched = PowerLawSchedule(0.5, 0.75, 1.0, 0.25)
    pert = PerturbationModel(amplitude=1.0)
    config = AlgoConfig(schedule=sched, perturbation=pert, bounds=(0.0, 3.0))
    toy = QuadraticToy()
    a = np.array([0.3, 2.7])
    new, rec = step_dosp(RunState(k=0, a=a), config, toy, streams(11, 0))
    # regenerate the same draws from fresh bundles and redo the step by hand
    phi = sample_array(pert, (2,), streams(11, 0).phi)
    s = toy.sample_state(streams(11, 0).state)
    ahat = np.clip(a + sched.gamma(0) * phi, 0.0, 3.0)
    ftil = toy.local_utilities(ahat, s).sum()
    cand = a + sched.beta(0) * phi * ftil
    margin = sched.gamma(1)
    lo, hi = 0.0 + margin, 3.0 - margin
    expect = np.clip(cand, lo, hi) if lo <= hi else np.clip(cand, 0.0, 3.0)
    np.testing.assert_array_equal(rec.performed_action, ahat)
    assert rec.observed_global == ftil
    np.testing.assert_array_equal(new.a, expect)


def test_incomplete_step_matches_scalar_estimator():
    sched = PowerLawSchedule(0.5, 0.75, 1.0, 0.25)
    pert = PerturbationModel(amplitude=1.0)
    exch = ExchangeModel(p=0.5)
    config = AlgoConfig(
        schedule=sched, perturbation=pert, exchange=exch, variant="dosp_incomplete"
    )
    toy = QuadraticToy()
    a = np.array([1.2, 0.4])
    new, rec = step_dosp_incomplete(RunState(k=0, a=a), config, toy, streams(3, 0))
    phi = sample_array(pert, (2,), streams(3, 0).phi)
    s = toy.sample_state(streams(3, 0).state)
    ahat = np.clip(a + sched.gamma(0) * phi, 0.0, 3.0)
    u = toy.local_utilities(ahat, s)
    mask = sample_masks(exch, 2, streams(3, 0).subset)
    est = np.array(
        [incomplete_estimate(i, u, np.flatnonzero(mask[i])) for i in range(2)]
    )
    np.testing.assert_allclose(rec.observed_global, est, rtol=1e-15)
    cand = a + sched.beta(0) * phi * est
    margin = sched.gamma(1)
    np.testing.assert_allclose(
        new.a, np.clip(cand, margin, 3.0 - margin), rtol=1e-15
    )


def test_incomplete_p1_step_bitwise_equals_complete():
    sched = PowerLawSchedule(0.5, 0.75, 1.0, 0.25)
    config_c = AlgoConfig(schedule=sched)
    config_i = AlgoConfig(
        schedule=sched, exchange=ExchangeModel(1.0), variant="dosp_incomplete"
    )
    toy = QuadraticToy()
    a = np.array([0.7, 1.9])
    new_c, _ = step_dosp(RunState(k=0, a=a), config_c, toy, streams(21, 0))
    new_i, _ = step_dosp_incomplete(RunState(k=0, a=a), config_i, toy, streams(21, 0))
    assert np.array_equal(new_c.a, new_i.a)


def test_exact_gradient_step():
    sched = PowerLawSchedule(0.5, 0.75, 1.0, 0.25)
    config = AlgoConfig(schedule=sched, variant="exact_gradient_baseline")
    stub = _LinearStub()
    new, rec = step_exact_gradient_baseline(
        RunState(k=0, a=np.array([1.0, 2.0])), config, stub, streams(0, 0)
    )
    np.testing.assert_array_equal(new.a, [1.5, 2.5])  # a + beta0 * ones
    assert rec.observed_global == 3.0  # f at the nominal action


# --- run loop -------------------------------------------------------------------


def _toy_config():
    return AlgoConfig(
        schedule=PowerLawSchedule(0.5, 0.75, 1.0, 0.25),
        perturbation=PerturbationModel(amplitude=1.0),
    )


def test_run_rerun_is_bit_identical():
    toy = QuadraticToy()
    t1 = run(_toy_config(), toy, horizon=300, seed=5, replications=4)
    t2 = run(_toy_config(), toy, horizon=300, seed=5, replications=4)
    assert np.array_equal(t1.actions, t2.actions)
    assert np.array_equal(t1.mean_utility, t2.mean_utility)
    assert np.array_equal(t1.ghat_sq, t2.ghat_sq, equal_nan=True)


def test_replication_prefix_stability():
    toy = QuadraticToy()
    t3 = run(_toy_config(), toy, horizon=200, seed=9, replications=3)
    t5 = run(_toy_config(), toy, horizon=200, seed=9, replications=5)
    assert np.array_equal(t3.actions, t5.actions[:, :3, :])


def test_run_records_and_shapes():
    toy = QuadraticToy()
    trace = run(_toy_config(), toy, horizon=50, seed=1, replications=2,
                record_successors=True)
    assert trace.ks[0] == 0 and trace.ks[-1] == 50
    assert trace.actions.shape == (len(trace.ks), 2, 2)
    assert np.isnan(trace.ghat_sq[-1])  # no step happens at the final index
    assert np.all(np.isfinite(trace.ghat_sq[:-1]))
    assert np.all(np.isfinite(trace.mean_utility))
    # successor of record j equals the nominal action recorded at k+1
    for j, k in enumerate(trace.ks[:-1]):
        jn = np.flatnonzero(trace.ks == k + 1)
        if jn.size:
            assert np.array_equal(trace.successor_actions[j], trace.actions[jn[0]])


def test_run_horizon_one():
    toy = QuadraticToy()
    trace = run(_toy_config(), toy, horizon=1, seed=2, replications=3)
    assert list(trace.ks) == [0, 1]
    assert np.isfinite(trace.mean_utility).all()


def test_run_rejects_bad_inputs():
    toy = QuadraticToy()
    with pytest.raises(ValueError):
        run(_toy_config(), toy, horizon=0, seed=0)
    with pytest.raises(ValueError):
        run(_toy_config(), toy, horizon=10, seed=0, record_ks=[0, 11])


def test_performed_actions_stay_in_box_mini_fuzz():
    toy = QuadraticToy()
    # large initial gamma so the early shrunken box is empty and the fallback
    # clamp is exercised
    config = AlgoConfig(
        schedule=PowerLawSchedule(2.5, 0.75, 12.0, 0.25, index_offset=0),
        perturbation=PerturbationModel(amplitude=1.0),
    )
    for seed in range(5):
        trace = run(config, toy, horizon=300, seed=seed, replications=3)
        assert trace.performed_min >= 0.0
        assert trace.performed_max <= 3.0


def test_run_p1_bitwise_equals_complete():
    toy = QuadraticToy()
    base = _toy_config()
    from dataclasses import replace

    inc = replace(base, exchange=ExchangeModel(1.0), variant="dosp_incomplete")
    tc = run(base, toy, horizon=200, seed=13, replications=3)
    ti = run(inc, toy, horizon=200, seed=13, replications=3)
    assert np.array_equal(tc.actions, ti.actions)


def test_exact_gradient_run_converges_on_toy():
    toy = QuadraticToy()
    config = AlgoConfig(
        schedule=PowerLawSchedule(0.5, 0.75, 1.0, 0.25),
        variant="exact_gradient_baseline",
    )
    trace = run(config, toy, horizon=2000, seed=3, replications=4)
    final = trace.actions[-1]
    assert np.max(np.abs(final - toy.optimum())) < 0.05


def test_default_record_ks_structure():
    ks = default_record_ks(0, 10**5)
    assert ks[0] == 0 and ks[-1] == 10**5
    assert np.all(np.diff(ks) > 0)
    assert np.array_equal(ks[:1001], np.arange(1001))  # dense head
    assert len(ks) < 1200  # sparse log tail

    short = default_record_ks(1, 10)
    assert short[0] == 1 and short[-1] == 11
