import numpy as np
import pytest

from arsearch.core import (
    ArsConfig,
    StopCondition,
    ars_step,
    ars_update,
    brs_step,
    brs_update,
    records_equal,
    select_top,
    train,
)
from arsearch.envs import Env, PointMassEnv, QuadraticEnv, make_env
from arsearch.executor import WorkerPool
from arsearch.policy import PolicyParams, RunningStat
from arsearch.rng import ConfigError, SeedHierarchy, build_table, make_generator


class CountingEnv(Env):
    """Quadratic toy that counts every reset and step it serves."""

    def __init__(self, horizon=7):
        self.inner = QuadraticEnv(horizon=horizon)
        self.spec = self.inner.spec
        self.resets = self.steps = 0

    def reset(self, rng):
        self.resets += 1
        return self.inner.reset(rng)

    def step(self, x, u, rng):
        self.steps += 1
        return self.inner.step(x, u, rng)


class ScaledEnv(Env):
    def __init__(self, inner, c):
        self.inner, self.c, self.spec = inner, c, inner.spec

    def reset(self, rng):
        return self.inner.reset(rng)

    def step(self, x, u, rng):
        x_next, r, done = self.inner.step(x, u, rng)
        return x_next, self.c * r, done


def test_hand_traced_update():
    deltas = np.array([[[1.0, -2.0]], [[0.5, 4.0]]])
    step, sigma_r, selected, skipped = ars_update(deltas, [5.0, 3.0], [1.0, 2.0], b=1, alpha=0.1)
    assert list(selected) == [0] and sigma_r == 2.0 and not skipped
    assert np.allclose(step, 2 * 0.1 * deltas[0], rtol=1e-15, atol=0)


def test_constant_rewards_skip_update():
    step, sigma_r, _, skipped = ars_update(np.ones((3, 1, 2)), [4.0] * 3, [4.0] * 3, b=3, alpha=1.0)
    assert skipped and sigma_r == 0.0
    assert not step.any()


def test_non_finite_rewards_skip_update():
    _, _, _, skipped = ars_update(np.ones((2, 1, 1)), [-np.inf, 1.0], [0.0, 2.0], b=2, alpha=1.0)
    assert skipped


def test_ties_go_to_lower_ordinal():
    assert list(select_top([1.0, 3.0, 3.0, 3.0], [0.0, 0.0, 0.0, 0.0], 2)) == [1, 2]
    # same scores presented in a different order select the same tied set by position
    assert list(select_top([3.0, 3.0, 1.0, 3.0], [3.0, 0.0, 0.0, 0.0], 2)) == [0, 1]


def test_permuting_tied_directions_keeps_the_selected_set():
    r_plus = np.array([2.0, 5.0, 5.0, 1.0, 5.0])
    r_minus = np.zeros(5)
    base = set(select_top(r_plus, r_minus, 3))
    perm = np.array([3, 0, 4, 1, 2])
    again = {int(perm[k]) for k in select_top(r_plus[perm], r_minus[perm], 3)}
    assert base == again == {1, 2, 4}


def test_only_selected_directions_contribute():
    rng = np.random.default_rng(0)
    deltas = rng.standard_normal((6, 2, 3))
    r_plus, r_minus = rng.standard_normal(6), rng.standard_normal(6)
    step, sigma_r, selected, _ = ars_update(deltas, r_plus, r_minus, b=2, alpha=0.3)
    rebuilt = sum(0.3 / (2 * sigma_r) * (r_plus[k] - r_minus[k]) * deltas[k] for k in selected)
    assert np.allclose(step, rebuilt, rtol=1e-13, atol=0)
    others = [k for k in range(6) if k not in selected]
    changed = r_plus.copy()
    changed[others] = np.minimum(changed[others], -100.0)
    changed_minus = r_minus.copy()
    changed_minus[others] = -100.0
    step2, *_ = ars_update(deltas, changed, changed_minus, b=2, alpha=0.3)
    assert np.array_equal(step, step2)


def test_full_b_matches_brs_with_sigma_scaling():
    rng = np.random.default_rng(1)
    deltas = rng.standard_normal((4, 1, 3))
    r_plus, r_minus = rng.standard_normal(4), rng.standard_normal(4)
    step, sigma_r, _, _ = ars_update(deltas, r_plus, r_minus, b=4, alpha=0.5)
    assert np.allclose(step, brs_update(deltas, r_plus, r_minus, 0.5) / sigma_r, rtol=1e-13)


@pytest.mark.parametrize("c", [0.01, 1.0, 1000.0])
def test_update_is_scale_invariant(c):
    rng = np.random.default_rng(2)
    deltas = rng.standard_normal((5, 2, 2))
    r_plus, r_minus = rng.standard_normal(5), rng.standard_normal(5)
    base, *_ = ars_update(deltas, r_plus, r_minus, b=3, alpha=0.1)
    scaled, *_ = ars_update(deltas, c * r_plus, c * r_minus, b=3, alpha=0.1)
    assert np.max(np.abs(scaled - base)) <= 1e-12 * np.max(np.abs(base))


def test_scale_invariance_through_rollouts():
    env = PointMassEnv(horizon=30, noise_std=0.02)
    config = ArsConfig(alpha=0.05, nu=0.1, num_directions=4, top_b=2, version="V1t", table_length=10**5)
    table = build_table(SeedHierarchy(0).table_seed, config.table_length)
    params = PolicyParams.zeros(2, 4, "V1t").with_gain(0.1 * np.ones((2, 4)))
    steps = {}
    for c in (0.01, 1.0, 1000.0):
        pool = WorkerPool(ScaledEnv(env, c), table, 1)
        new, _, rec = ars_step(params, RunningStat.empty(4), config, pool, 0)
        steps[c] = new.M - params.M
    for c in (0.01, 1000.0):
        assert np.max(np.abs(steps[c] - steps[1.0])) <= 1e-12 * np.max(np.abs(steps[1.0]))


def test_brs_matches_smoothed_gradient():
    rng = np.random.default_rng(3)
    theta_star = rng.standard_normal(10)
    theta = np.zeros(10)
    nu = 0.1
    deltas = rng.standard_normal((100_000, 10))
    f = lambda t: -np.sum((t - theta_star) ** 2, axis=-1)  # noqa: E731
    step = brs_update(deltas, f(theta + nu * deltas), f(theta - nu * deltas), alpha=1.0)
    grad = -2 * (theta - theta_star)
    assert step @ grad / (np.linalg.norm(step) * np.linalg.norm(grad)) >= 0.995


def test_brs_step_moves_uphill():
    theta_star = np.array([1.0, -2.0, 0.5])
    oracle = lambda t: -float(np.sum((t - theta_star) ** 2))  # noqa: E731
    config = ArsConfig(alpha=0.5, nu=0.05, num_directions=16)
    table = build_table(0, 10_000)
    theta = np.zeros(3)
    stream = make_generator(1)
    for _ in range(100):
        theta = brs_step(theta, config, oracle, table, stream)
    assert np.linalg.norm(theta - theta_star) < 0.1


def test_zero_iterations_returns_zero_policy():
    res = train(ArsConfig(table_length=10**4), QuadraticEnv(), StopCondition(max_iterations=0))
    assert not res.params.M.any() and res.records == []


def test_episode_accounting_with_counting_env():
    env = CountingEnv(horizon=7)
    config = ArsConfig(num_directions=3, table_length=10**4)
    res = train(config, env, StopCondition(max_iterations=5))
    assert [r.episodes for r in res.records] == [6 * j for j in range(1, 6)]
    assert env.resets == 30
    assert res.records[-1].timesteps == env.steps == 30 * 7


def test_evaluation_does_not_count_toward_the_budget():
    env = CountingEnv(horizon=7)
    config = ArsConfig(num_directions=2, table_length=10**4, eval_rollouts=5)
    res = train(config, env, StopCondition(max_iterations=4), eval_every=2)
    assert res.records[-1].episodes == 16
    assert env.resets == 16 + 3 * 5
    assert [p.iteration for p in res.curve] == [0, 2, 4]


def test_budget_stops():
    res = train(ArsConfig(num_directions=2, table_length=10**4), QuadraticEnv(horizon=10),
                StopCondition(max_timesteps=95))
    assert res.records[-1].timesteps >= 95 > res.records[-2].timesteps


def test_reward_threshold_stop():
    config = ArsConfig(table_length=10**5, eval_rollouts=1)
    res = train(config, QuadraticEnv(seed=1), StopCondition(max_iterations=500, reward_threshold=-0.5), eval_every=5)
    assert res.curve[-1].eval_reward >= -0.5
    assert len(res.records) < 500


def test_threshold_requires_evaluation():
    with pytest.raises(ConfigError):
        train(ArsConfig(table_length=10**4), QuadraticEnv(), StopCondition(reward_threshold=0.0))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_quadratic_reference_run(seed):
    config = ArsConfig(alpha=0.02, nu=0.02, num_directions=8, master_seed=seed, table_length=10**6)
    res = train(config, QuadraticEnv(seed=seed), StopCondition(max_iterations=200), eval_every=200)
    assert res.curve[-1].eval_reward >= -1e-2


@pytest.mark.parametrize("env_name", ["quadratic", "point-mass"])
@pytest.mark.parametrize("pair", [("V1", "V1t"), ("V2", "V2t")])
def test_truncated_variant_with_full_b_is_identical(env_name, pair):
    for seed in range(2):
        a, b = (
            train(ArsConfig(version=v, master_seed=seed, table_length=10**5), make_env(env_name),
                  StopCondition(max_iterations=20))
            for v in pair
        )
        assert records_equal(a.records, b.records)
        assert np.array_equal(a.params.M, b.params.M)


def test_v2_statistics_count_every_training_state():
    env = QuadraticEnv(horizon=6)
    res = train(ArsConfig(version="V2", num_directions=3, table_length=10**4), env, StopCondition(max_iterations=4))
    assert res.stat.count == 2 * 3 * 6 * 4
    assert np.array_equal(res.params.sigma_diag, res.stat.m2 / res.stat.count)


def test_v2_rejected_on_lqr():
    with pytest.raises(ConfigError):
        train(ArsConfig(version="V2", table_length=10**4), make_env("lqr-paper"), StopCondition(max_iterations=1))


@pytest.mark.parametrize("kwargs", [
    dict(alpha=0.0), dict(nu=-1.0), dict(num_directions=0), dict(top_b=3, num_directions=2, version="V1t"),
    dict(top_b=1, num_directions=2, version="V1"),
])
def test_bad_config(kwargs):
    with pytest.raises(ConfigError):
        ArsConfig(**kwargs)


def test_stop_condition_needs_a_limit():
    with pytest.raises(ConfigError):
        StopCondition()


def test_perturbations_are_table_slices():
    config = ArsConfig(num_directions=2, table_length=1000)
    res = train(config, QuadraticEnv(), StopCondition(max_iterations=3))
    for rec in res.records:
        assert all(0 <= i <= 1000 - 4 for i in rec.indices)
