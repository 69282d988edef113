import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from arsearch.policy import (
    PolicyParams,
    RunningStat,
    Version,
    act,
    freeze_stats,
    load_policy,
    push_state,
    save_policy,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_identity_gain():
    params = PolicyParams.zeros(2, 2).with_gain(np.eye(2))
    assert np.array_equal(act(params, None, 0, [3.0, -1.0]), [3.0, -1.0])


def test_hand_whitening():
    params = PolicyParams(np.eye(1), np.array([5.0]), np.array([4.0]), Version.V2)
    assert np.array_equal(act(params, None, 0, [9.0]), [2.0])


def test_zero_variance_coordinate_is_ignored():
    params = PolicyParams(np.ones((1, 2)), np.array([1.0, 7.0]), np.array([1.0, 0.0]), Version.V2)
    assert np.array_equal(act(params, None, 0, [3.0, 1e6]), [2.0])
    tiny = params.with_stats(params.mu, np.array([1.0, 0.99e-8]))
    assert np.array_equal(act(tiny, None, 0, [3.0, 1e6]), [2.0])


def test_unwhitened_versions_ignore_statistics():
    params = PolicyParams(np.eye(2), np.array([3.0, 3.0]), np.array([9.0, 9.0]), Version.V1t)
    assert np.array_equal(act(params, None, 0, [1.0, 2.0]), [1.0, 2.0])


def test_sign_and_nu():
    M = np.array([[1.0, 2.0]])
    delta = np.array([[0.5, -1.0]])
    params = PolicyParams.zeros(1, 2).with_gain(M)
    x = np.array([2.0, 1.0])
    for sign in (1, -1, 0):
        expected = (M + sign * 0.1 * delta) @ x
        assert np.allclose(act(params, delta, sign, x, nu=0.1), expected, rtol=0, atol=1e-15)


def test_dimension_mismatch():
    params = PolicyParams.zeros(2, 3)
    with pytest.raises(ValueError):
        act(params, None, 0, np.zeros(2))
    with pytest.raises(ValueError):
        act(params, np.zeros((3, 2)), 1, np.zeros(3), nu=0.1)


def test_negative_sigma_rejected():
    with pytest.raises(ValueError):
        PolicyParams(np.zeros((1, 1)), np.zeros(1), np.array([-1.0]))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_act_is_linear_in_the_state(p, n, seed):
    rng = np.random.default_rng(seed)
    params = PolicyParams.zeros(p, n, Version.V1).with_gain(rng.standard_normal((p, n)))
    x, y = rng.standard_normal(n), rng.standard_normal(n)
    a, b = rng.standard_normal(2)
    lhs = act(params, None, 0, a * x + b * y)
    rhs = a * act(params, None, 0, x) + b * act(params, None, 0, y)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_whitening_identity_matches_explicit_formula():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(10_000):
        p, n = rng.integers(1, 5, 2)
        M, delta = rng.standard_normal((p, n)), rng.standard_normal((p, n))
        nu = rng.uniform(0.001, 1.0)
        mu, sigma = rng.standard_normal(n), rng.uniform(0.01, 10.0, n)
        x = rng.standard_normal(n) * 3
        sign = int(rng.choice([-1, 1]))
        got = act(PolicyParams(M, mu, sigma, Version.V2), delta, sign, x, nu=nu)
        want = (M + sign * nu * delta) @ np.diag(sigma ** -0.5) @ (x - mu)
        worst = max(worst, np.max(np.abs(got - want)) / max(np.max(np.abs(want)), 1e-300))
    assert worst <= 1e-12


def test_running_stat_matches_two_pass():
    rng = np.random.default_rng(2)
    states = rng.standard_normal((10_000, 6)) * rng.uniform(0.1, 100, 6) + rng.uniform(-50, 50, 6)
    stat = RunningStat.empty(6)
    for x in states:
        push_state(stat, x)
    mean, var = freeze_stats(stat)
    assert stat.count == 10_000
    assert np.max(np.abs(mean - states.mean(0)) / np.abs(states.mean(0))) < 1e-10
    assert np.max(np.abs(var - states.var(0)) / states.var(0)) < 1e-10


def test_empty_stat_freezes_to_identity():
    mean, var = freeze_stats(RunningStat.empty(3))
    assert np.array_equal(mean, np.zeros(3))
    assert np.array_equal(var, np.ones(3))


def test_merge_with_empty_is_identity():
    stat = RunningStat.from_batch(np.arange(12.0).reshape(4, 3))
    before = stat.copy()
    assert stat.merge(RunningStat.empty(3)).equals(before)
    assert RunningStat.empty(3).merge(before).equals(before)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(3, 60), st.just(3)), elements=finite), st.data())
def test_merge_of_random_splits_matches_batch(states, data):
    cuts = sorted(data.draw(st.lists(st.integers(0, len(states)), min_size=2, max_size=2)))
    parts = np.split(states, cuts)
    whole = RunningStat.from_batch(states)
    left = RunningStat.from_batch(parts[0]).merge(RunningStat.from_batch(parts[1])).merge(RunningStat.from_batch(parts[2]))
    right = RunningStat.from_batch(parts[0]).merge(RunningStat.from_batch(parts[1]).merge(RunningStat.from_batch(parts[2])))
    scale = 1.0 + np.abs(states).max() ** 2 * len(states)
    for s in (left, right):
        assert s.count == whole.count
        assert np.allclose(s.mean, whole.mean, rtol=1e-10, atol=1e-10 * (1 + np.abs(states).max()))
        assert np.allclose(s.m2, whole.m2, rtol=1e-9, atol=1e-10 * scale)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 40), st.just(2)), elements=finite))
def test_push_agrees_with_batch(states):
    stat = RunningStat.empty(2)
    for x in states:
        stat.push(x)
    whole = RunningStat.from_batch(states)
    scale = 1.0 + np.abs(states).max() ** 2 * len(states)
    assert stat.count == whole.count
    assert np.allclose(stat.mean, whole.mean, rtol=1e-10, atol=1e-10 * (1 + np.abs(states).max()))
    assert np.allclose(stat.m2, whole.m2, rtol=1e-9, atol=1e-10 * scale)
    assert np.all(stat.m2 >= -1e-9 * scale)


def test_checkpoint_roundtrip_is_exact(tmp_path):
    rng = np.random.default_rng(3)
    params = PolicyParams(rng.standard_normal((2, 3)), rng.standard_normal(3), rng.uniform(0, 2, 3), Version.V2t)
    save_policy(params, tmp_path / "a.policy")
    assert load_policy(tmp_path / "a.policy").same_as(params)


def test_checkpoint_rejects_foreign_file(tmp_path):
    (tmp_path / "x").write_text("something else 1\n")
    with pytest.raises(ValueError):
        load_policy(tmp_path / "x")


@pytest.mark.parametrize("text,expected", [("V1", Version.V1), ("v2t", Version.V2t), ("V1-t", Version.V1t)])
def test_version_parse(text, expected):
    assert Version.parse(text) is expected
