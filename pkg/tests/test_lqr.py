import math

import numpy as np
import pytest
import scipy.linalg
from scipy import optimize

from arsearch.envs import LqrInstance, make_lqr_paper_instance
from arsearch.lqr import (
    SingularEstimateError,
    SolverError,
    average_cost,
    collect_transitions,
    estimate_dynamics,
    evaluate_gain,
    is_stable,
    nominal_synthesis,
    optimal_cost,
    solve_lyapunov,
    solve_riccati,
    spectral_radius,
)

PAPER = make_lqr_paper_instance()


def scalar(a, b=1.0, q=1.0, r=1.0):
    return LqrInstance(np.array([[a]]), np.array([[b]]), np.array([[q]]), np.array([[r]]))


def test_scalar_riccati_against_bisection():
    # fixed point of p = q + a^2 p - (a b p)^2 / (r + b^2 p) with a=2, b=q=r=1
    root = optimize.brentq(lambda p: 1 + 4 * p - 4 * p * p / (1 + p) - p, 1.0, 100.0, xtol=1e-15)
    sol = solve_riccati(scalar(2.0))
    assert sol.P[0, 0] == pytest.approx(root, rel=1e-10)
    assert root == pytest.approx(2 + math.sqrt(5), rel=1e-12)
    assert sol.K_opt[0, 0] == pytest.approx(-2 * root / (1 + root), rel=1e-10)


def test_benchmark_instance_riccati():
    sol = solve_riccati(PAPER)
    assert sol.residual <= 1e-12
    ref = scipy.linalg.solve_discrete_are(PAPER.A, PAPER.B, PAPER.Q, PAPER.R)
    assert np.max(np.abs(sol.P - ref)) <= 1e-9 * np.max(np.abs(ref))
    assert is_stable(PAPER, sol.K_opt)


def test_riccati_against_scipy_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(5):
        n, p = 4, 2
        A = rng.standard_normal((n, n)) / 2
        B = rng.standard_normal((n, p))
        L = rng.standard_normal((n, n))
        inst = LqrInstance(A, B, L @ L.T + 0.1 * np.eye(n), np.eye(p))
        sol = solve_riccati(inst)
        ref = scipy.linalg.solve_discrete_are(A, B, inst.Q, inst.R)
        assert np.allclose(sol.P, ref, rtol=1e-8, atol=1e-10)


def test_unstabilizable_system_reports_failure():
    # the unstable mode is not reachable from the input
    inst = LqrInstance(np.diag([2.0, 0.5]), np.array([[0.0], [1.0]]), np.eye(2), np.eye(1))
    with pytest.raises(SolverError):
        solve_riccati(inst, max_iter=2000)


def test_spectral_radius_of_benchmark_instance():
    assert abs(spectral_radius(PAPER.A) - 1.024) <= 1e-3


def test_spectral_radius_gelfand_cross_check():
    rng = np.random.default_rng(1)
    for _ in range(5):
        M = rng.standard_normal((4, 4))
        k = 256
        power = np.linalg.matrix_power(M / np.linalg.norm(M, 2), k)
        gelfand = np.linalg.norm(M, 2) * np.linalg.norm(power, 2) ** (1 / k)
        assert spectral_radius(M) == pytest.approx(gelfand, rel=0.02)


def test_spectral_radius_rejects_nan():
    with pytest.raises(ValueError):
        spectral_radius(np.array([[np.nan]]))


def test_lyapunov_against_scipy():
    rng = np.random.default_rng(2)
    F = rng.standard_normal((3, 3))
    F *= 0.95 / spectral_radius(F)
    W = np.eye(3)
    assert np.allclose(solve_lyapunov(F, W), scipy.linalg.solve_discrete_lyapunov(F, W), rtol=1e-9, atol=1e-12)


def test_unstable_gain_costs_inf():
    assert average_cost(PAPER, np.zeros((3, 3))) == math.inf
    ev = evaluate_gain(PAPER, np.zeros((3, 3)))
    assert not ev.stable and ev.relative_cost == math.inf


def test_optimal_gain_has_relative_cost_one():
    sol = solve_riccati(PAPER)
    assert evaluate_gain(PAPER, sol.K_opt).relative_cost == pytest.approx(1.0, abs=1e-12)


def test_optimal_gain_beats_perturbations():
    rng = np.random.default_rng(3)
    K = solve_riccati(PAPER).K_opt
    ref = optimal_cost(PAPER)
    for _ in range(20):
        assert average_cost(PAPER, K + 0.01 * rng.standard_normal((3, 3))) >= ref


def monte_carlo_cost(inst, K, steps, chains, seed):
    rng = np.random.default_rng(seed)
    F = inst.A + inst.B @ K
    C = inst.Q + K.T @ inst.R @ K
    x = rng.standard_normal((chains, inst.state_dim))
    total = 0.0
    for _ in range(steps):
        total += np.einsum("ci,ij,cj->", x, C, x)
        x = x @ F.T + inst.noise_std * rng.standard_normal(x.shape)
    return total / (steps * chains)


def test_average_cost_matches_monte_carlo():
    rng = np.random.default_rng(4)
    checked = 0
    while checked < 10:
        K = -PAPER.A + 0.3 * rng.standard_normal((3, 3))
        if spectral_radius(PAPER.A + K) > 0.9:
            continue
        exact = average_cost(PAPER, K)
        mc = monte_carlo_cost(PAPER, K, 10_000, 20, checked)
        assert abs(mc - exact) / exact < 0.05
        checked += 1


def test_noiseless_identification_is_exact():
    inst = PAPER.with_noise(noise_std=0.0)
    data = collect_transitions(inst, 5, 10, np.random.default_rng(5))
    A_hat, B_hat = estimate_dynamics(*data)
    assert np.max(np.abs(A_hat - inst.A)) < 1e-8
    assert np.max(np.abs(B_hat - inst.B)) < 1e-8


def test_transition_count():
    X, U, Xn = collect_transitions(PAPER, 7, 10, np.random.default_rng(6))
    assert X.shape == (63, 3) and U.shape == (63, 3) and Xn.shape == (63, 3)


def test_too_few_transitions():
    X, U, Xn = collect_transitions(PAPER, 1, 4, np.random.default_rng(7))
    with pytest.raises(SingularEstimateError):
        estimate_dynamics(X, U, Xn)


def test_nominal_control_with_plenty_of_data():
    ref = optimal_cost(PAPER)
    stable = 0
    for t in range(100):
        data = collect_transitions(PAPER, 100, 10, np.random.default_rng(100 + t))
        stable += nominal_synthesis(data, PAPER, ref).stable
    assert stable >= 95


def test_nominal_accepts_triples():
    X, U, Xn = collect_transitions(PAPER, 20, 10, np.random.default_rng(8))
    a = nominal_synthesis((X, U, Xn), PAPER)
    b = nominal_synthesis(list(zip(X, U, Xn)), PAPER)
    assert np.array_equal(a.K, b.K)
