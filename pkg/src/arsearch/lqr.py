"""Ground truth for the LQR benchmark.

Gains follow the policy convention ``u = K x`` (the ARS gain ``M`` is ``K``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from arsearch.envs import LqrEnv, LqrInstance, rollout

STABILITY_MARGIN = 1e-9


class SolverError(RuntimeError):
    """A fixed-point iteration failed to converge."""


class SingularEstimateError(ValueError):
    """The identification regression is rank deficient."""


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    P: np.ndarray
    K_opt: np.ndarray
    iterations_used: int
    residual: float


@dataclass(frozen=True, eq=False)
class GainEvaluation:
    K: np.ndarray
    stable: bool
    avg_cost: float
    relative_cost: float
    spectral_radius: float = np.nan
    A_hat: np.ndarray | None = None
    B_hat: np.ndarray | None = None


def _riccati_map(P, A, B, Q, R):
    BtPA = B.T @ P @ A
    gain = np.linalg.solve(R + B.T @ P @ B, BtPA)
    nxt = Q + A.T @ P @ A - BtPA.T @ gain
    return 0.5 * (nxt + nxt.T), -gain


def solve_riccati(inst: LqrInstance, tol: float = 1e-12, max_iter: int = 1_000_000,
                  A=None, B=None) -> RiccatiSolution:
    """Value iteration ``P <- Q + A'PA - A'PB (R + B'PB)^-1 B'PA`` from ``P = Q``.

    Stops once the Frobenius defect of the fixed-point equation is at most
    ``tol * max(1, ||P||_F)``; the returned ``P`` is the iterate whose defect
    was measured. ``A``/``B`` override the instance dynamics (nominal control).
    """
    A = inst.A if A is None else np.asarray(A, dtype=float)
    B = inst.B if B is None else np.asarray(B, dtype=float)
    Q, R = inst.Q, inst.R
    P = Q.copy()
    for it in range(1, max_iter + 1):
        nxt, K = _riccati_map(P, A, B, Q, R)
        defect = float(np.linalg.norm(nxt - P))
        if not np.isfinite(defect):
            break
        if defect <= tol * max(1.0, float(np.linalg.norm(P))):
            return RiccatiSolution(P, K, it, defect)
        P = nxt
    raise SolverError(f"Riccati iteration did not converge in {max_iter} iterations (system not stabilizable?)")


def spectral_radius(M) -> float:
    """Largest eigenvalue modulus (LAPACK dense eigensolver)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.all(np.isfinite(M)):
        raise ValueError("spectral_radius needs finite entries")
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def closed_loop(inst: LqrInstance, K) -> np.ndarray:
    return inst.A + inst.B @ np.asarray(K, dtype=float)


def is_stable(inst: LqrInstance, K) -> bool:
    K = np.asarray(K, dtype=float)
    if not np.all(np.isfinite(K)):
        return False
    return spectral_radius(closed_loop(inst, K)) < 1.0 - STABILITY_MARGIN


def solve_lyapunov(F, W, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Stationary covariance ``X = F X F' + W`` by squaring (Smith) iteration.

    Each pass doubles the number of summed terms of ``sum_k F^k W F'^k``.
    """
    X, Fk = W.copy(), F.copy()
    for _ in range(max_iter):
        inc = Fk @ X @ Fk.T
        X = X + inc
        if np.linalg.norm(inc) <= tol * max(1.0, float(np.linalg.norm(X))):
            return 0.5 * (X + X.T)
        Fk = Fk @ Fk
        if not np.all(np.isfinite(Fk)):
            break
    raise SolverError("Lyapunov iteration did not converge")


def average_cost(inst: LqrInstance, K, tol: float = 1e-12) -> float:
    """Infinite-horizon average cost of ``u = K x``; ``inf`` if not stabilizing."""
    K = np.asarray(K, dtype=float)
    if not is_stable(inst, K):
        return np.inf
    n = inst.state_dim
    X = solve_lyapunov(closed_loop(inst, K), inst.noise_std ** 2 * np.eye(n), tol)
    return float(np.trace((inst.Q + K.T @ inst.R @ K) @ X))


def optimal_cost(inst: LqrInstance) -> float:
    return average_cost(inst, solve_riccati(inst).K_opt)


def evaluate_gain(inst: LqrInstance, K, reference_cost: float | None = None) -> GainEvaluation:
    """Stability, average cost and cost relative to the optimal gain."""
    K = np.asarray(K, dtype=float)
    if reference_cost is None:
        reference_cost = optimal_cost(inst)
    finite = bool(np.all(np.isfinite(K)))
    rho = spectral_radius(closed_loop(inst, K)) if finite else np.inf
    cost = average_cost(inst, K) if finite else np.inf
    stable = bool(np.isfinite(cost))
    rel = cost / reference_cost if stable and reference_cost > 0 else (1.0 if stable else np.inf)
    return GainEvaluation(K, stable, cost, rel, rho)


def collect_transitions(inst: LqrInstance, n_rollouts: int, length: int, rng: np.random.Generator,
                        input_std: float = 1.0):
    """Excite the true system with ``u ~ N(0, input_std^2 I)`` and return ``(X, U, X_next)``.

    Costs ``n_rollouts * length`` timesteps of the oracle.
    """
    env = LqrEnv(inst, horizon=length)
    p = inst.action_dim
    xs, us, xn = [], [], []
    for _ in range(n_rollouts):
        seed = int(rng.integers(0, 2**62))
        inputs = input_std * rng.standard_normal((length, p))
        it = iter(inputs)
        res = rollout(env, lambda x: next(it), seed, length, record_trace=True)
        states = [s for s, _, _ in res.trace]
        # a length-H episode observes H states, hence H - 1 transitions
        xs.extend(states[:-1])
        us.extend(u for _, u, _ in res.trace[:-1])
        xn.extend(states[1:])
    return np.array(xs), np.array(us), np.array(xn)


def estimate_dynamics(X, U, X_next) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares ``[A B]`` from stacked transitions."""
    X, U, X_next = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (X, U, X_next))
    Z = np.hstack([X, U])
    n, p = X.shape[1], U.shape[1]
    if Z.shape[0] < n + p or np.linalg.matrix_rank(Z) < n + p:
        raise SingularEstimateError(
            f"{Z.shape[0]} transitions with regressor rank {np.linalg.matrix_rank(Z)} < {n + p}"
        )
    theta, *_ = np.linalg.lstsq(Z, X_next, rcond=None)
    return theta[:n].T, theta[n:].T


def nominal_synthesis(transitions, inst: LqrInstance, reference_cost: float | None = None) -> GainEvaluation:
    """Certainty-equivalent control: fit ``(A, B)``, solve Riccati on the fit, score on ``inst``.

    ``transitions`` is ``(X, U, X_next)`` arrays or a list of ``(x, u, x_next)``
    triples. If the fitted model is not stabilizable the result is reported
    as unstable with a zero gain.
    """
    if isinstance(transitions, tuple) and len(transitions) == 3 and np.ndim(transitions[0]) == 2:
        X, U, Xn = transitions
    else:
        triples = list(transitions)
        if not triples:
            raise SingularEstimateError("no transitions")
        X, U, Xn = (np.array(col) for col in zip(*triples))
    A_hat, B_hat = estimate_dynamics(X, U, Xn)
    try:
        K = solve_riccati(inst, A=A_hat, B=B_hat, tol=1e-10, max_iter=100_000).K_opt
    except (SolverError, np.linalg.LinAlgError):
        K = np.zeros((inst.action_dim, inst.state_dim))
    ev = evaluate_gain(inst, K, reference_cost)
    return GainEvaluation(ev.K, ev.stable, ev.avg_cost, ev.relative_cost, ev.spectral_radius, A_hat, B_hat)
