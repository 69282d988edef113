"""Environment contract, rollouts, and the built-in environments.

An environment is stateless between calls: ``reset(rng)`` draws an initial
state and ``step(x, u, rng)`` returns ``(next_state, reward, done)``. All
randomness comes from the generator handed in by :func:`rollout`, which is
keyed on the rollout seed, so a rollout is a pure function of its inputs.
Rewards are always to be maximized; LQR costs are negated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from arsearch.rng import ConfigError, make_generator

DIVERGENCE_NORM = 1e10
_DIVERGENCE_SQ = DIVERGENCE_NORM ** 2


@dataclass(frozen=True)
class EnvSpec:
    state_dim: int
    action_dim: int
    horizon: int
    terminates: bool = False

    def __post_init__(self):
        if self.state_dim <= 0 or self.action_dim <= 0:
            raise ConfigError("environment dimensions must be positive")
        if self.horizon < 0:
            raise ConfigError("horizon must be non-negative")


@dataclass
class RolloutResult:
    total_reward: float
    steps_used: int
    diverged: bool = False
    trace: list | None = None
    states: np.ndarray | None = field(default=None, repr=False)


class Env:
    spec: EnvSpec
    name = "env"

    @property
    def base(self) -> "Env":
        """The environment with all training-only wrappers removed."""
        return self

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def step(self, x: np.ndarray, u: np.ndarray, rng: np.random.Generator):
        raise NotImplementedError


def rollout(env: Env, actor, rollout_seed: int, horizon: int | None = None,
            record_trace: bool = False, collect_states: bool = False) -> RolloutResult:
    """Run one episode of at most ``horizon`` steps.

    ``actor`` maps a state to an action. If the state leaves the ball of
    radius ``DIVERGENCE_NORM`` or anything turns non-finite, the episode stops,
    is flagged as diverged, and each remaining step is charged the worst step
    reward seen so far. Only the steps actually simulated count in
    ``steps_used``.
    """
    H = env.spec.horizon if horizon is None else int(horizon)
    rng = make_generator(rollout_seed)
    trace = [] if record_trace else None
    states = [] if collect_states else None
    total, worst, steps, diverged = 0.0, math.inf, 0, False
    if H <= 0:
        return RolloutResult(0.0, 0, False, trace, np.empty((0, env.spec.state_dim)) if collect_states else None)
    x = env.reset(rng)
    step = env.step
    while steps < H:
        u = actor(x)
        if type(u) is not np.ndarray:
            u = np.asarray(u, dtype=float)
        # a NaN/inf anywhere makes the squared norm non-finite
        if not math.isfinite(u @ u):
            diverged = True
            break
        if collect_states:
            states.append(x)
        x_next, r, done = step(x, u, rng)
        steps += 1
        total += r
        if r < worst:
            worst = r
        if record_trace:
            trace.append((x, u, r))
        x = x_next
        if not (math.isfinite(r) and float(x @ x) <= _DIVERGENCE_SQ):
            diverged = True
            break
        if done:
            break
    if diverged and steps < H:
        total += (H - steps) * (worst if math.isfinite(worst) else -math.inf)
    if collect_states:
        states = np.array(states).reshape(-1, env.spec.state_dim)
    return RolloutResult(float(total), steps, diverged, trace, states)


# --- LQR -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LqrInstance:
    """``x' = A x + B u + w`` with cost ``x'Qx + u'Ru``; ``w ~ N(0, noise_std^2 I)``, ``x0 ~ N(0, x0_std^2 I)``."""

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    noise_std: float = 1.0
    x0_std: float = 1.0

    def __post_init__(self):
        A, B, Q, R = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (self.A, self.B, self.Q, self.R))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        n, p = B.shape
        if A.shape != (n, n) or Q.shape != (n, n) or R.shape != (p, p):
            raise ConfigError(f"inconsistent LQR shapes A{A.shape} B{B.shape} Q{Q.shape} R{R.shape}")
        if not (np.allclose(Q, Q.T, atol=1e-12) and np.allclose(R, R.T, atol=1e-12)):
            raise ConfigError("Q and R must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-10:
            raise ConfigError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(R).min() < 1e-10:
            raise ConfigError("R must be positive definite")
        if self.noise_std < 0 or self.x0_std < 0:
            raise ConfigError("noise scales must be non-negative")

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def action_dim(self) -> int:
        return self.B.shape[1]

    def with_noise(self, noise_std: float | None = None, x0_std: float | None = None) -> "LqrInstance":
        return LqrInstance(
            self.A, self.B, self.Q, self.R,
            self.noise_std if noise_std is None else noise_std,
            self.x0_std if x0_std is None else x0_std,
        )


def make_lqr_paper_instance(noise_std: float = 1.0, x0_std: float = 1.0) -> LqrInstance:
    """The 3-state, marginally unstable benchmark instance (graph Laplacian-like A, B = I)."""
    A = np.array([[1.01, 0.01, 0.0], [0.01, 1.01, 0.01], [0.0, 0.01, 1.01]])
    return LqrInstance(A, np.eye(3), 1e-3 * np.eye(3), np.eye(3), noise_std, x0_std)


def lqr_step_reward(x, u, Q, R) -> float:
    """Negated quadratic stage cost ``-(x'Qx + u'Ru)``."""
    return -float(x @ Q @ x + u @ R @ u)


def load_lqr_instance(path) -> LqrInstance:
    """Read a plain-text instance.

    Layout (whitespace separated, ``#`` starts a comment): a header ``n p``,
    then A (n rows of n), B (n rows of p), Q (n rows of n), R (p rows of p),
    all row-major, optionally followed by ``noise_std x0_std``.
    """
    tokens = []
    for line in Path(path).read_text().splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    try:
        n, p = int(tokens[0]), int(tokens[1])
        vals = [float(t) for t in tokens[2:]]
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed LQR instance header") from exc
    sizes = [n * n, n * p, n * n, p * p]
    need = sum(sizes)
    if len(vals) not in (need, need + 2):
        raise ConfigError(f"{path}: expected {need} (or {need + 2}) numbers after header, got {len(vals)}")
    mats, pos = [], 0
    for size, shape in zip(sizes, [(n, n), (n, p), (n, n), (p, p)]):
        mats.append(np.array(vals[pos:pos + size]).reshape(shape))
        pos += size
    extra = vals[need:] or [1.0, 1.0]
    return LqrInstance(*mats, noise_std=extra[0], x0_std=extra[1])


def save_lqr_instance(inst: LqrInstance, path) -> None:
    rows = [f"{inst.state_dim} {inst.action_dim}"]
    for name, mat in (("A", inst.A), ("B", inst.B), ("Q", inst.Q), ("R", inst.R)):
        rows.append(f"# {name}")
        rows.extend(" ".join(repr(float(v)) for v in row) for row in mat)
    rows.append("# noise_std x0_std")
    rows.append(f"{inst.noise_std!r} {inst.x0_std!r}")
    Path(path).write_text("\n".join(rows) + "\n")


class LqrEnv(Env):
    name = "lqr"

    def __init__(self, instance: LqrInstance, horizon: int = 300):
        self.instance = instance
        self.spec = EnvSpec(instance.state_dim, instance.action_dim, horizon)

    def reset(self, rng):
        return self.instance.x0_std * rng.standard_normal(self.spec.state_dim)

    def step(self, x, u, rng):
        inst = self.instance
        r = -float(x @ inst.Q @ x + u @ inst.R @ u)
        x_next = inst.A @ x + inst.B @ u
        if inst.noise_std > 0:
            x_next += inst.noise_std * rng.standard_normal(self.spec.state_dim)
        return x_next, r, False


# --- desk-scale test environments -----------------------------------------------


class QuadraticEnv(Env):
    """Deterministic integrator ``x' = x + G u`` rewarded with ``-||x'||^2``.

    ``G`` (n x p, default the n x p identity) is the matrix the policy has to
    invert; with ``G = I`` the gain ``M = -I`` reaches the origin in one step.
    The initial state is drawn once per instance from ``seed``, so every
    rollout is identical given the policy. ``random_start=True`` instead draws
    ``x0`` from each rollout's stream.
    """

    name = "quadratic"

    def __init__(self, n: int = 2, p: int | None = None, target=None, horizon: int = 20,
                 x0_std: float = 1.0, seed: int = 0, random_start: bool = False):
        p = n if p is None else p
        self.G = np.eye(n, p) if target is None else np.asarray(target, dtype=float)
        if self.G.shape != (n, p):
            raise ConfigError(f"target matrix must be {n}x{p}, got {self.G.shape}")
        self.x0_std, self.random_start = x0_std, random_start
        self.x0 = x0_std * make_generator(seed, 0).standard_normal(n)
        self.spec = EnvSpec(n, p, horizon)

    def reset(self, rng):
        if self.random_start:
            return self.x0_std * rng.standard_normal(self.spec.state_dim)
        return self.x0.copy()

    def step(self, x, u, rng):
        x_next = x + self.G @ u
        return x_next, -float(x_next @ x_next), False


class PointMassEnv(Env):
    """Planar point mass; state ``(px, py, vx, vy)``, action = acceleration.

    Every simulated step earns ``survival_bonus`` on top of the task reward
    ``-(||p'||^2 + control_cost ||u||^2)``. The episode ends once any position
    coordinate leaves ``[-bound, bound]``.
    """

    name = "point-mass"

    def __init__(self, horizon: int = 100, dt: float = 0.1, bound: float = 1.0,
                 survival_bonus: float = 1.0, control_cost: float = 0.01,
                 init_std: float = 0.1, noise_std: float = 0.0, x0=None):
        self.dt, self.bound = dt, bound
        self.survival_bonus, self.control_cost = survival_bonus, control_cost
        self.init_std, self.noise_std = init_std, noise_std
        self.x0 = None if x0 is None else np.asarray(x0, dtype=float)
        self.spec = EnvSpec(4, 2, horizon, terminates=True)

    def reset(self, rng):
        x = self.init_std * rng.standard_normal(4)
        if self.x0 is not None:
            x = x + self.x0
        return x

    def step(self, x, u, rng):
        vel = x[2:] + self.dt * u
        if self.noise_std > 0:
            vel = vel + self.noise_std * rng.standard_normal(2)
        pos = x[:2] + self.dt * vel
        task = -float(pos @ pos + self.control_cost * (u @ u))
        done = bool(np.any(np.abs(pos) > self.bound))
        return np.concatenate([pos, vel]), task + self.survival_bonus, done


class BonusSubtracted(Env):
    """Training-time view of ``inner`` with a constant per-step bonus removed."""

    def __init__(self, inner: Env, bonus_per_step: float):
        if bonus_per_step < 0:
            raise ConfigError("bonus must be non-negative")
        self.inner, self.bonus = inner, float(bonus_per_step)
        self.spec = inner.spec
        self.name = inner.name

    @property
    def base(self):
        return self.inner.base

    def reset(self, rng):
        return self.inner.reset(rng)

    def step(self, x, u, rng):
        x_next, r, done = self.inner.step(x, u, rng)
        return x_next, r - self.bonus, done


def subtract_bonus_wrapper(env: Env, bonus_per_step: float) -> Env:
    return BonusSubtracted(env, bonus_per_step)


def make_quadratic_env(n: int = 2, p: int | None = None, target=None, **kwargs) -> QuadraticEnv:
    return QuadraticEnv(n, p, target, **kwargs)


def make_point_mass_env(**kwargs) -> PointMassEnv:
    return PointMassEnv(**kwargs)


ENV_NAMES = ("lqr-paper", "lqr-file", "quadratic", "point-mass")


def make_env(name: str, horizon: int | None = None, **kwargs) -> Env:
    """Build an environment by its config name.

    ``lqr-file`` needs ``path=``; ``noise_std``/``x0_std`` override the LQR
    noise scales. For ``point-mass``, ``subtract_bonus=True`` returns the
    training view with the survival bonus removed.
    """
    if horizon is not None:
        kwargs["horizon"] = int(horizon)
    if name == "lqr-paper" or name == "lqr-file":
        noise = {k: kwargs.pop(k) for k in ("noise_std", "x0_std") if k in kwargs}
        if name == "lqr-file" and "path" not in kwargs:
            raise ConfigError("lqr-file needs path=<instance file>")
        inst = make_lqr_paper_instance() if name == "lqr-paper" else load_lqr_instance(kwargs.pop("path"))
        return LqrEnv(inst.with_noise(**noise), **kwargs)
    if name == "quadratic":
        return make_quadratic_env(**kwargs)
    if name == "point-mass":
        subtract = kwargs.pop("subtract_bonus", False)
        env = make_point_mass_env(**kwargs)
        return subtract_bonus_wrapper(env, env.survival_bonus) if subtract else env
    raise ConfigError(f"unknown environment {name!r}; choose from {', '.join(ENV_NAMES)}")
