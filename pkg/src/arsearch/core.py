"""Basic Random Search and Augmented Random Search (V1, V1-t, V2, V2-t).

Updates deliberately carry no ``1/nu`` factor: the step size ``alpha``
absorbs it. Do not "fix" this.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, NamedTuple

import numpy as np

from arsearch.envs import Env, LqrEnv
from arsearch.executor import WorkerPool, WorkItem, evaluate_batch, merge_stats
from arsearch.policy import PolicyParams, RunningStat, Version, freeze_stats
from arsearch.rng import (
    DEFAULT_TABLE_LENGTH,
    ConfigError,
    NoiseTable,
    SeedHierarchy,
    build_table,
    draw_direction_index,
    slice_perturbation,
)

log = logging.getLogger(__name__)

SIGMA_R_FLOOR = 1e-12


@dataclass(frozen=True)
class ArsConfig:
    alpha: float = 0.02
    num_directions: int = 8
    nu: float = 0.02
    top_b: int | None = None
    version: Version = Version.V1
    horizon: int | None = None
    master_seed: int = 0
    table_length: int = DEFAULT_TABLE_LENGTH
    eval_rollouts: int = 100

    def __post_init__(self):
        object.__setattr__(self, "version", Version.parse(self.version))
        if self.top_b is None:
            object.__setattr__(self, "top_b", self.num_directions)
        if self.alpha <= 0 or self.nu <= 0:
            raise ConfigError("alpha and nu must be positive")
        if self.num_directions < 1:
            raise ConfigError("need at least one direction")
        if not 1 <= self.top_b <= self.num_directions:
            raise ConfigError(f"top_b must lie in [1, {self.num_directions}], got {self.top_b}")
        if self.top_b < self.num_directions and not self.version.allows_top_b:
            raise ConfigError(f"top_b < N is only allowed for V1t/V2t, not {self.version.value}")
        if self.horizon is not None and self.horizon < 0:
            raise ConfigError("horizon must be non-negative")
        if self.eval_rollouts < 1:
            raise ConfigError("eval_rollouts must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["version"] = self.version.value
        return d


@dataclass
class IterationRecord:
    iteration: int
    indices: list[int]
    r_plus: list[float]
    r_minus: list[float]
    selected: list[int]
    sigma_R: float
    skipped: bool
    episodes: int
    timesteps: int
    diverged: int = 0
    eval_reward: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class StopCondition:
    max_iterations: int | None = None
    max_episodes: int | None = None
    max_timesteps: int | None = None
    reward_threshold: float | None = None

    def __post_init__(self):
        limits = (self.max_iterations, self.max_episodes, self.max_timesteps)
        if all(v is None for v in limits) and self.reward_threshold is None:
            raise ConfigError("stop condition needs at least one limit")
        if any(v is not None and v < 0 for v in limits):
            raise ConfigError("stop limits must be non-negative")

    def exhausted(self, iteration: int, episodes: int, timesteps: int) -> bool:
        return (
            (self.max_iterations is not None and iteration >= self.max_iterations)
            or (self.max_episodes is not None and episodes >= self.max_episodes)
            or (self.max_timesteps is not None and timesteps >= self.max_timesteps)
        )


@dataclass(frozen=True)
class CurvePoint:
    iteration: int
    episodes: int
    timesteps: int
    eval_reward: float


class TrainResult(NamedTuple):
    params: PolicyParams
    records: list[IterationRecord]
    curve: list[CurvePoint]
    stat: RunningStat


# --- update rules ---------------------------------------------------------------


def select_top(r_plus, r_minus, b: int) -> np.ndarray:
    """Ordinals of the ``b`` directions with the largest ``max(r+, r-)``, ascending.

    Ties go to the smaller ordinal.
    """
    scores = np.maximum(np.asarray(r_plus, dtype=float), np.asarray(r_minus, dtype=float))
    order = np.argsort(-scores, kind="stable")
    return np.sort(order[:b])


def ars_update(deltas: np.ndarray, r_plus, r_minus, b: int, alpha: float):
    """Step ``alpha / (b sigma_R) * sum_k (r+_k - r-_k) delta_k`` over the top ``b`` directions.

    Returns ``(step, sigma_R, selected, skipped)``. ``sigma_R`` is the
    population standard deviation of the ``2b`` selected rewards; below
    ``SIGMA_R_FLOOR`` (or non-finite) the step is zero and ``skipped`` is set.
    The sum runs over selected directions in ascending ordinal, so ``b = N``
    reproduces the untruncated update bit for bit.
    """
    r_plus, r_minus = np.asarray(r_plus, dtype=float), np.asarray(r_minus, dtype=float)
    selected = select_top(r_plus, r_minus, b)
    with np.errstate(invalid="ignore"):
        sigma_r = float(np.std(np.concatenate([r_plus[selected], r_minus[selected]])))
    step = np.zeros(deltas.shape[1:])
    if not np.isfinite(sigma_r) or sigma_r < SIGMA_R_FLOOR:
        return step, sigma_r, selected, True
    scale = alpha / (b * sigma_r)
    for k in selected:
        step += (scale * (r_plus[k] - r_minus[k])) * deltas[k]
    return step, sigma_r, selected, False


def brs_update(deltas: np.ndarray, r_plus, r_minus, alpha: float) -> np.ndarray:
    """``alpha / N * sum_k (r+_k - r-_k) delta_k``."""
    diffs = np.asarray(r_plus, dtype=float) - np.asarray(r_minus, dtype=float)
    return (alpha / len(diffs)) * np.tensordot(diffs, deltas, axes=1)


def sample_directions(stream: np.random.Generator, table: NoiseTable, shape, count: int):
    """Draw ``count`` start indices and the matching perturbations."""
    size = int(np.prod(shape))
    indices = [draw_direction_index(stream, size, table) for _ in range(count)]
    rows, cols = (shape[0], int(np.prod(shape[1:]))) if len(shape) > 1 else (1, shape[0])
    deltas = np.stack([slice_perturbation(table, i, rows, cols).reshape(shape) for i in indices])
    return indices, deltas


def brs_step(theta, config: ArsConfig, oracle: Callable[[np.ndarray], float], table: NoiseTable,
             stream: np.random.Generator) -> np.ndarray:
    """One Basic Random Search iteration on a parameter array ``theta``.

    ``oracle(theta)`` returns one (noisy) reward; it is queried ``2N`` times.
    """
    theta = np.asarray(theta, dtype=float)
    _, deltas = sample_directions(stream, table, theta.shape, config.num_directions)
    r_plus = [oracle(theta + config.nu * d) for d in deltas]
    r_minus = [oracle(theta - config.nu * d) for d in deltas]
    return theta + brs_update(deltas, r_plus, r_minus, config.alpha)


# --- the training loop ----------------------------------------------------------


def check_compatible(config: ArsConfig, env: Env) -> None:
    if config.version.whitened and isinstance(env.base, LqrEnv):
        raise ConfigError("state whitening (V2/V2t) is not supported on LQR environments; use V1 or V1t")


def ars_step(params: PolicyParams, stat: RunningStat, config: ArsConfig, pool: WorkerPool,
             iteration: int, seeds: SeedHierarchy | None = None, episodes: int = 0, timesteps: int = 0):
    """One ARS iteration: 2N paired rollouts, top-b selection, scaled update, statistics refresh.

    Rollouts act with the statistics frozen at the end of the previous
    iteration. Returns ``(params', stat', record)``; the record's counters
    are ``episodes``/``timesteps`` plus this iteration's training samples.
    """
    seeds = seeds or SeedHierarchy(config.master_seed)
    p, n = params.shape
    stream = seeds.direction_stream(iteration)
    N = config.num_directions
    # indices are fixed before any rollout runs
    indices = [draw_direction_index(stream, p * n, pool.table) for _ in range(N)]
    items = [
        WorkItem(iteration, 2 * k + (sign < 0), k, indices[k], sign, seeds.rollout_seed(iteration, k, sign))
        for k in range(N)
        for sign in (1, -1)
    ]
    whiten = params.version.whitened
    results = evaluate_batch(pool, items, params, config.nu, config.horizon, collect_states=whiten)
    r_plus = [results[2 * k][0].total_reward for k in range(N)]
    r_minus = [results[2 * k + 1][0].total_reward for k in range(N)]
    deltas = np.stack([slice_perturbation(pool.table, i, p, n) for i in indices])
    step, sigma_r, selected, skipped = ars_update(deltas, r_plus, r_minus, config.top_b, config.alpha)
    if skipped:
        log.info("iteration %d: sigma_R=%g, update skipped", iteration, sigma_r)
    new = params.with_gain(params.M + step)
    if whiten:
        stat = stat.copy().merge(merge_stats((s for _, s in results), n))
        new = new.with_stats(*freeze_stats(stat))
    record = IterationRecord(
        iteration=iteration,
        indices=indices,
        r_plus=r_plus,
        r_minus=r_minus,
        selected=[int(k) for k in selected],
        sigma_R=sigma_r,
        skipped=skipped,
        episodes=episodes + 2 * N,
        timesteps=timesteps + sum(res.steps_used for res, _ in results),
        diverged=sum(res.diverged for res, _ in results),
    )
    return new, stat, record


def evaluate_policy(params: PolicyParams, config: ArsConfig, pool: WorkerPool, iteration: int,
                    seeds: SeedHierarchy | None = None) -> float:
    """Mean default-reward return of the unperturbed policy over ``eval_rollouts`` episodes."""
    seeds = seeds or SeedHierarchy(config.master_seed)
    items = [
        WorkItem(iteration, e, e, None, 0, seeds.eval_seed(iteration, e), evaluation=True)
        for e in range(config.eval_rollouts)
    ]
    results = evaluate_batch(pool, items, params, 0.0, config.horizon)
    return float(np.mean([res.total_reward for res, _ in results]))


def train(config: ArsConfig, env: Env, stop: StopCondition, eval_every: int | None = None,
          workers: int = 1, callback: Callable | None = None, pool: WorkerPool | None = None) -> TrainResult:
    """Run ARS from ``M = 0`` until ``stop``.

    With ``eval_every`` set, the policy is evaluated before training and after
    every ``eval_every`` iterations; evaluation samples are not counted in
    the training budget. ``callback(params, record)`` runs after each
    iteration.
    """
    check_compatible(config, env)
    if stop.reward_threshold is not None and not eval_every:
        raise ConfigError("a reward threshold needs eval_every")
    if all(v is None for v in (stop.max_iterations, stop.max_episodes, stop.max_timesteps)):
        log.warning("no sample limit set; training stops only once the reward threshold is reached")
    seeds = SeedHierarchy(config.master_seed)
    p, n = env.spec.action_dim, env.spec.state_dim
    if config.table_length < p * n:
        raise ConfigError(f"noise table of length {config.table_length} cannot hold a {p}x{n} perturbation")
    params = PolicyParams.zeros(p, n, config.version)
    stat = RunningStat.empty(n)
    records: list[IterationRecord] = []
    curve: list[CurvePoint] = []
    own_pool = pool is None
    if own_pool:
        pool = WorkerPool(env, build_table(seeds.table_seed, config.table_length), workers)
    try:
        pool.start()
        if eval_every:
            curve.append(CurvePoint(0, 0, 0, evaluate_policy(params, config, pool, 0, seeds)))
            if stop.reward_threshold is not None and curve[-1].eval_reward >= stop.reward_threshold:
                return TrainResult(params, records, curve, stat)
        episodes = timesteps = 0
        j = 0
        while not stop.exhausted(j, episodes, timesteps):
            params, stat, rec = ars_step(params, stat, config, pool, j, seeds, episodes, timesteps)
            episodes, timesteps = rec.episodes, rec.timesteps
            j += 1
            if eval_every and j % eval_every == 0:
                rec.eval_reward = evaluate_policy(params, config, pool, j, seeds)
                curve.append(CurvePoint(j, episodes, timesteps, rec.eval_reward))
            records.append(rec)
            if callback is not None:
                callback(params, rec)
            if stop.reward_threshold is not None and rec.eval_reward is not None \
                    and rec.eval_reward >= stop.reward_threshold:
                break
    finally:
        if own_pool:
            pool.close()
    return TrainResult(params, records, curve, stat)


def records_equal(a: list[IterationRecord], b: list[IterationRecord]) -> bool:
    """Exact comparison (floats compared bitwise, NaN equal to NaN)."""
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        dx, dy = x.to_dict(), y.to_dict()
        for key in dx:
            u, v = dx[key], dy[key]
            if isinstance(u, float) and isinstance(v, float) and math.isnan(u) and math.isnan(v):
                continue
            if u != v:
                return False
    return True
