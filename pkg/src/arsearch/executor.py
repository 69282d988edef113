"""Deterministic parallel rollouts.

Workers receive ``(table index, sign, seed)`` work items instead of
perturbation matrices and rebuild each perturbation from their own view of
the shared noise table. Every piece of randomness lives in the item, so the
returned results depend only on the items, never on the worker count or on
which worker ran what.
"""

from __future__ import annotations

import multiprocessing as mp
import os
from dataclasses import dataclass

from arsearch.envs import Env, RolloutResult, rollout
from arsearch.policy import PolicyParams, RunningStat, make_actor
from arsearch.rng import NoiseTable, slice_perturbation


@dataclass(frozen=True)
class WorkItem:
    iteration: int
    ordinal: int
    direction: int
    table_index: int | None
    sign: int
    rollout_seed: int
    evaluation: bool = False


class BatchError(RuntimeError):
    def __init__(self, item: WorkItem, cause: BaseException | str):
        super().__init__(f"rollout failed for {item}: {cause!r}")
        self.item = item
        self.cause = cause if isinstance(cause, str) else repr(cause)

    def __reduce__(self):
        # keep the exception picklable so worker failures reach the parent
        return BatchError, (self.item, self.cause)


# Per-process worker state, installed by _init_worker (or used in-process when W = 1).
_ENV: Env | None = None
_TABLE: NoiseTable | None = None


def _init_worker(env, table):
    global _ENV, _TABLE
    _ENV, _TABLE = env, table


def _run_items(items, params: PolicyParams, nu: float, horizon: int | None, collect_states: bool,
               env: Env | None = None, table: NoiseTable | None = None):
    env = _ENV if env is None else env
    table = _TABLE if table is None else table
    p, n = params.shape
    out = []
    for item in items:
        try:
            delta = None if item.sign == 0 else slice_perturbation(table, item.table_index, p, n)
            actor = make_actor(params, delta, nu, item.sign)
            # evaluation rollouts see default rewards and never feed the statistics
            target = env.base if item.evaluation else env
            want_states = collect_states and not item.evaluation
            res = rollout(target, actor, item.rollout_seed, horizon, collect_states=want_states)
        except Exception as exc:  # noqa: BLE001 - re-raised with the item attached
            return BatchError(item, exc)
        stat = RunningStat.from_batch(res.states) if want_states else None
        res.states = None
        out.append((item.ordinal, res, stat))
    return out


def _run_chunk(args):
    return _run_items(*args)


class WorkerPool:
    """``workers`` long-lived processes, each holding its own environment copy.

    ``workers=1`` runs everything in the calling process. Use as a context
    manager so worker processes are shut down.
    """

    def __init__(self, env: Env, table: NoiseTable, workers: int | None = None):
        self.env, self.table = env, table
        self.workers = max(1, int(workers or os.cpu_count() or 1))
        self._pool = None

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.close()

    def start(self):
        if self.workers > 1 and self._pool is None:
            methods = mp.get_all_start_methods()
            ctx = mp.get_context("fork" if "fork" in methods else None)
            self._pool = ctx.Pool(self.workers, initializer=_init_worker, initargs=(self.env, self.table))

    def close(self):
        if self._pool is not None:
            self._pool.close()
            self._pool.join()
            self._pool = None

    def run(self, items: list[WorkItem], params: PolicyParams, nu: float, horizon: int | None,
            collect_states: bool):
        if not items:
            return []
        if self.workers == 1 or self._pool is None:
            chunks = [_run_items(items, params, nu, horizon, collect_states, self.env, self.table)]
        else:
            # round-robin pre-assignment by position
            jobs = [(items[w::self.workers], params, nu, horizon, collect_states)
                    for w in range(self.workers) if items[w::self.workers]]
            chunks = self._pool.map(_run_chunk, jobs, chunksize=1)
        by_ordinal = {}
        for chunk in chunks:
            if isinstance(chunk, BatchError):
                raise chunk
            for ordinal, res, stat in chunk:
                by_ordinal[ordinal] = (res, stat)
        return [by_ordinal[item.ordinal] for item in items]


def evaluate_batch(pool: WorkerPool, items: list[WorkItem], params: PolicyParams, nu: float = 0.0,
                   horizon: int | None = None, collect_states: bool = False) -> list[tuple[RolloutResult, RunningStat | None]]:
    """Run ``items`` and return ``(result, state statistics)`` in item order.

    State statistics are per item (``None`` unless ``collect_states``); use
    :func:`merge_stats` to reduce them in canonical order.
    """
    return pool.run(list(items), params, nu, horizon, collect_states)


def merge_stats(stats, dim: int) -> RunningStat:
    """Merge per-item statistics in the order given."""
    total = RunningStat.empty(dim)
    for stat in stats:
        if stat is not None:
            total.merge(stat)
    return total
