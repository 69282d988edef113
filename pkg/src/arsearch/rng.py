"""Deterministic random streams and the shared noise table.

Every random draw in a run descends from one integer, the master seed. Named
streams are derived by keying a counter-based Philox generator with
``(master_seed, stream label, *path)`` through :class:`numpy.random.SeedSequence`,
so streams never depend on the order in which they are created. Gaussian
samples come from numpy's ziggurat sampler (``Generator.standard_normal``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

DEFAULT_TABLE_LENGTH = 25_000_000

# Stream labels. Values are part of the on-disk reproducibility contract.
TABLE_STREAM = 0
DIRECTION_STREAM = 1
ROLLOUT_STREAM = 2
EVAL_STREAM = 3
AUX_STREAM = 4


class ConfigError(ValueError):
    """Raised for invalid configuration (bad sizes, seeds, grids, names)."""


def make_generator(*key: int) -> np.random.Generator:
    """Philox generator keyed on a tuple of non-negative integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def derive_seed(*key: int) -> int:
    """A 63-bit integer seed that is a pure function of ``key``."""
    state = np.random.SeedSequence([int(k) for k in key]).generate_state(2, np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


@dataclass(frozen=True)
class SeedHierarchy:
    """All per-run seeds, derived from ``master_seed``.

    Training streams (table fill, direction indices, training rollouts) and
    the evaluation stream use distinct labels, so evaluation draws can never
    coincide with or perturb a training draw.
    """

    master_seed: int

    def __post_init__(self):
        if int(self.master_seed) < 0:
            raise ConfigError(f"master seed must be non-negative, got {self.master_seed}")

    @property
    def table_seed(self) -> int:
        return derive_seed(self.master_seed, TABLE_STREAM)

    def direction_stream(self, iteration: int) -> np.random.Generator:
        return make_generator(self.master_seed, DIRECTION_STREAM, iteration)

    def rollout_seed(self, iteration: int, direction: int, sign: int) -> int:
        # sign is +1 or -1; map to {1, 0} so the key stays non-negative
        return derive_seed(self.master_seed, ROLLOUT_STREAM, iteration, direction, 1 if sign > 0 else 0)

    def eval_seed(self, iteration: int, episode: int) -> int:
        return derive_seed(self.master_seed, EVAL_STREAM, iteration, episode)

    def aux_stream(self, *path: int) -> np.random.Generator:
        """Stream for anything outside the training loop (e.g. system identification inputs)."""
        return make_generator(self.master_seed, AUX_STREAM, *path)


@dataclass(frozen=True, eq=False)
class NoiseTable:
    """Immutable block of i.i.d. standard normals addressed by start index."""

    values: np.ndarray = field(repr=False)
    fill_seed: int

    def __post_init__(self):
        self.values.setflags(write=False)

    def __len__(self) -> int:
        return self.values.shape[0]


@lru_cache(maxsize=4)
def _filled(fill_seed: int, length: int) -> np.ndarray:
    values = make_generator(fill_seed, TABLE_STREAM).standard_normal(length)
    values.setflags(write=False)
    return values


def build_table(fill_seed: int, length: int = DEFAULT_TABLE_LENGTH) -> NoiseTable:
    """Fill a table of ``length`` standard normals from ``fill_seed``.

    Contents depend only on ``(fill_seed, length)``; recent tables are cached
    since they are read-only.
    """
    if int(length) <= 0:
        raise ConfigError(f"noise table length must be positive, got {length}")
    return NoiseTable(_filled(int(fill_seed), int(length)), int(fill_seed))


def draw_direction_index(stream: np.random.Generator, dim: int, table: NoiseTable) -> int:
    """Uniform start index ``i`` with ``i + dim <= len(table)``."""
    if dim <= 0:
        raise ConfigError(f"perturbation dimension must be positive, got {dim}")
    if dim > len(table):
        raise ConfigError(f"perturbation dimension {dim} exceeds noise table length {len(table)}")
    return int(stream.integers(0, len(table) - dim + 1))


def slice_perturbation(table: NoiseTable, index: int, rows: int, cols: int) -> np.ndarray:
    """The ``rows x cols`` matrix filled row-major from ``table[index:index + rows*cols]``."""
    size = rows * cols
    if index < 0 or index + size > len(table):
        raise ConfigError(f"slice [{index}, {index + size}) outside noise table of length {len(table)}")
    return table.values[index:index + size].reshape(rows, cols)
