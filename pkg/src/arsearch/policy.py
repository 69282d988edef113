"""Linear policies with optional diagonal state whitening."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

# Diagonal variances below this are treated as infinite: the whitened
# coordinate is zero instead of 0/0.
SIGMA_FLOOR = 1e-8

CHECKPOINT_MAGIC = "arsearch-policy"
CHECKPOINT_FORMAT = 1


class Version(str, enum.Enum):
    V1 = "V1"
    V1t = "V1t"
    V2 = "V2"
    V2t = "V2t"

    @property
    def whitened(self) -> bool:
        return self in (Version.V2, Version.V2t)

    @property
    def allows_top_b(self) -> bool:
        return self in (Version.V1t, Version.V2t)

    @classmethod
    def parse(cls, value) -> "Version":
        if isinstance(value, cls):
            return value
        text = str(value).replace("-", "").strip()
        for member in cls:
            if member.value.lower() == text.lower():
                return member
        raise ValueError(f"unknown ARS version {value!r}")


@dataclass(frozen=True, eq=False)
class PolicyParams:
    """Gain matrix ``M`` (p x n) and the frozen whitening statistics."""

    M: np.ndarray
    mu: np.ndarray
    sigma_diag: np.ndarray
    version: Version = Version.V1

    def __post_init__(self):
        if self.M.ndim != 2:
            raise ValueError("M must be a matrix")
        n = self.M.shape[1]
        if self.mu.shape != (n,) or self.sigma_diag.shape != (n,):
            raise ValueError(f"whitening statistics must have shape ({n},)")
        if np.any(self.sigma_diag < 0):
            raise ValueError("sigma_diag entries must be non-negative")

    @classmethod
    def zeros(cls, action_dim: int, state_dim: int, version=Version.V1) -> "PolicyParams":
        return cls(
            np.zeros((action_dim, state_dim)),
            np.zeros(state_dim),
            np.ones(state_dim),
            Version.parse(version),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.M.shape

    def with_gain(self, M: np.ndarray) -> "PolicyParams":
        return replace(self, M=M)

    def with_stats(self, mu: np.ndarray, sigma_diag: np.ndarray) -> "PolicyParams":
        return replace(self, mu=mu, sigma_diag=sigma_diag)

    def inverse_std(self) -> np.ndarray:
        out = np.zeros_like(self.sigma_diag)
        ok = self.sigma_diag >= SIGMA_FLOOR
        out[ok] = 1.0 / np.sqrt(self.sigma_diag[ok])
        return out

    def same_as(self, other: "PolicyParams") -> bool:
        return (
            self.version == other.version
            and np.array_equal(self.M, other.M)
            and np.array_equal(self.mu, other.mu)
            and np.array_equal(self.sigma_diag, other.sigma_diag)
        )


def perturbed_gain(params: PolicyParams, delta, nu: float, sign: int) -> np.ndarray:
    """``M + sign * nu * delta`` (just ``M`` when ``sign`` is 0 or there is no delta)."""
    if sign == 0 or delta is None:
        return params.M
    delta = np.asarray(delta)
    if delta.shape != params.M.shape:
        raise ValueError(f"perturbation shape {delta.shape} does not match M {params.M.shape}")
    return params.M + (sign * nu) * delta


def make_actor(params: PolicyParams, delta=None, nu: float = 0.0, sign: int = 0):
    """Return ``x -> action`` for one rollout, with the gain precomputed."""
    gain = perturbed_gain(params, delta, nu, sign)
    if not params.version.whitened:
        return lambda x: gain @ x
    mu, inv_std = params.mu, params.inverse_std()
    return lambda x: gain @ ((x - mu) * inv_std)


def act(params: PolicyParams, delta, sign: int, x, nu: float = 0.0) -> np.ndarray:
    """Action of the (possibly perturbed, possibly whitened) linear policy at state ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.M.shape[1],):
        raise ValueError(f"state of shape {x.shape} does not match policy input dim {params.M.shape[1]}")
    return make_actor(params, delta, nu, sign)(x)


@dataclass
class RunningStat:
    """Per-coordinate count, mean and sum of squared deviations of pushed states.

    Single states go through Welford's update; batches and partial stats are
    combined with the pairwise formula of Chan, Golub and LeVeque.
    """

    count: int = 0
    mean: np.ndarray = None
    m2: np.ndarray = None
    dim: int = field(default=None, repr=False)

    def __post_init__(self):
        if self.mean is None:
            if self.dim is None:
                raise ValueError("RunningStat needs a dimension or an initial mean")
            self.mean = np.zeros(self.dim)
            self.m2 = np.zeros(self.dim)
        self.dim = self.mean.shape[0]

    @classmethod
    def empty(cls, dim: int) -> "RunningStat":
        return cls(dim=dim)

    @classmethod
    def from_batch(cls, states) -> "RunningStat":
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if states.shape[0] == 0:
            return cls(dim=states.shape[1])
        mean = states.mean(axis=0)
        m2 = ((states - mean) ** 2).sum(axis=0)
        return cls(states.shape[0], mean, m2)

    def copy(self) -> "RunningStat":
        return RunningStat(self.count, self.mean.copy(), self.m2.copy())

    @property
    def variance(self) -> np.ndarray:
        if self.count == 0:
            return np.ones(self.dim)
        return self.m2 / self.count

    def push(self, x) -> "RunningStat":
        x = np.asarray(x, dtype=float)
        self.count += 1
        d = x - self.mean
        self.mean = self.mean + d / self.count
        self.m2 = self.m2 + d * (x - self.mean)
        return self

    def merge(self, other: "RunningStat") -> "RunningStat":
        """In-place combination with ``other``; returns self."""
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean.copy(), other.m2.copy()
            return self
        total = self.count + other.count
        d = other.mean - self.mean
        self.mean = self.mean + d * (other.count / total)
        self.m2 = self.m2 + other.m2 + d * d * (self.count * other.count / total)
        self.count = total
        return self

    def equals(self, other: "RunningStat") -> bool:
        return (
            self.count == other.count
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.m2, other.m2)
        )


def push_state(stat: RunningStat, x) -> RunningStat:
    return stat.push(x)


def freeze_stats(stat: RunningStat) -> tuple[np.ndarray, np.ndarray]:
    """Current mean and population variance; ``(0, 1)`` before any state arrives."""
    if stat.count == 0:
        return np.zeros(stat.dim), np.ones(stat.dim)
    return stat.mean.copy(), stat.m2 / stat.count


def save_policy(params: PolicyParams, path) -> None:
    """Write a text checkpoint; floats are stored as hex so reloading is bit-exact."""
    p, n = params.M.shape
    lines = [
        f"{CHECKPOINT_MAGIC} {CHECKPOINT_FORMAT}",
        f"version {params.version.value}",
        f"shape {p} {n}",
        "M " + " ".join(float(v).hex() for v in params.M.ravel()),
        "mu " + " ".join(float(v).hex() for v in params.mu),
        "sigma_diag " + " ".join(float(v).hex() for v in params.sigma_diag),
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_policy(path) -> PolicyParams:
    lines = Path(path).read_text().splitlines()
    magic, fmt = lines[0].split()
    if magic != CHECKPOINT_MAGIC or int(fmt) != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a format-{CHECKPOINT_FORMAT} policy checkpoint")
    fields = {}
    for line in lines[1:]:
        key, _, rest = line.partition(" ")
        fields[key] = rest.split()
    p, n = (int(v) for v in fields["shape"])

    def floats(key):
        return np.array([float.fromhex(v) for v in fields[key]], dtype=float)

    return PolicyParams(
        floats("M").reshape(p, n), floats("mu"), floats("sigma_diag"), Version.parse(fields["version"][0])
    )
