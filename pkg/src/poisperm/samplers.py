"""Reproducible random variates keyed by hierarchical seed coordinates.

Every draw comes from a Philox (counter-based) generator whose key is
derived from a :class:`SeedPath`.  Two calls with equal paths return
bitwise-equal output no matter which process or thread runs them, so
replicates and permutations can be scheduled in any order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

# stream tags that keep the variables of one dataset on separate streams
STREAM_X1 = 1
STREAM_X2 = 2
STREAM_Y = 3
STREAM_PERMUTE = 4


@dataclass(frozen=True)
class SeedPath:
    """Coordinates of one random stream; ``-1`` marks an unused level."""

    master_seed: int
    scenario_id: int = -1
    size_index: int = -1
    replicate_index: int = -1
    permutation_index: int = -1
    stream: int = -1

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError(f"master_seed must fit in 64 unsigned bits, got {self.master_seed}")
        for name in ("scenario_id", "size_index", "replicate_index", "permutation_index", "stream"):
            if getattr(self, name) < -1:
                raise ValueError(f"{name} must be >= -1")

    def child(self, **coords) -> SeedPath:
        return replace(self, **coords)

    @property
    def spawn_key(self) -> tuple[int, ...]:
        return (
            self.scenario_id + 1,
            self.size_index + 1,
            self.replicate_index + 1,
            self.permutation_index + 1,
            self.stream + 1,
        )

    def generator(self) -> np.random.Generator:
        return make_generator(self.master_seed, self.spawn_key)


def make_generator(master_seed: int, spawn_key: tuple[int, ...]) -> np.random.Generator:
    """Philox generator for an already-offset coordinate key (see ``SeedPath.spawn_key``)."""
    ss = np.random.SeedSequence(master_seed, spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class FParams:
    d1: int = 8
    d2: int = 8

    def __post_init__(self):
        if int(self.d1) != self.d1 or int(self.d2) != self.d2 or self.d1 < 1 or self.d2 < 1:
            raise ValueError(f"F degrees of freedom must be positive integers, got ({self.d1}, {self.d2})")


def _check_n(n: int) -> int:
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    return int(n)


def sample_normal(seed: SeedPath, n: int) -> np.ndarray:
    return seed.generator().standard_normal(_check_n(n))


def sample_poisson(seed: SeedPath, rates) -> np.ndarray:
    rates = np.asarray(rates, dtype=float)
    if rates.size == 0:
        raise ValueError("rates must be non-empty")
    if not np.all(np.isfinite(rates)) or np.any(rates <= 0):
        raise ValueError("Poisson rates must be finite and > 0")
    return seed.generator().poisson(rates).astype(np.int64)


def _chisquare(rng: np.random.Generator, df: float, n: int) -> np.ndarray:
    # chi-square(k) = 2 * Gamma(shape=k/2, scale=1)
    return 2.0 * rng.standard_gamma(df / 2.0, size=n)


def sample_f(seed: SeedPath, params: FParams, n: int) -> np.ndarray:
    """F(d1, d2) draws as a ratio of scaled independent chi-squares."""
    n = _check_n(n)
    rng = seed.generator()
    u = _chisquare(rng, params.d1, n)
    v = _chisquare(rng, params.d2, n)
    return (u / params.d1) / (v / params.d2)


def discretize(z) -> np.ndarray:
    """Round to the nearest integer, ties away from zero."""
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)) or np.any(z < 0):
        raise ValueError("discretize expects finite nonnegative values")
    return np.floor(z + 0.5).astype(np.int64)

