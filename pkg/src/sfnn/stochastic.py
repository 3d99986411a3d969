"""Seedable random ingredients: Brownian increments and lognormal jump paths.

Every draw comes from a Philox counter-based stream keyed by
``(seed, stream_id)``.  Each quantity (Brownian increments, jump arrivals,
jump marks, ...) gets its own counter block, so path ``j`` can be rebuilt
without generating paths ``0..j-1`` and the result does not depend on call
order or on how many workers share the ensemble.

Gaussians are produced by the inverse normal CDF of a uniform draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import ConfigurationError, DimensionError
from .grid import Grid

_U64 = 2**64

# high counter word per quantity; blocks never overlap for < 2**192 draws
PURPOSES = {
    "brownian": 1,
    "arrivals": 2,
    "marks": 3,
    "init": 4,
    "batches": 5,
    "probes": 6,
    "demo": 7,
}


@dataclass(frozen=True)
class RandomSeed:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if int(value) != value or not (0 <= value < _U64):
                raise ConfigurationError(f"{name} must be an unsigned 64-bit integer, got {value!r}")

    def stream(self, stream_id: int) -> "RandomSeed":
        return RandomSeed(self.seed, stream_id % _U64)


def _bit_generator(seed: RandomSeed, purpose: str) -> np.random.Philox:
    key = np.array([seed.seed, seed.stream_id], dtype=np.uint64)
    counter = np.array([0, 0, 0, PURPOSES[purpose]], dtype=np.uint64)
    return np.random.Philox(key=key, counter=counter)


def _to_open_unit(raw: np.ndarray) -> np.ndarray:
    # 53 random bits, centred in their cell: strictly inside (0, 1)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def uniforms(seed: RandomSeed, purpose: str, size: int) -> np.ndarray:
    """``size`` i.i.d. uniforms on the open interval (0, 1)."""
    return _to_open_unit(_bit_generator(seed, purpose).random_raw(int(size)))


def normals(seed: RandomSeed, purpose: str, size: int) -> np.ndarray:
    return ndtri(uniforms(seed, purpose, size))


def generator(seed: RandomSeed, purpose: str) -> np.random.Generator:
    """numpy Generator on the same keyed stream, for permutations and choices."""
    return np.random.Generator(_bit_generator(seed, purpose))


def brownian_increments(n: int, dt: float, seed: RandomSeed) -> np.ndarray:
    if n < 1:
        raise ConfigurationError("need at least one Brownian increment")
    if dt < 0:
        raise ConfigurationError("time step must be non-negative")
    return np.sqrt(dt) * normals(seed, "brownian", n)


@dataclass(frozen=True)
class BrownianPath:
    grid: Grid
    increments: np.ndarray

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.shape != (self.grid.n_intervals,):
            raise DimensionError(
                f"expected {self.grid.n_intervals} increments for {self.grid}, got shape {inc.shape}"
            )
        if not np.all(np.isfinite(inc)):
            raise ConfigurationError("Brownian increments must be finite")
        object.__setattr__(self, "increments", inc)

    def node_increments(self) -> np.ndarray:
        """Increment paired with each node (the last node has none)."""
        return np.append(self.increments, 0.0)

    def values(self) -> np.ndarray:
        """W(t_i) with W(t_0) = 0."""
        return np.concatenate(([0.0], np.cumsum(self.increments)))

    def coarsen(self, coarse: Grid) -> "BrownianPath":
        factor = self.grid.refinement_factor(coarse)
        return BrownianPath(coarse, self.increments.reshape(coarse.n_intervals, factor).sum(axis=1))


def sample_brownian(grid: Grid, seed: RandomSeed) -> BrownianPath:
    if grid.n_intervals < 1:
        raise ConfigurationError("grid has no intervals")
    return BrownianPath(grid, brownian_increments(grid.n_intervals, grid.step, seed))


@dataclass(frozen=True)
class LogNormalParams:
    """Law of the jump multiplier: log J ~ N(mean_log, sd_log**2)."""

    mean_log: float = 0.0
    sd_log: float = 0.0

    def __post_init__(self):
        if self.sd_log < 0:
            raise ConfigurationError("sd_log must be non-negative")

    @property
    def mean_multiplier(self) -> float:
        return float(np.exp(self.mean_log + 0.5 * self.sd_log**2))

    @property
    def mean_excess(self) -> float:
        """E[J - 1], computed without cancellation for small jumps."""
        return float(np.expm1(self.mean_log + 0.5 * self.sd_log**2))


@dataclass(frozen=True)
class JumpPath:
    horizon: float
    jump_times: np.ndarray
    multipliers: np.ndarray
    intensity: float
    compensator_drift: float

    @property
    def count(self) -> int:
        return int(self.jump_times.size)

    def excess_sum(self) -> float:
        return float(np.sum(self.multipliers - 1.0))

    def interval_sums(self, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
        """Per-interval jump count and sum of (J - 1).

        A jump at tau is booked on the interval (t_j, t_{j+1}] containing it,
        i.e. on its left node j.
        """
        idx = np.ceil((self.jump_times - grid.lower) / grid.step).astype(int) - 1
        idx = np.clip(idx, 0, grid.n_intervals - 1)
        counts = np.bincount(idx, minlength=grid.n_intervals).astype(float)
        sums = np.bincount(idx, weights=self.multipliers - 1.0, minlength=grid.n_intervals)
        return counts, sums

    def log_multiplier_at(self, times: np.ndarray) -> np.ndarray:
        """Sum of log J_k over jumps with tau_k <= t, for each t in ``times``."""
        cum = np.concatenate(([0.0], np.cumsum(np.log(self.multipliers))))
        return cum[np.searchsorted(self.jump_times, np.asarray(times), side="right")]


def sample_jumps(horizon: float, intensity: float, jump_law: LogNormalParams, seed: RandomSeed) -> JumpPath:
    """Poisson arrivals on (0, horizon] with i.i.d. lognormal multipliers."""
    if intensity < 0:
        raise ConfigurationError(f"jump intensity must be non-negative, got {intensity}")
    if horizon <= 0:
        raise ConfigurationError("horizon must be positive")
    drift = intensity * jump_law.mean_excess
    if intensity == 0:
        empty = np.zeros(0)
        return JumpPath(horizon, empty, empty.copy(), 0.0, 0.0)

    bg = _bit_generator(seed, "arrivals")
    mean = intensity * horizon
    chunk = int(mean + 10.0 * np.sqrt(mean) + 16)
    times = np.zeros(0)
    elapsed = 0.0
    while True:
        gaps = -np.log(_to_open_unit(bg.random_raw(chunk))) / intensity
        arrivals = elapsed + np.cumsum(gaps)
        times = np.concatenate((times, arrivals[arrivals <= horizon]))
        if arrivals[-1] > horizon:
            break
        elapsed = arrivals[-1]
    marks = normals(seed, "marks", times.size)
    multipliers = np.exp(jump_law.mean_log + jump_law.sd_log * marks)
    return JumpPath(horizon, times, multipliers, float(intensity), float(drift))
