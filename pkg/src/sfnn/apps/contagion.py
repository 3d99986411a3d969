"""Interbank contagion as a block Volterra system with exponential memory.

Bank i's distress follows

    y_i(t) = f_i(t) + sum_j a_ij beta int_0^t exp(-gamma (t - s)) y_j(s) ds,

discretized on a uniform time grid (diagonal s = t included) into one affine
system y = b + W y over all (bank, time) pairs.
"""

from __future__ import annotations

import configparser
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import ConfigurationError, DimensionError, DivergenceError
from ..fixed_point import FixedPointConfig, IterationTrace, iterate
from ..grid import Grid


@dataclass(frozen=True)
class ContagionNetwork:
    A: np.ndarray
    beta: float
    gamma: float
    shocks: Sequence[Callable[[np.ndarray], np.ndarray]]
    grid: Grid

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError("exposure matrix must be square")
        if np.any(A < 0):
            raise ConfigurationError("exposures must be non-negative")
        if not (self.beta > 0 and self.gamma > 0):
            raise ConfigurationError("beta and gamma must be positive")
        if len(self.shocks) != A.shape[0]:
            raise DimensionError(f"{len(self.shocks)} shocks for {A.shape[0]} banks")
        object.__setattr__(self, "A", A)

    @property
    def n_banks(self) -> int:
        return self.A.shape[0]

    def forcing(self) -> np.ndarray:
        t = self.grid.nodes
        return np.stack([np.asarray(f(t), dtype=float) * np.ones_like(t) for f in self.shocks])


def exponential_shocks(amplitudes, rates):
    return [(lambda t, a=float(a), k=float(k): a * np.exp(-k * np.asarray(t, dtype=float))) for a, k in zip(amplitudes, rates)]


def memory_matrix(grid: Grid, gamma: float) -> np.ndarray:
    """exp(-gamma (t_k - t_l)) for t_l <= t_k, zero above the diagonal."""
    t = grid.nodes
    lag = t[:, None] - t[None, :]
    return np.where(lag >= 0, np.exp(-gamma * np.maximum(lag, 0.0)), 0.0)


def assemble_block_system(net: ContagionNetwork):
    """W with blocks a_ij beta dt E (bank-major ordering) and b = stacked shocks."""
    E = memory_matrix(net.grid, net.gamma)
    W = np.kron(net.A, net.beta * net.grid.step * E)
    return W, net.forcing().ravel()


@dataclass(frozen=True)
class SpectralCertificate:
    value: float
    approximate: bool
    iterations: int

    def __float__(self) -> float:
        return self.value


def spectral_certificate(W: np.ndarray, rtol: float = 1e-8, max_iter: int = 10_000) -> SpectralCertificate:
    """Power-iteration estimate of the spectral radius.

    Flagged approximate when the growth-ratio estimate has not settled to
    ``rtol`` within ``max_iter`` steps (typical for strongly non-normal
    matrices, where it over-estimates).
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DimensionError("certificate needs a square matrix")
    x = np.ones(W.shape[0]) / np.sqrt(W.shape[0])
    est = 0.0
    for k in range(1, max_iter + 1):
        y = W @ x
        norm = np.linalg.norm(y)
        if norm == 0:
            return SpectralCertificate(0.0, False, k)
        new = float(norm)
        x = y / norm
        if k > 1 and abs(new - est) <= rtol * new:
            return SpectralCertificate(new, False, k)
        est = new
    return SpectralCertificate(est, True, max_iter)


@dataclass
class ContagionSolution:
    Y: np.ndarray
    certificate: SpectralCertificate
    trace: IterationTrace
    warnings: list = field(default_factory=list)

    @property
    def spectral_radius(self) -> float:
        return self.certificate.value


def solve_contagion(net: ContagionNetwork, fp_cfg: FixedPointConfig | None = None) -> ContagionSolution:
    fp_cfg = fp_cfg or FixedPointConfig(tol=1e-13, max_iter=1000)
    W, b = assemble_block_system(net)
    cert = spectral_certificate(W)
    notes = []
    if cert.value >= 1:
        notes.append(f"spectral radius estimate {cert.value:.4g} >= 1; iteration may diverge")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    try:
        y, trace = iterate(lambda v: b + W @ v, b, fp_cfg)
    except DivergenceError as exc:
        raise DivergenceError(f"{exc} (spectral radius estimate {cert.value:.4g})", exc.trace) from None
    Y = y.reshape(net.n_banks, net.grid.n_nodes)
    if np.any(Y < 0) or np.any(Y > 1):
        notes.append("distress left [0, 1] for at least one bank")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    return ContagionSolution(Y, cert, trace, notes)


# --------------------------------------------------------------------------
# scenario files
# --------------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def network_from_section(sec) -> ContagionNetwork:
    """Build a network from a mapping with keys n_banks, exposures, beta, gamma,
    horizon, n_nodes, shock_amplitudes, shock_rates."""
    try:
        n = int(sec["n_banks"])
        A = np.array(_floats(sec["exposures"]))
        if A.size != n * n:
            raise ConfigurationError(f"exposures has {A.size} entries, expected {n * n}")
        amps = _floats(sec["shock_amplitudes"])
        rates = _floats(sec["shock_rates"])
        if len(amps) != n or len(rates) != n:
            raise ConfigurationError("need one shock amplitude and rate per bank")
        grid = Grid(0.0, float(sec["horizon"]), int(sec["n_nodes"]))
        return ContagionNetwork(A.reshape(n, n), float(sec["beta"]), float(sec["gamma"]), exponential_shocks(amps, rates), grid)
    except KeyError as exc:
        raise ConfigurationError(f"scenario is missing key {exc.args[0]!r}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"bad scenario value: {exc}") from None


def load_scenario(path) -> ContagionNetwork:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigurationError(f"cannot read scenario file {path}")
    if "contagion" not in parser:
        raise ConfigurationError(f"{path}: missing [contagion] section")
    return network_from_section(parser["contagion"])


def initial_slopes(sol: ContagionSolution, grid: Grid) -> np.ndarray:
    """Forward-difference slope of each trajectory at t = 0."""
    return (sol.Y[:, 1] - sol.Y[:, 0]) / grid.step
