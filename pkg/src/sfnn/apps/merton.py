"""Merton jump diffusion as a stochastic Volterra-Fredholm fixed point.

    S(t) = S0 + int_0^T K(t,s) S(s) ds + int_0^t sigma S dW + int_0^t S(s-)(J-1) dN~

With the compensated Poisson process the drift becomes
mu~ = mu + lambda E[J - 1] and the true kernel is mu~ 1{s <= t}.  The learned
variant replaces the kernel by K_theta, trained on the residual of exact
simulated paths, and then iterates the discrete operator to its fixed point.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, DivergenceError
from ..fixed_point import DIVERGENCE_THRESHOLD
from ..grid import Grid
from ..neural_kernel import (
    NeuralKernel,
    ResidualObjective,
    TrainState,
    kernel_matrix,
    reinitialize_for_outer,
    stochastic_sums,
    train_sweep,
)
from ..stochastic import BrownianPath, JumpPath, LogNormalParams, RandomSeed, sample_brownian, sample_jumps


@dataclass(frozen=True)
class MertonConfig:
    mu: float = 0.1
    sigma: float = 0.2
    intensity: float = 0.5
    jump_law: LogNormalParams = LogNormalParams(-0.05, 0.1)
    S0: float = 100.0
    T: float = 1.0
    n_nodes: int = 65

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigurationError("volatility must be non-negative")
        if self.intensity < 0:
            raise ConfigurationError("jump intensity must be non-negative")
        if not self.S0 > 0:
            raise ConfigurationError("initial price must be positive")
        if not self.T > 0:
            raise ConfigurationError("horizon must be positive")

    @property
    def grid(self) -> Grid:
        return Grid(0.0, self.T, self.n_nodes)

    @property
    def compensator(self) -> float:
        """lambda E[J - 1]."""
        return self.intensity * self.jump_law.mean_excess

    @property
    def mu_tilde(self) -> float:
        return self.mu + self.compensator


def true_kernel_matrix(cfg: MertonConfig, grid: Grid | None = None) -> np.ndarray:
    grid = grid or cfg.grid
    t = grid.nodes
    return cfg.mu_tilde * (t[None, :] <= t[:, None]).astype(float)


def _path_seed(seed, index: int) -> RandomSeed:
    if isinstance(seed, RandomSeed):
        return seed.stream(seed.stream_id + index)
    return RandomSeed(int(seed), index)


def simulate_merton_path(cfg: MertonConfig, seed, brownian: BrownianPath | None = None, jumps: JumpPath | None = None, grid: Grid | None = None) -> np.ndarray:
    """Exact solution S0 exp((mu - sigma^2/2) t + sigma W(t)) prod_{tau_k <= t} J_k on the grid."""
    grid = grid or cfg.grid
    seed = seed if isinstance(seed, RandomSeed) else RandomSeed(int(seed))
    if brownian is None:
        brownian = sample_brownian(grid, seed)
    if jumps is None:
        jumps = sample_jumps(cfg.T, cfg.intensity, cfg.jump_law, seed)
    if brownian.grid != grid:
        brownian = brownian.coarsen(grid)
    t = grid.nodes
    log_s = (cfg.mu - 0.5 * cfg.sigma**2) * t + cfg.sigma * brownian.values() + jumps.log_multiplier_at(t)
    return cfg.S0 * np.exp(log_s)


@dataclass
class MertonEnsemble:
    """Frozen Brownian and jump realizations, one stream per path."""

    cfg: MertonConfig
    brownian: list
    jumps: list

    @classmethod
    def simulate(cls, cfg: MertonConfig, seed, n_paths: int, grid: Grid | None = None) -> "MertonEnsemble":
        if n_paths < 1:
            raise ConfigurationError("ensemble needs at least one path")
        grid = grid or cfg.grid
        b, j = [], []
        for p in range(n_paths):
            ps = _path_seed(seed, p)
            b.append(sample_brownian(grid, ps))
            j.append(sample_jumps(cfg.T, cfg.intensity, cfg.jump_law, ps))
        return cls(cfg, b, j)

    @property
    def n_paths(self) -> int:
        return len(self.brownian)

    @property
    def fine_grid(self) -> Grid:
        return self.brownian[0].grid

    def increments(self, grid: Grid | None = None) -> np.ndarray:
        grid = grid or self.fine_grid
        return np.stack([bp.coarsen(grid).increments for bp in self.brownian])

    def jump_sums(self, grid: Grid | None = None):
        """Per-interval jump counts and sums of (J - 1), each (paths, intervals)."""
        grid = grid or self.fine_grid
        pairs = [jp.interval_sums(grid) for jp in self.jumps]
        return np.stack([c for c, _ in pairs]), np.stack([s for _, s in pairs])

    def drivers(self, grid: Grid | None = None) -> np.ndarray:
        """Compensated increments c_j = sigma dW_j + sum(J - 1) - lambda E[J-1] dt."""
        grid = grid or self.fine_grid
        _, excess = self.jump_sums(grid)
        return self.cfg.sigma * self.increments(grid) + excess - self.cfg.compensator * grid.step

    def exact(self, grid: Grid | None = None) -> np.ndarray:
        grid = grid or self.fine_grid
        return np.stack([
            simulate_merton_path(self.cfg, RandomSeed(0), bp, jp, grid) for bp, jp in zip(self.brownian, self.jumps)
        ])


def euler_fixed_point(cfg: MertonConfig, drivers: np.ndarray, grid: Grid | None = None, kernel_value: float | None = None) -> np.ndarray:
    """Discrete fixed point of the causal constant-kernel equation by forward substitution.

    S_i = S0 + k dt sum_{j<=i} S_j + sum_{j<i} c_j S_j, solved node by node.
    """
    grid = grid or cfg.grid
    k = cfg.mu_tilde if kernel_value is None else kernel_value
    drivers = np.atleast_2d(drivers)
    dt = grid.step
    if abs(k * dt) >= 1:
        raise ConfigurationError("kernel times step must be below 1 for the implicit diagonal")
    S = np.empty((drivers.shape[0], grid.n_nodes))
    acc = np.zeros(drivers.shape[0])
    for i in range(grid.n_nodes):
        S[:, i] = (cfg.S0 + acc) / (1.0 - k * dt)
        if i < grid.n_intervals:
            acc = acc + (k * dt + drivers[:, i]) * S[:, i]
    return S


def apply_operator(S: np.ndarray, K: np.ndarray, drivers: np.ndarray, S0: float, dt: float) -> np.ndarray:
    """One application S -> S0 + dt S K^T + sum_{j<i} S_j c_j (compensated form)."""
    return S0 + dt * S @ K.T + stochastic_sums(S, drivers)


def apply_operator_raw(S, K, dW, excess, sigma: float, compensator: float, S0: float, dt: float):
    """Same map with the jump term written as dN and the compensator booked separately."""
    diffusion = stochastic_sums(S, sigma * dW)
    jumps = stochastic_sums(S, excess)
    comp = stochastic_sums(S, np.full_like(dW, compensator * dt))
    return S0 + dt * S @ K.T + diffusion + jumps - comp


def _relative_gap(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(np.linalg.norm(a - b, axis=1) / np.linalg.norm(b, axis=1)))


@dataclass
class SfvnnState:
    S: np.ndarray
    outer_k: int = 0
    fp_residuals: list = field(default_factory=list)
    nn_errors: list = field(default_factory=list)
    converged: bool = False


def sfvnn_outer_iterate(state: SfvnnState, K: np.ndarray, cfg: MertonConfig, drivers: np.ndarray, reference: np.ndarray | None = None, grid: Grid | None = None) -> SfvnnState:
    """Advance the outer iteration by one application of the learned operator.

    The residual is the path-averaged relative L2 change; ``reference`` (the
    true-kernel fixed point) gives the network error.
    """
    grid = grid or cfg.grid
    S_new = apply_operator(state.S, K, drivers, cfg.S0, grid.step)
    if not np.all(np.isfinite(S_new)):
        raise DivergenceError(f"non-finite outer iterate at k={state.outer_k + 1}", state)
    residual = _relative_gap(S_new, state.S)
    if residual > DIVERGENCE_THRESHOLD:
        raise DivergenceError(f"outer residual {residual:.3g} diverged", state)
    state.fp_residuals.append(residual)
    if reference is not None:
        state.nn_errors.append(_relative_gap(S_new, reference))
    state.S = S_new
    state.outer_k += 1
    return state


@dataclass(frozen=True)
class TrainingConfig:
    sweeps: int = 12
    steps_per_sweep: int = 1000
    batch_size: int = 16
    learning_rate: float = 1e-2
    reinit_sweeps: tuple = (3,)
    init_seed: int = 0


@dataclass
class SfvnnResult:
    state: SfvnnState
    train_state: TrainState
    kernel: NeuralKernel
    ensemble: MertonEnsemble
    reference: np.ndarray
    seconds: float


def train_kernel(cfg: MertonConfig, ensemble: MertonEnsemble, tcfg: TrainingConfig, data_seed: int = 0):
    """Sweeps of SGD on the residual loss of the ensemble's exact paths.

    At the start of each sweep listed in ``reinit_sweeps`` the kernel is
    re-initialized from a fresh init stream.
    """
    grid = cfg.grid
    objective = ResidualObjective(ensemble.exact(grid), ensemble.drivers(grid), grid, anchor=cfg.S0, scale=cfg.S0)
    nk = NeuralKernel.initialize(RandomSeed(tcfg.init_seed, 0), grid.lower, grid.upper)
    state = TrainState(learning_rate=tcfg.learning_rate, outer_iteration=1)
    for sweep in range(1, tcfg.sweeps + 1):
        if sweep > 1:
            if sweep in tcfg.reinit_sweeps:
                nk = reinitialize_for_outer(nk, sweep, state)
            else:
                state.outer_iteration += 1
        batch_seed = RandomSeed(int(data_seed), 2**32 + sweep)
        train_sweep(nk, state, objective, tcfg.steps_per_sweep, tcfg.batch_size, batch_seed)
    return nk, state


def run_sfvnn(cfg: MertonConfig, tol: float = 1e-12, max_outer: int = 20, n_paths: int = 64, seed: int = 0, tcfg: TrainingConfig | None = None, kernel: np.ndarray | None = None) -> SfvnnResult:
    """Train the kernel, then iterate the frozen learned operator until the residual drops below ``tol``.

    Passing ``kernel`` skips training and iterates with that matrix instead.
    """
    started = time.perf_counter()
    tcfg = tcfg or TrainingConfig()
    grid = cfg.grid
    ensemble = MertonEnsemble.simulate(cfg, seed, n_paths)
    drivers = ensemble.drivers(grid)
    reference = euler_fixed_point(cfg, drivers, grid)
    if kernel is None:
        nk, tstate = train_kernel(cfg, ensemble, tcfg, data_seed=seed)
        K = kernel_matrix(nk, grid)
    else:
        nk, tstate = None, TrainState(learning_rate=0.0)
        K = np.asarray(kernel, dtype=float)
    state = SfvnnState(np.full((n_paths, grid.n_nodes), cfg.S0))
    for _ in range(max_outer):
        sfvnn_outer_iterate(state, K, cfg, drivers, reference, grid)
        if state.fp_residuals[-1] < tol:
            state.converged = True
            break
    return SfvnnResult(state, tstate, nk, ensemble, reference, time.perf_counter() - started)


def strong_error_study(cfg: MertonConfig, n_paths: int, seed: int, steps=(64, 128, 256)):
    """RMS gap between the true-kernel discrete fixed point and the exact path,
    for coupled grids (coarse increments are sums of the finest ones).

    Returns (dts, gaps, log-log slope).
    """
    finest = Grid(0.0, cfg.T, max(steps) + 1)
    ensemble = MertonEnsemble.simulate(cfg, seed, n_paths, grid=finest)
    dts, gaps = [], []
    for n in steps:
        grid = Grid(0.0, cfg.T, n + 1)
        S = euler_fixed_point(cfg, ensemble.drivers(grid), grid)
        exact = ensemble.exact(grid)
        dts.append(grid.step)
        gaps.append(float(np.sqrt(np.mean((S - exact) ** 2))))
    slope = float(np.polyfit(np.log(dts), np.log(gaps), 1)[0])
    return np.array(dts), np.array(gaps), slope
