"""Learned kernel K_theta(t, s): a 2-32-32-1 tanh network trained by plain SGD
on the squared residual of a pathwise integral equation.

Forward and backward passes are written out by hand in numpy; the parameter
vector is flat so it can be checkpointed and finite-differenced directly.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, DimensionError, TrainingError
from .grid import Grid
from .stochastic import RandomSeed, generator, uniforms

LAYER_SIZES = (2, 32, 32, 1)
MA_WINDOW = 10
_MAGIC = b"SFNNKER1"


def _shapes(sizes=LAYER_SIZES):
    out = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        out.append((fan_out, fan_in))
        out.append((fan_out,))
    return out


def parameter_count(sizes=LAYER_SIZES) -> int:
    return int(sum(np.prod(s) for s in _shapes(sizes)))


def _unpack(theta: np.ndarray, sizes=LAYER_SIZES):
    parts, pos = [], 0
    for shape in _shapes(sizes):
        size = int(np.prod(shape))
        parts.append(theta[pos : pos + size].reshape(shape))
        pos += size
    return parts


def glorot_theta(seed: RandomSeed, sizes=LAYER_SIZES) -> np.ndarray:
    """Glorot-uniform weights, zero biases, drawn from the seed's init stream."""
    n_weights = sum(a * b for a, b in zip(sizes[:-1], sizes[1:]))
    u = uniforms(seed, "init", n_weights)
    theta, pos = [], 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = (2.0 * u[pos : pos + fan_in * fan_out] - 1.0) * limit
        pos += fan_in * fan_out
        theta.extend([w, np.zeros(fan_out)])
    return np.concatenate(theta)


@dataclass
class NeuralKernel:
    theta: np.ndarray
    init_seed: RandomSeed
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (parameter_count(),):
            raise DimensionError(f"expected {parameter_count()} parameters, got {self.theta.shape}")
        if not self.upper > self.lower:
            raise ConfigurationError("kernel domain needs upper > lower")

    @classmethod
    def initialize(cls, init_seed: RandomSeed, lower: float = 0.0, upper: float = 1.0) -> "NeuralKernel":
        return cls(glorot_theta(init_seed), init_seed, lower, upper)

    @classmethod
    def zeros(cls, lower: float = 0.0, upper: float = 1.0) -> "NeuralKernel":
        return cls(np.zeros(parameter_count()), RandomSeed(0), lower, upper)

    def normalize(self, t, s) -> np.ndarray:
        span = self.upper - self.lower
        t = (np.asarray(t, dtype=float) - self.lower) / span
        s = (np.asarray(s, dtype=float) - self.lower) / span
        t, s = np.broadcast_arrays(t, s)
        return np.stack([t.ravel(), s.ravel()], axis=1)

    def copy(self) -> "NeuralKernel":
        return replace(self, theta=self.theta.copy())


def _forward(theta: np.ndarray, x: np.ndarray):
    W1, b1, W2, b2, W3, b3 = _unpack(theta)
    a1 = np.tanh(x @ W1.T + b1)
    a2 = np.tanh(a1 @ W2.T + b2)
    out = a2 @ W3.T + b3
    return out[:, 0], (x, a1, a2)


def _backward(theta: np.ndarray, cache, grad_out: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. theta of sum(grad_out * output)."""
    W1, b1, W2, b2, W3, b3 = _unpack(theta)
    x, a1, a2 = cache
    go = grad_out.reshape(-1, 1)
    gW3 = go.T @ a2
    gb3 = go.sum(axis=0)
    d2 = (go @ W3) * (1.0 - a2**2)
    gW2 = d2.T @ a1
    gb2 = d2.sum(axis=0)
    d1 = (d2 @ W2) * (1.0 - a1**2)
    gW1 = d1.T @ x
    gb1 = d1.sum(axis=0)
    return np.concatenate([g.ravel() for g in (gW1, gb1, gW2, gb2, gW3, gb3)])


def kernel_forward(nk: NeuralKernel, t: float, s: float) -> float:
    out, _ = _forward(nk.theta, nk.normalize(t, s))
    return float(out[0])


def kernel_forward_grad(nk: NeuralKernel, t: float, s: float) -> np.ndarray:
    """d K_theta(t, s) / d theta."""
    _, cache = _forward(nk.theta, nk.normalize(t, s))
    return _backward(nk.theta, cache, np.ones(1))


def _grid_inputs(nk: NeuralKernel, grid: Grid) -> np.ndarray:
    t = grid.nodes
    return nk.normalize(t[:, None], t[None, :])


def kernel_matrix(nk: NeuralKernel, grid: Grid) -> np.ndarray:
    out, _ = _forward(nk.theta, _grid_inputs(nk, grid))
    return out.reshape(grid.n_nodes, grid.n_nodes)


# --------------------------------------------------------------------------
# residual loss
# --------------------------------------------------------------------------


def stochastic_sums(states: np.ndarray, drivers: np.ndarray) -> np.ndarray:
    """sum_{j<i} S_j c_j for every node i (0 at the first node)."""
    out = np.zeros_like(states)
    out[:, 1:] = np.cumsum(states[:, :-1] * drivers, axis=1)
    return out


def _residuals(K: np.ndarray, states: np.ndarray, drivers: np.ndarray, dt: float, anchor: float):
    return states - anchor - dt * states @ K.T - stochastic_sums(states, drivers)


def residual_loss(nk: NeuralKernel, states, drivers, grid: Grid, anchor: float = 1.0) -> float:
    """Mean over paths of sum_i R_i^2 dt, with

        R_i = S_i - anchor - sum_j K(t_i,t_j) S_j dt - sum_{j<i} S_j c_j

    ``drivers`` holds the per-interval stochastic increments c_j (one row per path).
    """
    return matrix_residual_loss(kernel_matrix(nk, grid), states, drivers, grid, anchor)


def matrix_residual_loss(K: np.ndarray, states, drivers, grid: Grid, anchor: float = 1.0) -> float:
    """Same loss for an explicit kernel matrix K[i, j] = K(t_i, t_j)."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    drivers = np.atleast_2d(np.asarray(drivers, dtype=float))
    if states.shape[0] == 0:
        raise ConfigurationError("empty path ensemble")
    if states.shape[1] != grid.n_nodes or drivers.shape != (states.shape[0], grid.n_intervals):
        raise DimensionError("states/drivers do not match the grid")
    if np.shape(K) != (grid.n_nodes, grid.n_nodes):
        raise DimensionError("kernel matrix does not match the grid")
    R = _residuals(np.asarray(K, dtype=float), states, drivers, grid.step, anchor)
    return float(np.mean(np.sum(R * R, axis=1)) * grid.step)


@dataclass
class ResidualObjective:
    """Residual loss over a frozen ensemble, evaluated on minibatches.

    States are divided by ``scale`` (typically S0) so the loss is unit-free;
    the anchor of the equation then becomes ``anchor / scale``.
    """

    states: np.ndarray
    drivers: np.ndarray
    grid: Grid
    anchor: float = 1.0
    scale: float = 1.0
    lower: float = field(init=False)
    upper: float = field(init=False)

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float)) / self.scale
        self.drivers = np.atleast_2d(np.asarray(self.drivers, dtype=float))
        if self.states.shape[0] == 0:
            raise ConfigurationError("empty path ensemble")
        if self.states.shape[1] != self.grid.n_nodes or self.drivers.shape != (self.states.shape[0], self.grid.n_intervals):
            raise DimensionError("states/drivers do not match the grid")
        self.lower, self.upper = self.grid.lower, self.grid.upper
        self._x = NeuralKernel.zeros(self.lower, self.upper).normalize(
            self.grid.nodes[:, None], self.grid.nodes[None, :]
        )

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    def __call__(self, theta: np.ndarray, batch=None):
        S = self.states if batch is None else self.states[batch]
        c = self.drivers if batch is None else self.drivers[batch]
        n, dt = self.grid.n_nodes, self.grid.step
        out, cache = _forward(theta, self._x)
        K = out.reshape(n, n)
        R = _residuals(K, S, c, dt, self.anchor / self.scale)
        P = S.shape[0]
        loss = float(np.mean(np.sum(R * R, axis=1)) * dt)
        gK = -2.0 * dt * dt * (R.T @ S) / P
        return loss, _backward(theta, cache, gK.ravel())


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


@dataclass
class TrainState:
    learning_rate: float = 1e-2
    step: int = 0
    loss_history: list = field(default_factory=list)
    moving_average: list = field(default_factory=list)
    outer_history: list = field(default_factory=list)
    outer_iteration: int = 0

    def record(self, loss: float) -> None:
        self.loss_history.append(float(loss))
        window = self.loss_history[-MA_WINDOW:]
        self.moving_average.append(float(np.mean(window)))
        self.outer_history.append(self.outer_iteration)
        self.step += 1

    def snapshot(self) -> "TrainState":
        return TrainState(
            self.learning_rate,
            self.step,
            list(self.loss_history),
            list(self.moving_average),
            list(self.outer_history),
            self.outer_iteration,
        )


def train_step(nk: NeuralKernel, state: TrainState, objective, batch=None) -> TrainState:
    """One SGD step on ``objective(theta, batch) -> (loss, grad)``; updates nk.theta in place."""
    if state.learning_rate < 0:
        raise ConfigurationError("learning rate must be non-negative")
    loss, grad = objective(nk.theta, batch)
    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise TrainingError(f"non-finite loss or gradient at step {state.step}", state.snapshot())
    if state.learning_rate:
        nk.theta = nk.theta - state.learning_rate * grad
    state.record(loss)
    return state


def train_sweep(nk: NeuralKernel, state: TrainState, objective: ResidualObjective, steps: int, batch_size: int, seed: RandomSeed):
    """``steps`` SGD steps on minibatches drawn without replacement from the ensemble."""
    if batch_size < 1:
        raise ConfigurationError("batch size must be positive")
    batch_size = min(batch_size, objective.n_paths)
    rng = generator(seed, "batches")
    for _ in range(steps):
        batch = np.sort(rng.choice(objective.n_paths, size=batch_size, replace=False))
        train_step(nk, state, objective, batch)
    return state


def reinitialize_for_outer(nk: NeuralKernel, outer_k: int, state: TrainState | None = None) -> NeuralKernel:
    """Fresh kernel from the init stream ``stream_id XOR outer_k``."""
    if outer_k < 1:
        raise ConfigurationError("outer iteration index starts at 1")
    seed = nk.init_seed.stream(nk.init_seed.stream_id ^ int(outer_k))
    if state is not None:
        state.outer_iteration += 1
    return NeuralKernel(glorot_theta(seed), nk.init_seed, nk.lower, nk.upper)


def save_checkpoint(nk: NeuralKernel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(LAYER_SIZES)))
        fh.write(struct.pack(f"<{len(LAYER_SIZES)}I", *LAYER_SIZES))
        fh.write(struct.pack("<2d", nk.lower, nk.upper))
        fh.write(struct.pack("<2Q", nk.init_seed.seed, nk.init_seed.stream_id))
        fh.write(nk.theta.astype("<f8").tobytes())


def load_checkpoint(path) -> NeuralKernel:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(_MAGIC):
        raise ConfigurationError(f"{path}: not a kernel checkpoint")
    pos = len(_MAGIC)
    (n_layers,) = struct.unpack_from("<I", data, pos)
    pos += 4
    sizes = struct.unpack_from(f"<{n_layers}I", data, pos)
    pos += 4 * n_layers
    if tuple(sizes) != LAYER_SIZES:
        raise ConfigurationError(f"{path}: architecture {sizes} does not match {LAYER_SIZES}")
    lower, upper = struct.unpack_from("<2d", data, pos)
    pos += 16
    seed, stream = struct.unpack_from("<2Q", data, pos)
    pos += 16
    theta = np.frombuffer(data, dtype="<f8", offset=pos).astype(float)
    return NeuralKernel(theta, RandomSeed(seed, stream), lower, upper)


def write_loss_csv(state: TrainState, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["global_step", "outer_iteration", "loss", "moving_average"])
        for i, (k, loss, ma) in enumerate(zip(state.outer_history, state.loss_history, state.moving_average)):
            w.writerow([i, k, repr(loss), repr(ma)])
