"""Fixed-point networks: tied-weight linear stacks, nonlinear stochastic networks
and the Volterra-Fredholm operator with a causal memory kernel."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DimensionError, DivergenceError
from .fixed_point import FixedPointConfig, iterate
from .grid import Grid, KernelSpec, LayerParams, assemble_layer, assemble_readout, kernel_matrix


@dataclass(frozen=True)
class Activation:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    lipschitz: float

    def __call__(self, x):
        return self.fn(x)


def _softplus(x):
    return np.logaddexp(0.0, x)


ACTIVATIONS = {
    "identity": Activation("identity", lambda x: x, 1.0),
    "tanh": Activation("tanh", np.tanh, 1.0),
    "softplus": Activation("softplus", _softplus, 1.0),
}


def get_activation(name: str | Activation) -> Activation:
    if isinstance(name, Activation):
        return name
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ConfigurationError(f"unknown activation {name!r}; known: {sorted(ACTIVATIONS)}") from None


# --------------------------------------------------------------------------
# linear network: M copies of one affine layer
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearSFNN:
    layer: LayerParams
    depth: int
    grid: Grid
    spec: KernelSpec
    path: object = None

    def __post_init__(self):
        if int(self.depth) != self.depth or self.depth < 1:
            raise ConfigurationError("depth must be a positive integer")
        if self.layer.width != self.grid.n_nodes:
            raise DimensionError("layer width does not match the grid")

    @classmethod
    def build(cls, grid: Grid, spec: KernelSpec, depth: int, path=None, kappa: float = 1.0) -> "LinearSFNN":
        return cls(assemble_layer(grid, spec, path, kappa), depth, grid, spec, path)

    @property
    def kappa(self) -> float:
        return self.layer.kappa

    def forcing_vector(self) -> np.ndarray:
        return np.asarray(self.spec.forcing(self.grid.nodes), dtype=float) * np.ones(self.grid.n_nodes)


def run_linear(net: LinearSFNN, g_vec: np.ndarray, depth: int | None = None, return_states: bool = False):
    """Apply the tied affine layer ``depth`` times starting from ``g_vec``."""
    depth = net.depth if depth is None else depth
    y = np.array(g_vec, dtype=float, copy=True)
    if y.shape != (net.layer.width,):
        raise DimensionError(f"input has shape {y.shape}, network width is {net.layer.width}")
    states = [y]
    for m in range(depth):
        y = net.layer(y)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"non-finite activation in layer {m + 1}")
        if return_states:
            states.append(y)
    return (y, states) if return_states else y


def evaluate_offgrid(net: LinearSFNN, t: float, y_prev: np.ndarray) -> float:
    """Network output at an arbitrary ``t`` from the depth-(M-1) hidden state."""
    w0, bias = assemble_readout(t, net.grid, net.spec, net.path, net.kappa)
    y_prev = np.asarray(y_prev, dtype=float)
    if y_prev.shape != w0.shape:
        raise DimensionError("hidden state does not match the grid")
    return float(w0 @ y_prev + bias)


# --------------------------------------------------------------------------
# nonlinear stochastic network
# --------------------------------------------------------------------------


def _frobenius(m: np.ndarray) -> float:
    return float(np.linalg.norm(m))


@dataclass(frozen=True)
class NonlinearDSFNN:
    """X -> f + K phi(X) + G (X * dW).

    ``K`` already carries the quadrature weight dt; ``G`` holds raw kernel
    values and ``dW`` the node increments (last entry 0).
    """

    K: np.ndarray
    G: np.ndarray
    dW: np.ndarray
    f: np.ndarray
    activation: Activation
    dt: float

    def __post_init__(self):
        n = self.f.size
        for name in ("K", "G"):
            if getattr(self, name).shape != (n, n):
                raise DimensionError(f"{name} must be {n}x{n}")
        if self.dW.shape != (n,):
            raise DimensionError("increment vector does not match the grid")
        if not np.isfinite(self.activation(np.zeros(1))).all():
            raise ConfigurationError("activation must be finite at 0")

    @classmethod
    def from_spec(cls, grid: Grid, spec: KernelSpec, path=None, activation="identity") -> "NonlinearDSFNN":
        n = grid.n_nodes
        K = kernel_matrix(spec.kernel, grid, causal=spec.causal) * grid.step
        if spec.stochastic_kernel is not None:
            if path is None:
                raise ConfigurationError("a stochastic kernel needs a Brownian path on the same grid")
            if path.grid != grid:
                raise DimensionError("Brownian path lives on a different grid")
            G = kernel_matrix(spec.stochastic_kernel, grid, causal=spec.causal)
            dW = path.node_increments()
        else:
            G = np.zeros((n, n))
            dW = np.zeros(n)
        f = np.asarray(spec.forcing(grid.nodes), dtype=float) * np.ones(n)
        return cls(K, G, dW, f, get_activation(activation), grid.step)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.f + self.K @ self.activation(x) + self.G @ (x * self.dW)

    __call__ = apply

    def certificate(self) -> float:
        """sqrt(2) (L ||K|| + ||G||) with dt-weighted Frobenius kernel norms."""
        return float(np.sqrt(2.0) * (self.activation.lipschitz * _frobenius(self.K) + _frobenius(self.G) * self.dt))


def run_dsfnn(net: NonlinearDSFNN, cfg: FixedPointConfig):
    return iterate(net.apply, net.f, cfg)


# --------------------------------------------------------------------------
# Volterra-Fredholm operator
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class VolterraFredholmOperator:
    """Y -> f + V phi(Y) + K phi(Y) + G (Y * dW); V and G causal (s <= t)."""

    V: np.ndarray
    K: np.ndarray
    G: np.ndarray
    dW: np.ndarray
    f: np.ndarray
    activation: Activation
    dt: float

    def __post_init__(self):
        n = self.f.size
        for name in ("V", "K", "G"):
            if getattr(self, name).shape != (n, n):
                raise DimensionError(f"{name} must be {n}x{n}")
        if self.dW.shape != (n,):
            raise DimensionError("increment vector does not match the grid")
        for name in ("V", "G"):
            if np.any(np.triu(getattr(self, name), k=1) != 0):
                raise ConfigurationError(f"{name} must vanish for s > t")

    @classmethod
    def from_kernels(cls, grid: Grid, memory, fredholm, forcing, stochastic=None, path=None, activation="identity"):
        n = grid.n_nodes
        V = kernel_matrix(memory, grid, causal=True) * grid.step if memory is not None else np.zeros((n, n))
        K = kernel_matrix(fredholm, grid) * grid.step if fredholm is not None else np.zeros((n, n))
        if stochastic is not None:
            if path is None:
                raise ConfigurationError("a stochastic kernel needs a Brownian path on the same grid")
            if path.grid != grid:
                raise DimensionError("Brownian path lives on a different grid")
            G = kernel_matrix(stochastic, grid, causal=True)
            dW = path.node_increments()
        else:
            G = np.zeros((n, n))
            dW = np.zeros(n)
        f = np.asarray(forcing(grid.nodes), dtype=float) * np.ones(n)
        return cls(V, K, G, dW, f, get_activation(activation), grid.step)

    def apply(self, y: np.ndarray) -> np.ndarray:
        phi = self.activation(y)
        return self.f + self.V @ phi + self.K @ phi + self.G @ (y * self.dW)

    __call__ = apply

    def certificate(self) -> float:
        """L (||V|| + ||K||) + ||G||."""
        L = self.activation.lipschitz
        return float(L * (_frobenius(self.V) + _frobenius(self.K)) + _frobenius(self.G) * self.dt)


def run_volterra_fredholm(op: VolterraFredholmOperator, cfg: FixedPointConfig):
    return iterate(op.apply, op.f, cfg)


def residual_norm(op, y: np.ndarray) -> float:
    """Discrete L2 norm (dt-weighted) of Y - op(Y)."""
    y = np.asarray(y, dtype=float)
    if isinstance(op, LinearSFNN):
        image, dt = op.layer(y), op.grid.step
    else:
        image, dt = op.apply(y), op.dt
    return float(np.sqrt(dt) * np.linalg.norm(y - image))
