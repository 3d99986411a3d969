"""Uniform grids, kernel catalogue and assembly of affine layer parameters.

A discretized second-kind equation

    Y(t) = g(t) + int K(t,s) Y(s) ds + int G(t,s) Y(s) dW(s)

on nodes t_1..t_n becomes one affine layer ``Y -> W Y + b`` with

    W_ij = kappa K(t_i,t_j) dt + kappa G(t_i,t_j) dW_j + (1 - kappa) delta_ij
    b_i  = kappa g(t_i)

Both sums use the same uniform node weight ``dt``; the Brownian increment
paired with node j is the increment over [t_j, t_{j+1}] (Ito, non-anticipating),
so the last node carries no stochastic weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DimensionError, DomainError

KernelFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
ForcingFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Grid:
    lower: float
    upper: float
    n_nodes: int

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ConfigurationError("grid bounds must be finite")
        if self.upper <= self.lower:
            raise ConfigurationError(f"grid needs upper > lower, got [{self.lower}, {self.upper}]")
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 2:
            raise ConfigurationError(f"grid needs at least 2 nodes (one interval), got {self.n_nodes}")

    @property
    def step(self) -> float:
        return (self.upper - self.lower) / (self.n_nodes - 1)

    @property
    def n_intervals(self) -> int:
        return self.n_nodes - 1

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.lower, self.upper, self.n_nodes)

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def contains(self, t: float, *, atol: float = 1e-12) -> bool:
        scale = atol * max(1.0, abs(self.lower), abs(self.upper))
        return self.lower - scale <= t <= self.upper + scale

    def refine(self, factor: int) -> "Grid":
        if int(factor) != factor or factor < 1:
            raise ConfigurationError("refinement factor must be a positive integer")
        return Grid(self.lower, self.upper, self.n_intervals * int(factor) + 1)

    def refinement_factor(self, coarse: "Grid") -> int:
        """Integer factor by which ``self`` refines ``coarse``; raises otherwise."""
        if not (np.isclose(self.lower, coarse.lower) and np.isclose(self.upper, coarse.upper)):
            raise ConfigurationError("grids cover different intervals")
        factor, rem = divmod(self.n_intervals, coarse.n_intervals)
        if rem or factor < 1:
            raise ConfigurationError(
                f"{self.n_intervals} intervals do not refine {coarse.n_intervals} by an integer factor"
            )
        return factor


# --------------------------------------------------------------------------
# Kernel and forcing catalogues (selectable by name from config files)
# --------------------------------------------------------------------------

KERNELS: dict[str, Callable[..., KernelFn]] = {}
FORCINGS: dict[str, Callable[..., ForcingFn]] = {}


def register_kernel(name: str):
    def deco(factory):
        KERNELS[name] = factory
        return factory

    return deco


def register_forcing(name: str):
    def deco(factory):
        FORCINGS[name] = factory
        return factory

    return deco


def make_kernel(name: str, **params) -> KernelFn:
    try:
        factory = KERNELS[name]
    except KeyError:
        raise ConfigurationError(f"unknown kernel {name!r}; known: {sorted(KERNELS)}") from None
    return factory(**params)


def make_forcing(name: str, **params) -> ForcingFn:
    try:
        factory = FORCINGS[name]
    except KeyError:
        raise ConfigurationError(f"unknown forcing {name!r}; known: {sorted(FORCINGS)}") from None
    return factory(**params)


@register_kernel("zero")
def _zero_kernel() -> KernelFn:
    return lambda t, s: np.zeros(np.broadcast(t, s).shape)


@register_kernel("constant")
def _constant_kernel(value: float = 1.0) -> KernelFn:
    return lambda t, s: np.full(np.broadcast(t, s).shape, float(value))


@register_kernel("exp_decay")
def _exp_decay_kernel(beta: float = 1.0, gamma: float = 1.0) -> KernelFn:
    return lambda t, s: beta * np.exp(-gamma * np.abs(t - s))


@register_kernel("exp_memory")
def _exp_memory_kernel(beta: float = 1.0, gamma: float = 1.0) -> KernelFn:
    # meant for causal use (s <= t); the exponent is clipped so s > t cannot overflow
    return lambda t, s: beta * np.exp(-gamma * np.maximum(t - s, 0.0))


@register_kernel("gaussian")
def _gaussian_kernel(scale: float = 1.0, width: float = 0.25) -> KernelFn:
    return lambda t, s: scale * np.exp(-0.5 * ((t - s) / width) ** 2)


@register_kernel("separable")
def _separable_kernel(scale: float = 1.0) -> KernelFn:
    return lambda t, s: scale * t * s


@register_kernel("cosine")
def _cosine_kernel(scale: float = 1.0, freq: float = 1.0) -> KernelFn:
    return lambda t, s: scale * np.cos(freq * (t - s))


@register_forcing("constant")
def _constant_forcing(value: float = 1.0) -> ForcingFn:
    return lambda t: np.full(np.shape(t), float(value))


@register_forcing("exp")
def _exp_forcing(amplitude: float = 1.0, rate: float = 1.0) -> ForcingFn:
    return lambda t: amplitude * np.exp(-rate * np.asarray(t, dtype=float))


@register_forcing("sin")
def _sin_forcing(amplitude: float = 1.0, freq: float = 1.0, offset: float = 0.0) -> ForcingFn:
    return lambda t: offset + amplitude * np.sin(freq * np.asarray(t, dtype=float))


@register_forcing("linear")
def _linear_forcing(intercept: float = 0.0, slope: float = 1.0) -> ForcingFn:
    return lambda t: intercept + slope * np.asarray(t, dtype=float)


@dataclass(frozen=True)
class KernelSpec:
    """Kernels and forcing of one second-kind equation.

    ``stochastic_kernel=None`` means the deterministic Fredholm case.  With
    ``causal=True`` both kernels vanish for s > t (the diagonal s = t is kept).
    """

    kernel: KernelFn
    forcing: ForcingFn
    stochastic_kernel: KernelFn | None = None
    causal: bool = False

    def with_forcing(self, forcing: ForcingFn) -> "KernelSpec":
        return KernelSpec(self.kernel, forcing, self.stochastic_kernel, self.causal)

    def check_bounded(self, grid: Grid) -> None:
        for name, fn in (("K", self.kernel), ("G", self.stochastic_kernel)):
            if fn is None:
                continue
            values = kernel_matrix(fn, grid, causal=self.causal)
            if not np.all(np.isfinite(values)):
                raise ConfigurationError(f"kernel {name} is not bounded on the grid")


def kernel_matrix(fn: KernelFn, grid: Grid, *, causal: bool = False) -> np.ndarray:
    """Kernel values ``fn(t_i, t_j)`` on all node pairs (masked above the diagonal if causal)."""
    t = grid.nodes
    values = np.array(np.broadcast_to(fn(t[:, None], t[None, :]), (t.size, t.size)), dtype=float)
    if causal:
        values = np.tril(values)
    return values


def _kernel_row(fn: KernelFn, t: float, grid: Grid, causal: bool) -> np.ndarray:
    nodes = grid.nodes
    row = np.array(np.broadcast_to(fn(np.float64(t), nodes), nodes.shape), dtype=float)
    if causal:
        row[nodes > t] = 0.0
    return row


def _node_increments(path, grid: Grid) -> np.ndarray:
    if path.grid != grid:
        raise DimensionError(f"Brownian path lives on {path.grid}, layer grid is {grid}")
    return path.node_increments()


@dataclass(frozen=True)
class LayerParams:
    W: np.ndarray
    b: np.ndarray
    kappa: float = 1.0
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    def __call__(self, y: np.ndarray) -> np.ndarray:
        return self.W @ y + self.b

    @property
    def width(self) -> int:
        return self.b.size


def _check_kappa(kappa: float) -> float:
    if not (0.0 < kappa <= 1.0):
        raise ConfigurationError(f"relaxation weight must lie in (0, 1], got {kappa}")
    return float(kappa)


def assemble_layer(grid: Grid, spec: KernelSpec, path=None, kappa: float = 1.0) -> LayerParams:
    """Affine layer (W, b) of the relaxed discrete operator on ``grid``."""
    kappa = _check_kappa(kappa)
    dt = grid.step
    det = kernel_matrix(spec.kernel, grid, causal=spec.causal) * dt
    if spec.stochastic_kernel is not None:
        if path is None:
            raise ConfigurationError("a stochastic kernel needs a Brownian path on the same grid")
        dW = _node_increments(path, grid)
        sto = kernel_matrix(spec.stochastic_kernel, grid, causal=spec.causal) * dW[None, :]
        W = kappa * det + kappa * sto
    else:
        if path is not None:
            _node_increments(path, grid)
        W = kappa * det
    W = W + (1.0 - kappa) * np.eye(grid.n_nodes)
    b = kappa * np.asarray(spec.forcing(grid.nodes), dtype=float)
    return LayerParams(W, np.broadcast_to(b, (grid.n_nodes,)).copy(), kappa)


def assemble_readout(t: float, grid: Grid, spec: KernelSpec, path=None, kappa: float = 1.0):
    """Readout row ``W0`` and bias for evaluating the network at an arbitrary ``t``.

    At a grid node this is the corresponding row of :func:`assemble_layer`
    without the ``(1 - kappa)`` identity part.
    """
    kappa = _check_kappa(kappa)
    if not grid.contains(t):
        raise DomainError(f"t={t} outside [{grid.lower}, {grid.upper}]")
    w0 = kappa * _kernel_row(spec.kernel, t, grid, spec.causal) * grid.step
    if spec.stochastic_kernel is not None:
        if path is None:
            raise ConfigurationError("a stochastic kernel needs a Brownian path on the same grid")
        dW = _node_increments(path, grid)
        w0 = w0 + kappa * _kernel_row(spec.stochastic_kernel, t, grid, spec.causal) * dW
    bias = kappa * float(np.asarray(spec.forcing(np.float64(t)), dtype=float))
    return w0, bias


def kernel_l2_norm(fn: KernelFn | None, grid: Grid, *, causal: bool = False) -> float:
    """Discrete L2([a,b]^2) kernel norm: Frobenius norm weighted by dt^2."""
    if fn is None:
        return 0.0
    return float(np.linalg.norm(kernel_matrix(fn, grid, causal=causal)) * grid.step)


def operator_norm_bound(spec: KernelSpec, grid: Grid, path=None, lipschitz: float = 1.0) -> float:
    """Mean-square Lipschitz bound sqrt(2) (L_phi ||K|| + ||G||).

    ``path`` is accepted for signature symmetry only: by the Ito isometry the
    stochastic term is bounded by the deterministic L2 norm of G.
    """
    k = kernel_l2_norm(spec.kernel, grid, causal=spec.causal)
    g = kernel_l2_norm(spec.stochastic_kernel, grid, causal=spec.causal)
    return float(np.sqrt(2.0) * (lipschitz * k + g))
