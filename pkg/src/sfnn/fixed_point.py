"""Picard / Krasnosel'skii-Mann iteration with residual tracking and depth bounds."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DivergenceError, EstimationError, NonContractiveError
from .grid import Grid, KernelSpec, kernel_matrix

Operator = Callable[[np.ndarray], np.ndarray]

DIVERGENCE_THRESHOLD = 1e12
# iterates growing this far beyond the scale of the start are treated as diverged
GROWTH_LIMIT = 1e12
NON_EXPANSIVE_LIMIT = 1.05
FALLBACK_KAPPA = 0.5


@dataclass(frozen=True)
class FixedPointConfig:
    """Relaxation schedule, stopping rule and norm.

    ``kappa`` is a constant in (0, 1] or a sequence; past its end a sequence
    keeps its last value.  ``weight`` scales the discrete L2 norm (use the
    grid step for the mean-square norm); the sup norm ignores it.
    """

    kappa: float | Sequence[float] = 1.0
    tol: float = 1e-10
    max_iter: int = 500
    norm: str = "l2"
    weight: float = 1.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigurationError("tolerance must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigurationError("max_iter must be a positive integer")
        if self.norm not in ("l2", "sup"):
            raise ConfigurationError(f"norm must be 'l2' or 'sup', got {self.norm!r}")
        if not self.weight > 0:
            raise ConfigurationError("norm weight must be positive")
        ks = np.atleast_1d(np.asarray(self.kappa, dtype=float))
        if ks.size == 0 or np.any(~(ks > 0)) or np.any(ks > 1):
            raise ConfigurationError("every relaxation weight must lie in (0, 1]")
        if ks.size > 1:
            object.__setattr__(self, "kappa", tuple(float(k) for k in ks))

    def kappa_at(self, n: int) -> float:
        if isinstance(self.kappa, tuple):
            return self.kappa[min(n, len(self.kappa) - 1)]
        return float(self.kappa)

    def km_divergent(self) -> bool:
        """Whether sum kappa_n (1 - kappa_n) diverges.

        A constant schedule, or a finite sequence extended by its last value,
        diverges exactly when that tail value is strictly inside (0, 1).
        """
        tail = self.kappa_at(10**9)
        return 0.0 < tail < 1.0

    def norm_of(self, v: np.ndarray) -> float:
        if self.norm == "sup":
            return float(np.max(np.abs(v))) if v.size else 0.0
        return float(np.sqrt(self.weight) * np.linalg.norm(v))


def choose_kappa(q_hat: float) -> float:
    """Default relaxation: plain Picard when contractive, 0.5 when near non-expansive."""
    if q_hat < 1.0:
        return 1.0
    if q_hat <= NON_EXPANSIVE_LIMIT:
        return FALLBACK_KAPPA
    raise NonContractiveError(f"estimated Lipschitz constant {q_hat:.4g} exceeds {NON_EXPANSIVE_LIMIT}")


@dataclass
class IterationTrace:
    residuals: list = field(default_factory=list)
    ratio_estimates: list = field(default_factory=list)
    timestamps: list = field(default_factory=list)
    iterations_used: int = 0
    converged: bool = False

    def record(self, residual: float, started: float) -> None:
        prev = self.residuals[-1] if self.residuals else None
        self.residuals.append(float(residual))
        if prev is None or prev == 0:
            self.ratio_estimates.append(float("nan"))
        else:
            self.ratio_estimates.append(float(residual) / prev)
        self.timestamps.append(time.perf_counter() - started)
        self.iterations_used = len(self.residuals)

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")

    def ratio_limit(self, last: int = 5) -> float:
        r = np.asarray(self.ratio_estimates[-last:], dtype=float)
        r = r[np.isfinite(r)]
        return float(np.median(r)) if r.size else float("nan")

    def log_linear_r2(self, last: int = 10) -> float:
        """R^2 of a straight-line fit to log residuals over the last iterations."""
        r = np.asarray(self.residuals[-last:], dtype=float)
        r = r[r > 0]
        if r.size < 3:
            return float("nan")
        n = np.arange(r.size, dtype=float)
        y = np.log(r)
        coef = np.polyfit(n, y, 1)
        ss_res = np.sum((y - np.polyval(coef, n)) ** 2)
        ss_tot = np.sum((y - y.mean()) ** 2)
        return float(1.0 - ss_res / ss_tot) if ss_tot > 0 else 1.0


def iterate(op: Operator, y0: np.ndarray, cfg: FixedPointConfig, callback=None):
    """Run Y_{n+1} = (1 - k_n) Y_n + k_n op(Y_n) until the relative residual drops below tol.

    Returns ``(Y, trace)``.  ``callback(n, Y)`` is called after every step.
    """
    y = np.array(y0, dtype=float, copy=True)
    if not np.all(np.isfinite(y)):
        raise ConfigurationError("initial iterate must be finite")
    trace = IterationTrace()
    started = time.perf_counter()
    scale = None
    for n in range(cfg.max_iter):
        k = cfg.kappa_at(n)
        fy = np.asarray(op(y), dtype=float)
        y_next = fy if k == 1.0 else (1.0 - k) * y + k * fy
        if not np.all(np.isfinite(y_next)):
            raise DivergenceError(f"non-finite iterate at step {n + 1}", trace)
        if scale is None:
            scale = max(cfg.norm_of(y), cfg.norm_of(y_next), 1.0)
        size = cfg.norm_of(y_next)
        residual = cfg.norm_of(y_next - y) / max(size, 1.0)
        trace.record(residual, started)
        if size > GROWTH_LIMIT * scale:
            raise DivergenceError(f"iterate norm {size:.3g} grew past {GROWTH_LIMIT:g} times its start at step {n + 1}", trace)
        y = y_next
        if callback is not None:
            callback(n + 1, y)
        if residual > DIVERGENCE_THRESHOLD:
            raise DivergenceError(f"residual {residual:.3g} above {DIVERGENCE_THRESHOLD:g} at step {n + 1}", trace)
        if residual < cfg.tol:
            trace.converged = True
            break
    return y, trace


def estimate_contraction(op: Operator, probes: Sequence[tuple[np.ndarray, np.ndarray]], norm=None) -> float:
    """Largest observed ratio ||op(u) - op(v)|| / ||u - v|| over the probe pairs."""
    if len(probes) < 2:
        raise EstimationError("need at least two probe pairs")
    norm = norm or (lambda v: float(np.linalg.norm(v)))
    best = None
    for u, v in probes:
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        d = norm(u - v)
        if d == 0:
            continue
        ratio = norm(np.asarray(op(u)) - np.asarray(op(v))) / d
        best = ratio if best is None else max(best, ratio)
    if best is None:
        raise EstimationError("all probe pairs are identical")
    return float(best)


def random_probes(n: int, count: int, rng: np.random.Generator, scale: float = 1.0):
    return [(scale * rng.standard_normal(n), scale * rng.standard_normal(n)) for _ in range(count)]


def prescribe_depth(q: float, eps: float, c_dt: float, forcing_gap: float) -> int:
    """Smallest depth M with q^M / (1 - q) (C + gap) <= eps (at least 1)."""
    if not q < 1:
        raise NonContractiveError(f"depth bound undefined for q={q}")
    if not q > 0:
        raise ConfigurationError("q must be positive")
    if not eps > 0:
        raise ConfigurationError("tolerance must be positive")
    total = c_dt + forcing_gap
    if not total > 0:
        raise ConfigurationError("C_dt + forcing_gap must be positive")
    arg = eps * (1.0 - q) / total
    if arg >= 1.0:
        return 1
    return max(1, math.ceil(math.log(arg) / math.log(q)))


def error_bound(q: float, depth: int, c_dt: float, forcing_gap: float) -> float:
    if not 0 <= q < 1:
        raise NonContractiveError(f"error bound undefined for q={q}")
    return float(q**depth / (1.0 - q) * (c_dt + forcing_gap))


@dataclass(frozen=True)
class ErrorBoundReport:
    q: float
    c_dt: float
    forcing_gap: float
    depth: int
    bound: float
    M_star: int

    @classmethod
    def build(cls, q: float, c_dt: float, forcing_gap: float, depth: int, eps: float) -> "ErrorBoundReport":
        return cls(
            q=float(q),
            c_dt=float(c_dt),
            forcing_gap=float(forcing_gap),
            depth=int(depth),
            bound=error_bound(q, depth, c_dt, forcing_gap),
            M_star=prescribe_depth(q, eps, c_dt, forcing_gap),
        )


def forcing_gap(op: Operator, g: np.ndarray, norm=None) -> float:
    """||S g - g|| from one application of the operator at the forcing."""
    norm = norm or (lambda v: float(np.linalg.norm(v)))
    g = np.asarray(g, dtype=float)
    return norm(np.asarray(op(g)) - g)


def _quadrature(spec: KernelSpec, grid: Grid, g: np.ndarray, dW: np.ndarray | None) -> np.ndarray:
    out = kernel_matrix(spec.kernel, grid, causal=spec.causal) @ g * grid.step
    if spec.stochastic_kernel is not None and dW is not None:
        dW_nodes = np.append(dW, 0.0)
        out = out + kernel_matrix(spec.stochastic_kernel, grid, causal=spec.causal) @ (g * dW_nodes)
    return out


def estimate_discretization_error(spec: KernelSpec, grid_fine: Grid, grid_coarse: Grid, paths, coarse_paths=None) -> float:
    """RMS gap between coarse and fine quadratures of the integral terms applied to g.

    ``paths`` are Brownian paths on the fine grid (or an empty sequence when
    G is absent).  Coarse increments are obtained by summing fine ones; if
    ``coarse_paths`` are given they must match that coupling.
    """
    factor = grid_fine.refinement_factor(grid_coarse)
    g_fine = np.asarray(spec.forcing(grid_fine.nodes), dtype=float) * np.ones(grid_fine.n_nodes)
    g_coarse = g_fine[::factor]
    paths = list(paths) if paths is not None else []
    if spec.stochastic_kernel is not None and not paths:
        raise ConfigurationError("a stochastic kernel needs a Brownian ensemble")
    if coarse_paths is not None and len(coarse_paths) != len(paths):
        raise ConfigurationError("coarse and fine ensembles differ in size")

    sq = []
    for idx, path in enumerate(paths or [None]):
        dW_f = dW_c = None
        if path is not None:
            if path.grid != grid_fine:
                raise ConfigurationError("ensemble paths must live on the fine grid")
            dW_f = path.increments
            dW_c = dW_f.reshape(grid_coarse.n_intervals, factor).sum(axis=1)
            if coarse_paths is not None:
                given = np.asarray(coarse_paths[idx].increments)
                if not np.allclose(given, dW_c, rtol=1e-10, atol=1e-12):
                    raise ConfigurationError("coarse increments are not sums of the fine increments")
                dW_c = given
        fine = _quadrature(spec, grid_fine, g_fine, dW_f)[::factor]
        coarse = _quadrature(spec, grid_coarse, g_coarse, dW_c)
        sq.append(np.mean((coarse - fine) ** 2))
    return float(np.sqrt(np.mean(sq)))


def write_trace_csv(trace: IterationTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "residual", "ratio_estimate"])
        for i, (r, q) in enumerate(zip(trace.residuals, trace.ratio_estimates), start=1):
            w.writerow([i, repr(r), repr(q)])
