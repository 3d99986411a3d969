"""Black-Scholes: barrier boundary-value problem as a Fredholm equation,
heat-kernel (Green's function) pricing, closed-form oracle and a polynomial
Galerkin projection of the price surface.

Barrier problem.  On [H, X] (barrier H, upper strike boundary X) the
stationary price solves

    0.5 sigma^2 S^2 V'' + r S V' - r V = 0,   V(H) = 0,   V(X) = X - H.

Writing nu = V'' and V = (S - H) + int G_D(S, t) nu(t) dt with the Dirichlet
Green's function G_D of d^2/dS^2 on [H, X] gives a second-kind equation

    nu(S) = f(S) + int k(S, t) nu(t) dt,
    k(S, t) = 2r / (sigma^2 S^2) (G_D(S, t) - S d/dS G_D(S, t)),
    f(S) = -2 r H / (sigma^2 S^2),

which is solved by the tied affine iteration nu <- W nu + b.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import solve_banded
from scipy.special import ndtr

from ..errors import ConfigurationError, DomainError
from ..fixed_point import FixedPointConfig, iterate
from ..grid import Grid, LayerParams


@dataclass(frozen=True)
class BsConfig:
    r: float = 0.05
    sigma: float = 0.2
    T: float = 1.0
    strike: float = 100.0
    barrier: float = 80.0
    n_nodes: int = 201

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigurationError("volatility must be positive")
        if not self.T > 0:
            raise ConfigurationError("maturity must be positive")
        if not 0 < self.barrier < self.strike:
            raise ConfigurationError("need 0 < barrier < strike")
        if self.r < 0:
            raise ConfigurationError("rate must be non-negative")

    @property
    def grid(self) -> Grid:
        return Grid(self.barrier, self.strike, self.n_nodes)


def greens_kernel(S: float, t_node: float, cfg: BsConfig) -> float:
    """Piecewise kernel t(X - S) for t <= S, S(X - t) otherwise, on [H, X]."""
    H, X = cfg.barrier, cfg.strike
    for name, v in (("S", S), ("t", t_node)):
        if not H <= v <= X:
            raise DomainError(f"{name}={v} outside [{H}, {X}]")
    if t_node <= S:
        return float(t_node * (X - S))
    return float(S * (X - t_node))


def dirichlet_green(S: np.ndarray, t: np.ndarray, lower: float, upper: float):
    """Green's function of d^2/dS^2 with zero boundary values, and its S-derivative.

    On the seam t = S the derivative jumps by 1; the mean of the two one-sided
    values is returned there.
    """
    L = upper - lower
    S, t = np.broadcast_arrays(np.asarray(S, dtype=float), np.asarray(t, dtype=float))
    below = t <= S
    g = np.where(below, -(t - lower) * (upper - S) / L, -(S - lower) * (upper - t) / L)
    dg = np.where(below, (t - lower) / L, -(upper - t) / L)
    seam = np.isclose(t, S, rtol=0.0, atol=1e-12 * max(1.0, abs(upper)))
    dg = np.where(seam, 0.5 * ((t - lower) / L - (upper - t) / L), dg)
    return g, dg


def trapezoid_weights(grid: Grid) -> np.ndarray:
    w = np.full(grid.n_nodes, grid.step)
    w[0] = w[-1] = 0.5 * grid.step
    return w


def barrier_layer(cfg: BsConfig) -> LayerParams:
    """Affine layer (W, b) of the barrier problem on the configured S-grid."""
    grid = cfg.grid
    S = grid.nodes
    g, dg = dirichlet_green(S[:, None], S[None, :], cfg.barrier, cfg.strike)
    coef = 2.0 * cfg.r / (cfg.sigma**2 * S**2)
    W = coef[:, None] * (g - S[:, None] * dg) * trapezoid_weights(grid)[None, :]
    b = -coef * cfg.barrier
    return LayerParams(W, b, 1.0)


@dataclass(frozen=True)
class BvpSolution:
    S: np.ndarray
    nu: np.ndarray
    V: np.ndarray
    C1: float
    C2: float
    spectral_radius: float


def reconstruct_price(S: np.ndarray, nu: np.ndarray, lower_value: float, upper_value: float):
    """V from V'' = nu by cumulative trapezoid twice plus C1 S + C2 fixed by both ends."""
    I1 = cumulative_trapezoid(nu, S, initial=0.0)
    I2 = cumulative_trapezoid(I1, S, initial=0.0)
    A = np.array([[S[0], 1.0], [S[-1], 1.0]])
    rhs = np.array([lower_value - I2[0], upper_value - I2[-1]])
    if abs(np.linalg.det(A)) < 1e-300:
        raise ConfigurationError("singular boundary system")
    C1, C2 = np.linalg.solve(A, rhs)
    return I2 + C1 * S + C2, float(C1), float(C2)


def solve_barrier_bvp(cfg: BsConfig, fp_cfg: FixedPointConfig | None = None):
    """Iterate the barrier layer to its fixed point nu, then rebuild V."""
    fp_cfg = fp_cfg or FixedPointConfig(tol=1e-13, max_iter=1000)
    layer = barrier_layer(cfg)
    rho = float(np.max(np.abs(np.linalg.eigvals(layer.W))))
    nu, trace = iterate(layer, layer.b, fp_cfg)
    S = cfg.grid.nodes
    V, C1, C2 = reconstruct_price(S, nu, 0.0, cfg.strike - cfg.barrier)
    return BvpSolution(S, nu, V, C1, C2, rho), trace


def barrier_closed_form(S, cfg: BsConfig) -> np.ndarray:
    """V = a S + b S^(-2r/sigma^2) through the two boundary values."""
    S = np.asarray(S, dtype=float)
    H, X = cfg.barrier, cfg.strike
    if cfg.r == 0:
        return S - H
    p = -2.0 * cfg.r / cfg.sigma**2
    a, b = np.linalg.solve(np.array([[H, H**p], [X, X**p]]), np.array([0.0, X - H]))
    return a * S + b * S**p


def finite_difference_bvp(cfg: BsConfig, n_fine: int = 20001) -> tuple[np.ndarray, np.ndarray]:
    """Second-order central differences for the barrier ODE on a fine grid."""
    S = np.linspace(cfg.barrier, cfg.strike, n_fine)
    h = S[1] - S[0]
    Si = S[1:-1]
    diff = 0.5 * cfg.sigma**2 * Si**2 / h**2
    conv = cfg.r * Si / (2.0 * h)
    lower = diff - conv
    main = -2.0 * diff - cfg.r
    upper = diff + conv
    rhs = np.zeros(Si.size)
    rhs[-1] -= upper[-1] * (cfg.strike - cfg.barrier)
    ab = np.zeros((3, Si.size))
    ab[0, 1:] = upper[:-1]
    ab[1] = main
    ab[2, :-1] = lower[1:]
    V = np.concatenate(([0.0], solve_banded((1, 1), ab, rhs), [cfg.strike - cfg.barrier]))
    return S, V


# --------------------------------------------------------------------------
# European call: closed form and Green's-function pricer
# --------------------------------------------------------------------------


def black_scholes_call(S0, strike: float, r: float, sigma: float, T: float):
    S0 = np.asarray(S0, dtype=float)
    v = sigma * np.sqrt(T)
    d1 = (np.log(S0 / strike) + (r + 0.5 * sigma**2) * T) / v
    d2 = d1 - v
    return S0 * ndtr(d1) - strike * np.exp(-r * T) * ndtr(d2)


def _gaussian_tail(lower_z, centre, n_nodes: int, half_width: float):
    """int_{lower_z}^inf exp(-(z - centre)^2 / 2) dz / sqrt(2 pi) by Gauss-Legendre.

    The range is cut to centre +- half_width, beyond which the mass is below
    double precision.
    """
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    a = np.maximum(lower_z, centre - half_width)
    b = centre + half_width
    width = np.maximum(b - a, 0.0)
    z = 0.5 * width[..., None] * x + 0.5 * (a + b)[..., None]
    vals = np.exp(-0.5 * (z - centre[..., None]) ** 2) / np.sqrt(2.0 * np.pi)
    return 0.5 * width * np.sum(w * vals, axis=-1)


def price_greens_function(S0, strike: float, r: float, sigma: float, T: float, n_nodes: int = 96, rule: str = "legendre", half_width: float = 10.0):
    """European call from the heat-kernel representation of the pricing PDE.

    With x = log S, V = exp(a x + b T) w(x, T), where w solves the heat equation
    w_T = 0.5 sigma^2 w_xx with initial data exp(-a xi) (e^xi - K)^+ and
    a = -(r - sigma^2/2) / sigma^2, b = -sigma^2 a^2 / 2 - r.  The convolution
    with the heat kernel is evaluated in the standardized variable
    z = (xi - x) / (sigma sqrt T).
    """
    if min(strike, sigma, T) <= 0 or np.any(np.asarray(S0) <= 0):
        raise ConfigurationError("pricing parameters must be positive")
    S0 = np.asarray(S0, dtype=float)
    a = -(r - 0.5 * sigma**2) / sigma**2
    b = -0.5 * sigma**2 * a**2 - r
    v = sigma * np.sqrt(T)
    x = np.log(S0)
    if rule == "hermite":
        z, w = np.polynomial.hermite_e.hermegauss(n_nodes)
        payoff = np.maximum(np.exp(x[..., None] + v * z) - strike, 0.0)
        w = w / np.sqrt(2.0 * np.pi)
        return np.exp(b * T) * np.sum(w * np.exp(-a * v * z) * payoff, axis=-1)
    if rule != "legendre":
        raise ConfigurationError(f"unknown quadrature rule {rule!r}")
    z_star = (np.log(strike) - x) / v
    # exp(-z^2/2 + c z) = exp(c^2/2) exp(-(z - c)^2 / 2)
    c_asset = np.full_like(x, (1.0 - a) * v)
    c_strike = np.full_like(x, -a * v)
    asset = S0 * np.exp(b * T + 0.5 * c_asset**2) * _gaussian_tail(z_star, c_asset, n_nodes, half_width)
    cash = strike * np.exp(b * T + 0.5 * c_strike**2) * _gaussian_tail(z_star, c_strike, n_nodes, half_width)
    return asset - cash


# --------------------------------------------------------------------------
# Galerkin projection of price curves
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GalerkinConfig:
    lower: float = 1.0
    upper: float = 200.0
    n_nodes: int = 201
    strike: float = 100.0
    r: float = 0.05
    sigma: float = 0.2
    taus: tuple = (1.0, 0.5, 0.25, 0.1)

    @property
    def grid(self) -> Grid:
        return Grid(self.lower, self.upper, self.n_nodes)


def time_slice_curves(cfg: GalerkinConfig, taus=None) -> np.ndarray:
    """Green's-function price curves on the S-grid, one row per time to maturity."""
    taus = cfg.taus if taus is None else taus
    S = cfg.grid.nodes
    return np.stack([price_greens_function(S, cfg.strike, cfg.r, cfg.sigma, tau) for tau in taus])


def galerkin_projection(degree: int, cfg: GalerkinConfig):
    """Least-squares Legendre fit of each price slice; returns (coefficients, global relative L2 error).

    The fit is done directly in the orthogonal basis (SVD least squares), so no
    normal equations are formed.
    """
    if degree < 1:
        raise ConfigurationError("degree must be at least 1")
    S = cfg.grid.nodes
    xs = (2.0 * S - cfg.lower - cfg.upper) / (cfg.upper - cfg.lower)
    basis = np.polynomial.legendre.legvander(xs, degree)
    curves = time_slice_curves(cfg)
    coef, *_ = np.linalg.lstsq(basis, curves.T, rcond=None)
    err = float(np.linalg.norm(basis @ coef - curves.T) / np.linalg.norm(curves))
    return coef.T, err


def galerkin_eval(coef: np.ndarray, S, cfg: GalerkinConfig) -> np.ndarray:
    xs = (2.0 * np.asarray(S, dtype=float) - cfg.lower - cfg.upper) / (cfg.upper - cfg.lower)
    return np.polynomial.legendre.legval(xs, np.asarray(coef).T)
