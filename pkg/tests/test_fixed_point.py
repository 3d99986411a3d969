import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sfnn.errors import ConfigurationError, DivergenceError, EstimationError, NonContractiveError
from sfnn.fixed_point import (
    ErrorBoundReport,
    FixedPointConfig,
    choose_kappa,
    error_bound,
    estimate_contraction,
    estimate_discretization_error,
    forcing_gap,
    iterate,
    prescribe_depth,
    random_probes,
    write_trace_csv,
)
from sfnn.grid import Grid, KernelSpec, make_kernel
from sfnn.stochastic import RandomSeed, sample_brownian


def random_contraction(n, rho, rng):
    W = rng.standard_normal((n, n))
    return W * (rho / np.max(np.abs(np.linalg.eigvals(W))))


def test_identity_converges_in_one_step():
    y0 = np.array([1.0, -2.0, 3.0])
    y, trace = iterate(lambda y: y, y0, FixedPointConfig())
    assert trace.iterations_used == 1
    assert trace.residuals == [0.0]
    assert trace.converged
    np.testing.assert_array_equal(y, y0)


def test_scalar_affine_geometric_series():
    y, trace = iterate(lambda y: 0.5 * y + 1.0, np.zeros(1), FixedPointConfig(tol=1e-14))
    assert y[0] == pytest.approx(2.0, abs=1e-13)
    assert trace.ratio_limit() == pytest.approx(0.5, rel=1e-6)
    assert math.isnan(trace.ratio_estimates[0])


def test_affine_matches_direct_solve():
    rng = np.random.default_rng(1)
    n = 60
    W = random_contraction(n, 0.8, rng)
    b = rng.standard_normal(n)
    eps = 1e-12
    y, trace = iterate(lambda y: W @ y + b, b, FixedPointConfig(tol=eps, max_iter=2000))
    direct = np.linalg.solve(np.eye(n) - W, b)
    assert trace.converged
    assert np.linalg.norm(y - direct) / np.linalg.norm(direct) < 10 * eps * 10


def test_affine_residual_ratio_and_log_linearity():
    rng = np.random.default_rng(2)
    n = 40
    # symmetric, so the dominant mode is real and the decay is not oscillatory
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    W = Q @ np.diag(rng.uniform(-0.7, 0.7, n)) @ Q.T
    b = rng.standard_normal(n)
    _, trace = iterate(lambda y: W @ y + b, np.zeros(n), FixedPointConfig(tol=1e-13, max_iter=2000))
    assert trace.ratio_limit() <= np.linalg.norm(W, 2) + 1e-9
    assert trace.log_linear_r2(10) > 0.99


def test_residuals_nonnegative_and_converged_flag():
    _, trace = iterate(lambda y: 0.9 * y + 1, np.zeros(2), FixedPointConfig(tol=1e-6, max_iter=10))
    assert all(r >= 0 for r in trace.residuals)
    assert not trace.converged
    assert trace.iterations_used == 10
    assert trace.residuals[-1] >= 1e-6


def test_divergence_carries_partial_trace():
    with pytest.raises(DivergenceError) as err:
        iterate(lambda y: 10.0 * y + 1.0, np.ones(3), FixedPointConfig(max_iter=100))
    assert err.value.trace is not None
    assert err.value.trace.iterations_used > 0


def test_growth_guard_trips_before_overflow():
    with pytest.raises(DivergenceError) as err:
        iterate(lambda y: 1.5 * y + 1.0, np.ones(3), FixedPointConfig(max_iter=1000))
    assert err.value.trace.iterations_used < 100


def test_nan_operator_raises_divergence():
    with pytest.raises(DivergenceError):
        iterate(lambda y: y * np.nan, np.ones(2), FixedPointConfig())


def test_km_equivalence_bitwise():
    rng = np.random.default_rng(3)
    n = 20
    W = random_contraction(n, 1.0, rng)
    b = rng.standard_normal(n)
    op = lambda y: W @ y + b
    k = 0.37
    relaxed = lambda y: (1 - k) * y + k * op(y)
    a, b_states = [], []
    iterate(op, np.zeros(n), FixedPointConfig(kappa=k, tol=1e-300, max_iter=25), callback=lambda i, y: a.append(y))
    iterate(relaxed, np.zeros(n), FixedPointConfig(kappa=1.0, tol=1e-300, max_iter=25), callback=lambda i, y: b_states.append(y))
    for u, v in zip(a, b_states):
        assert u.tobytes() == v.tobytes()


def test_km_converges_for_nonexpansive_rotation():
    # rotation has Lipschitz constant exactly 1; plain Picard cycles, KM converges
    c, s = np.cos(0.3), np.sin(0.3)
    R = np.array([[c, -s], [s, c]])
    op = lambda y: R @ y
    y, trace = iterate(op, np.array([1.0, 0.0]), FixedPointConfig(kappa=0.5, tol=1e-10, max_iter=5000))
    assert trace.converged
    assert np.linalg.norm(y) < 1e-8


def test_kappa_schedule():
    cfg = FixedPointConfig(kappa=[1.0, 0.5, 0.5])
    assert cfg.kappa_at(0) == 1.0
    assert cfg.kappa_at(100) == 0.5
    assert cfg.km_divergent()
    assert not FixedPointConfig(kappa=1.0).km_divergent()
    with pytest.raises(ConfigurationError):
        FixedPointConfig(kappa=[0.5, 0.0])


def test_choose_kappa():
    assert choose_kappa(0.9) == 1.0
    assert choose_kappa(1.02) == 0.5
    with pytest.raises(NonContractiveError):
        choose_kappa(1.2)


def test_sup_norm():
    cfg = FixedPointConfig(norm="sup")
    assert cfg.norm_of(np.array([1.0, -3.0])) == 3.0
    with pytest.raises(ConfigurationError):
        FixedPointConfig(norm="l1")


def test_prescribe_depth_half():
    assert prescribe_depth(0.5, 1e-6, 1.0, 0.0) == 21
    assert prescribe_depth(0.5, 1e-6, 0.4, 0.6) == 21


def test_prescribe_depth_clamps_to_one():
    assert prescribe_depth(0.5, 10.0, 1.0, 0.0) == 1


def test_prescribe_depth_q09():
    # ln(1e-3 * 0.1 / 0.1) / ln 0.9 = 65.56
    assert prescribe_depth(0.9, 1e-3, 0.05, 0.05) == 66
    assert math.ceil(math.log(1e-3) / math.log(0.9)) == 66


def test_prescribe_depth_noncontractive():
    with pytest.raises(NonContractiveError):
        prescribe_depth(1.0, 1e-3, 1.0, 0.0)


@given(st.floats(0.05, 0.95), st.floats(1e-10, 1e-1), st.floats(1e-3, 10))
@settings(max_examples=100, deadline=None)
def test_prescribed_depth_meets_tolerance_minimally(q, eps, total):
    m = prescribe_depth(q, eps, total, 0.0)
    assert error_bound(q, m, total, 0.0) <= eps * (1 + 1e-9)
    if m > 1:
        assert error_bound(q, m - 1, total, 0.0) > eps * (1 - 1e-9)


def test_error_bound_report():
    rep = ErrorBoundReport.build(0.5, 0.25, 0.75, 10, 1e-6)
    assert rep.bound == pytest.approx(0.5**10 / 0.5 * 1.0)
    assert rep.M_star == 21
    assert rep.bound >= 0


def test_contraction_estimate_zero_operator():
    b = np.ones(3)
    probes = [(np.zeros(3), np.ones(3)), (np.arange(3.0), -np.arange(3.0))]
    assert estimate_contraction(lambda y: 0 * y + b, probes) == 0.0


def test_contraction_estimate_scalar_slope():
    op = lambda y: 0.5 * y + 7
    probes = [(np.array([0.0]), np.array([1.0])), (np.array([2.0]), np.array([5.0]))]
    assert estimate_contraction(op, probes) == pytest.approx(0.5)


def test_contraction_estimate_skips_identical_pairs():
    op = lambda y: 0.5 * y
    u = np.ones(2)
    assert estimate_contraction(op, [(u, u), (u, 2 * u)]) == pytest.approx(0.5)
    with pytest.raises(EstimationError):
        estimate_contraction(op, [(u, u), (u, u)])
    with pytest.raises(EstimationError):
        estimate_contraction(op, [(u, 2 * u)])


def power_iteration_sigma(W, iters=2000):
    v = np.ones(W.shape[1])
    for _ in range(iters):
        v = W.T @ (W @ v)
        v /= np.linalg.norm(v)
    return np.linalg.norm(W @ v), v


def test_contraction_estimate_vs_power_iteration_oracle():
    rng = np.random.default_rng(4)
    W = rng.standard_normal((30, 30)) / 10
    sigma, v = power_iteration_sigma(W)
    op = lambda y: W @ y + 1.0
    q_random = estimate_contraction(op, random_probes(30, 20, rng))
    assert q_random <= sigma + 1e-12
    q_top = estimate_contraction(op, random_probes(30, 5, rng) + [(v, np.zeros(30))])
    assert q_top == pytest.approx(sigma, rel=1e-9)


def test_forcing_gap():
    assert forcing_gap(lambda y: 0.5 * y + 1, np.array([2.0])) == 0.0
    assert forcing_gap(lambda y: 0.5 * y + 1, np.array([0.0])) == 1.0


G_FINE = Grid(0.0, 1.0, 257)
G_COARSE = Grid(0.0, 1.0, 65)


def test_discretization_error_null_kernels():
    spec = KernelSpec(make_kernel("zero"), lambda t: np.sin(t), make_kernel("zero"))
    paths = [sample_brownian(G_FINE, RandomSeed(0, p)) for p in range(4)]
    assert estimate_discretization_error(spec, G_FINE, G_COARSE, paths) == 0.0


def test_discretization_error_first_order_for_smooth_kernel():
    spec = KernelSpec(make_kernel("gaussian", scale=1.0, width=0.5), lambda t: np.cos(2 * t))
    ref = Grid(0.0, 1.0, 1025)
    errs = [estimate_discretization_error(spec, ref, Grid(0.0, 1.0, n), []) for n in (17, 33, 65, 129)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((rates > 0.8) & (rates < 1.3))


def test_discretization_error_telescoping_stochastic_sum():
    spec = KernelSpec(make_kernel("zero"), lambda t: np.ones_like(t), make_kernel("constant", value=1.0))
    paths = [sample_brownian(G_FINE, RandomSeed(5, p)) for p in range(8)]
    assert estimate_discretization_error(spec, G_FINE, G_COARSE, paths) < 1e-14


def test_discretization_error_rejects_bad_coupling():
    spec = KernelSpec(make_kernel("zero"), lambda t: np.ones_like(t), make_kernel("constant", value=1.0))
    fine = [sample_brownian(G_FINE, RandomSeed(5, p)) for p in range(2)]
    bad = [sample_brownian(G_COARSE, RandomSeed(6, p)) for p in range(2)]
    with pytest.raises(ConfigurationError):
        estimate_discretization_error(spec, G_FINE, G_COARSE, fine, bad)
    with pytest.raises(ConfigurationError):
        estimate_discretization_error(spec, G_FINE, Grid(0.0, 1.0, 100), fine)


def test_trace_csv(tmp_path):
    _, trace = iterate(lambda y: 0.5 * y + 1, np.zeros(1), FixedPointConfig(tol=1e-3))
    p = tmp_path / "t.csv"
    write_trace_csv(trace, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "iteration,residual,ratio_estimate"
    assert len(lines) == trace.iterations_used + 1
    assert b"\r" not in p.read_bytes()
