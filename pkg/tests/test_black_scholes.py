import numpy as np
import pytest

from sfnn.apps.black_scholes import (
    BsConfig,
    GalerkinConfig,
    barrier_closed_form,
    black_scholes_call,
    finite_difference_bvp,
    galerkin_eval,
    galerkin_projection,
    greens_kernel,
    price_greens_function,
    reconstruct_price,
    solve_barrier_bvp,
    time_slice_curves,
)
from sfnn.errors import ConfigurationError, DomainError

CFG = BsConfig()


def test_kernel_continuous_at_seam():
    for S in (80.0, 90.0, 99.5):
        assert greens_kernel(S, S, CFG) == pytest.approx(S * (CFG.strike - S))


def test_kernel_branch_values():
    H, X = CFG.barrier, CFG.strike
    assert greens_kernel(90.0, H, CFG) == H * (X - 90.0)
    assert greens_kernel(85.0, 95.0, CFG) == 85.0 * (X - 95.0)
    assert greens_kernel(X, X, CFG) == 0.0
    assert greens_kernel(X, 90.0, CFG) == 0.0


def test_kernel_domain():
    with pytest.raises(DomainError):
        greens_kernel(79.0, 90.0, CFG)
    with pytest.raises(DomainError):
        greens_kernel(90.0, 101.0, CFG)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        BsConfig(barrier=120.0)
    with pytest.raises(ConfigurationError):
        BsConfig(sigma=0.0)


def test_zero_rate_gives_straight_line():
    cfg = BsConfig(r=0.0)
    sol, _ = solve_barrier_bvp(cfg)
    np.testing.assert_allclose(sol.nu, 0.0, atol=1e-15)
    np.testing.assert_allclose(sol.V, sol.S - cfg.barrier, atol=1e-12)


def test_boundary_values_enforced():
    sol, trace = solve_barrier_bvp(CFG)
    assert trace.converged
    assert abs(sol.V[0]) < 1e-8
    assert abs(sol.V[-1] - (CFG.strike - CFG.barrier)) < 1e-8


def test_reconstruct_recovers_quadratic():
    S = np.linspace(1.0, 3.0, 101)
    V, C1, C2 = reconstruct_price(S, np.full_like(S, 2.0), 1.0, 9.0)
    np.testing.assert_allclose(V, S**2, atol=1e-12)


def test_matches_finite_difference_oracle():
    sol, _ = solve_barrier_bvp(CFG)
    S_f, V_f = finite_difference_bvp(CFG)
    ref = np.interp(sol.S, S_f, V_f)
    assert np.max(np.abs(sol.V - ref)) / np.max(np.abs(ref)) < 1e-4


def test_finite_difference_oracle_against_closed_form():
    S_f, V_f = finite_difference_bvp(CFG)
    ref = barrier_closed_form(S_f, CFG)
    assert np.max(np.abs(V_f - ref)) / np.max(np.abs(ref)) < 1e-7


def test_barrier_solution_bounds_and_monotonicity():
    sol, _ = solve_barrier_bvp(CFG)
    assert np.all(sol.V >= -1e-10)
    assert np.all(sol.V <= CFG.strike - CFG.barrier + 1e-10)
    assert np.all(np.diff(sol.V) >= -1e-12)


def test_contraction_reported():
    sol, _ = solve_barrier_bvp(CFG)
    assert 0 < sol.spectral_radius < 1


@pytest.mark.parametrize("S0", [80.0, 95.0, 105.0, 120.0])
def test_short_maturity_limit(S0):
    assert price_greens_function(S0, 100.0, 0.05, 0.2, 1e-10) == pytest.approx(max(S0 - 100.0, 0.0), abs=1e-8)


def test_at_the_money_closed_form():
    v = price_greens_function(100.0, 100.0, 0.05, 0.2, 1.0)
    ref = black_scholes_call(100.0, 100.0, 0.05, 0.2, 1.0)
    assert abs(v - ref) <= 1e-10 * ref
    assert ref == pytest.approx(10.450583572185565, rel=1e-12)


def test_grid_of_parameters_against_closed_form():
    for S0 in np.linspace(80, 120, 5):
        for sigma in np.linspace(0.1, 0.5, 5):
            v = price_greens_function(S0, 100.0, 0.05, sigma, 1.0)
            ref = black_scholes_call(S0, 100.0, 0.05, sigma, 1.0)
            assert abs(v - ref) <= 1e-10 * ref


def test_price_monotone_in_spot():
    S = np.arange(80.0, 121.0)
    v = price_greens_function(S, 100.0, 0.05, 0.2, 1.0)
    assert np.all(np.diff(v) > 0)


def test_hermite_rule_is_available():
    v = price_greens_function(100.0, 100.0, 0.05, 0.2, 1.0, rule="hermite")
    assert v == pytest.approx(black_scholes_call(100.0, 100.0, 0.05, 0.2, 1.0), rel=1e-2)


def test_galerkin_interpolates_at_full_degree():
    cfg = GalerkinConfig(n_nodes=11)
    coef, err = galerkin_projection(10, cfg)
    assert err < 1e-10
    S = cfg.grid.nodes
    np.testing.assert_allclose(galerkin_eval(coef, S, cfg), time_slice_curves(cfg), atol=1e-8)


def test_galerkin_degree_15_error_band():
    _, err = galerkin_projection(15, GalerkinConfig())
    assert 5e-4 <= err <= 5e-3


def test_galerkin_error_non_increasing():
    errs = [galerkin_projection(d, GalerkinConfig())[1] for d in range(1, 21)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(errs[:-1], errs[1:]))


def test_galerkin_degree_validation():
    with pytest.raises(ConfigurationError):
        galerkin_projection(0, GalerkinConfig())


def test_time_slices_converge_to_payoff():
    cfg = GalerkinConfig(taus=(1.0, 0.5, 0.25, 0.1, 0.01))
    curves = time_slice_curves(cfg)
    payoff = np.maximum(cfg.grid.nodes - cfg.strike, 0.0)
    gaps = np.max(np.abs(curves - payoff), axis=1)
    assert np.all(np.diff(gaps) < 0)
