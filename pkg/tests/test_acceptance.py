"""One check per acceptance criterion; each prints a PASS/FAIL line (collected in the terminal summary)."""

import time

import numpy as np
import pytest

from sfnn.apps.black_scholes import (
    BsConfig,
    GalerkinConfig,
    black_scholes_call,
    finite_difference_bvp,
    galerkin_projection,
    price_greens_function,
    solve_barrier_bvp,
)
from sfnn.apps.contagion import assemble_block_system, initial_slopes, load_scenario, solve_contagion
from sfnn.apps.merton import MertonConfig, MertonEnsemble, strong_error_study
from sfnn.cli import SUBCOMMANDS, run_subcommand
from sfnn.fixed_point import FixedPointConfig, error_bound, estimate_discretization_error, forcing_gap, iterate, prescribe_depth
from sfnn.grid import Grid, KernelSpec, assemble_layer, make_forcing, make_kernel
from sfnn.networks import LinearSFNN, run_linear
from sfnn.neural_kernel import NeuralKernel, ResidualObjective, parameter_count
from sfnn.stochastic import RandomSeed, sample_brownian

import sfnn.configs
from pathlib import Path

CONFIG_DIR = Path(sfnn.configs.__file__).parent


def random_spec(rng, scale_hi=1.0):
    kernel = make_kernel("gaussian", scale=rng.uniform(-scale_hi, scale_hi), width=rng.uniform(0.1, 0.5))
    noise = make_kernel("constant", value=rng.uniform(0.0, 0.3))
    forcing = make_forcing("sin", amplitude=rng.uniform(0.5, 2), freq=rng.uniform(0, 5), offset=rng.uniform(-1, 1))
    return KernelSpec(kernel, forcing, noise)


def test_criterion_1_linear_oracle(report):
    rng = np.random.default_rng(2024)
    worst, elapsed, count = 0.0, 0.0, 0
    while count < 20:
        n = int(rng.integers(16, 257))
        grid = Grid(0.0, 1.0, n)
        layer = assemble_layer(grid, random_spec(rng), sample_brownian(grid, RandomSeed(count, 1)))
        if np.max(np.abs(np.linalg.eigvals(layer.W))) > 0.9:
            continue
        count += 1
        start = time.perf_counter()
        y, trace = iterate(layer, layer.b, FixedPointConfig(tol=1e-14, max_iter=5000))
        elapsed += time.perf_counter() - start
        direct = np.linalg.solve(np.eye(n) - layer.W, layer.b)
        worst = max(worst, np.linalg.norm(y - direct) / np.linalg.norm(direct))
    ok = worst <= 1e-10 and elapsed < 5.0
    assert report("criterion 1 linear oracle", ok, f"max rel err {worst:.2e} (<= 1e-10), {elapsed:.2f}s (< 5s)")


def test_criterion_2_error_bound(report):
    assert prescribe_depth(0.5, 1e-6, 1.0, 0.0) == 21
    rng = np.random.default_rng(7)
    qs = []
    violations, checked, depth_ok = 0, 0, True
    eps = 1e-6
    while checked < 5:
        coarse = Grid(0.0, 1.0, 65)
        fine = coarse.refine(4)
        spec = random_spec(rng, scale_hi=0.6)
        spec = KernelSpec(spec.kernel, spec.forcing, make_kernel("constant", value=rng.uniform(0.0, 0.08)))
        paths = [sample_brownian(fine, RandomSeed(checked, p)) for p in range(16)]
        layer = assemble_layer(coarse, spec, paths[0].coarsen(coarse))
        q = float(np.linalg.norm(layer.W, 2))
        # keep q^30 well above double-precision resolution so every depth is a real comparison
        if not 0.35 <= q < 0.9:
            continue
        checked += 1
        qs.append(q)
        c_dt = estimate_discretization_error(spec, fine, coarse, paths)
        g = np.asarray(spec.forcing(coarse.nodes), float) * np.ones(coarse.n_nodes)
        gap = forcing_gap(layer, g)
        y_star = np.linalg.solve(np.eye(coarse.n_nodes) - layer.W, layer.b)
        net = LinearSFNN(layer, 1, coarse, spec)
        _, states = run_linear(net, g, depth=max(30, prescribe_depth(q, eps, c_dt, gap)), return_states=True)
        for m in range(1, 31):
            violations += np.linalg.norm(states[m] - y_star) > error_bound(q, m, c_dt, gap)
        m_star = prescribe_depth(q, eps, c_dt, gap)
        depth_ok &= bool(np.linalg.norm(states[m_star] - y_star) <= eps)
    ok = violations == 0 and depth_ok
    assert report("criterion 2 error-bound dominance", ok,
                  f"{violations} violations over 5x30 depths (q {min(qs):.2f}..{max(qs):.2f}); M* reaches eps: {depth_ok}; M*(0.5,1e-6,1)=21")


def test_criterion_3_greens_pricer(report):
    start = time.perf_counter()
    worst = 0.0
    for S0 in np.linspace(80, 120, 5):
        for sigma in np.linspace(0.1, 0.5, 5):
            v = price_greens_function(S0, 100.0, 0.05, sigma, 1.0, n_nodes=96)
            ref = black_scholes_call(S0, 100.0, 0.05, sigma, 1.0)
            worst = max(worst, abs(v - ref) / ref)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 1.0
    assert report("criterion 3 Green's-function pricer", ok, f"max rel err {worst:.2e} (<= 1e-10), {elapsed:.3f}s (< 1s)")


def test_criterion_4_galerkin(report):
    _, err = galerkin_projection(15, GalerkinConfig())
    ok = 5e-4 <= err <= 5e-3
    assert report("criterion 4 Galerkin degree 15", ok, f"global rel err {err:.3e} in [5e-4, 5e-3]")


def test_criterion_5_barrier(report):
    cfg = BsConfig(n_nodes=201)
    sol, trace = solve_barrier_bvp(cfg)
    S_f, V_f = finite_difference_bvp(cfg)
    ref = np.interp(sol.S, S_f, V_f)
    rel = np.max(np.abs(sol.V - ref)) / np.max(np.abs(ref))
    bc = max(abs(sol.V[0]), abs(sol.V[-1] - (cfg.strike - cfg.barrier)))
    ok = trace.converged and rel <= 1e-4 and bc <= 1e-8
    assert report("criterion 5 barrier BVP", ok, f"sup rel err vs FD {rel:.2e} (<= 1e-4), BC gap {bc:.1e} (<= 1e-8)")


def test_criterion_6_contagion(report):
    net = load_scenario(CONFIG_DIR / "contagion.ini")
    sol = solve_contagion(net)
    W, b = assemble_block_system(net)
    direct = np.linalg.solve(np.eye(b.size) - W, b)
    rel = np.linalg.norm(sol.Y.ravel() - direct) / np.linalg.norm(direct)
    start_ok = np.allclose(sol.Y[:, 0], 0.10, atol=0.05)
    end = float(sol.Y[:, -1].max())
    slopes = initial_slopes(sol, net.grid)
    steepest = int(np.argmin(slopes)) == 4
    r2 = sol.trace.log_linear_r2()
    ok = start_ok and end < 1e-3 and steepest and r2 > 0.99 and rel <= 1e-10
    assert report("criterion 6 contagion", ok,
                  f"y(10) max {end:.1e} (< 1e-3), bank 5 steepest {steepest}, R^2 {r2:.4f} (> 0.99), dense rel {rel:.1e}")


def test_criterion_7_merton(report, desk_merton):
    cfg, tcfg, res = desk_merton
    st = res.state
    fp = np.array(st.fp_residuals)
    crossed = int(np.argmax(fp < 1e-12)) + 1 if np.any(fp < 1e-12) else None
    ma = np.array(res.train_state.moving_average)
    ma_ratio = ma[-1] / ma[0]
    nn = np.array(st.nn_errors[1:12])
    flat = nn.max() / nn.min()
    ok = crossed is not None and crossed <= 20 and ma_ratio <= 1e-3 and flat < 10 and res.seconds < 600
    assert report("criterion 7 Merton SFVNN", ok,
                  f"residual < 1e-12 at k={crossed} (<= 20), MA end/start {ma_ratio:.1e} (<= 1e-3), "
                  f"nn_error flatness {flat:.2f} (< 10), {res.seconds:.0f}s (< 600s)")


def test_criterion_8_gradient_check(report):
    cfg = MertonConfig(n_nodes=33)
    worst = 0.0
    for draw in range(3):
        ens = MertonEnsemble.simulate(cfg, 100 + draw, 16)
        obj = ResidualObjective(ens.exact(), ens.drivers(), cfg.grid, cfg.S0, cfg.S0)
        theta = NeuralKernel.initialize(RandomSeed(200 + draw)).theta
        rng = np.random.default_rng(draw)
        batch = np.sort(rng.choice(16, 8, replace=False))
        _, grad = obj(theta, batch)
        for k in rng.choice(parameter_count(), 50, replace=False):
            tp, tm = theta.copy(), theta.copy()
            tp[k] += 1e-5
            tm[k] -= 1e-5
            fd = (obj(tp, batch)[0] - obj(tm, batch)[0]) / 2e-5
            worst = max(worst, abs(fd - grad[k]) / max(abs(fd), abs(grad[k]), 1e-10))
    assert report("criterion 8 gradient check", worst < 1e-4, f"max rel err {worst:.2e} (< 1e-4) over 3x50 coordinates")


def test_criterion_9_strong_order(report):
    dts, gaps, slope = strong_error_study(MertonConfig(), 2000, 0)
    ok = 0.4 <= slope <= 0.6
    assert report("criterion 9 stochastic consistency", ok,
                  f"log-log slope {slope:.3f} in [0.4, 0.6]; RMS gaps {', '.join(f'{g:.3g}' for g in gaps)}")


SMALL_MERTON = "[run]\npaths = 16\n[training]\nsweeps = 3\nsteps_per_sweep = 100\n"


def test_criterion_10_determinism(report, tmp_path):
    merton_cfg = tmp_path / "merton.ini"
    merton_cfg.write_text(SMALL_MERTON)
    mismatched = []
    for name in SUBCOMMANDS:
        extra = ["--config", str(merton_cfg)] if name == "merton" else []
        outs = []
        for rep in "ab":
            out = tmp_path / f"{name}_{rep}"
            assert run_subcommand([name, *extra, "--seed", "11", "--out", str(out)], env={}) == 0
            outs.append(out)
        files = sorted(p.name for p in outs[0].glob("*.csv"))
        if not files:
            mismatched.append(f"{name}: no CSV")
        for f in files:
            if (outs[0] / f).read_bytes() != (outs[1] / f).read_bytes():
                mismatched.append(f"{name}/{f}")
    ok = not mismatched
    assert report("criterion 10 determinism", ok, "all subcommand CSVs byte-identical" if ok else ", ".join(mismatched))
