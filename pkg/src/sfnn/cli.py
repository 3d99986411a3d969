"""Command-line entry point: ``sfnn <subcommand> [options]``.

Each subcommand resolves its configuration (packaged defaults, then
``--config``, then ``SFNN_<SECTION>_<KEY>`` environment variables, then
flags), runs, and writes CSV files, SVG plots and ``manifest.json`` into the
output directory.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
64 unknown subcommand.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import os
import sys
import time
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError, DivergenceError, SFNNError, TrainingError
from .fixed_point import (
    FixedPointConfig,
    error_bound,
    estimate_discretization_error,
    forcing_gap,
    iterate,
    prescribe_depth,
)
from .grid import Grid, KernelSpec, assemble_layer, make_forcing, make_kernel, operator_norm_bound
from .networks import LinearSFNN, NonlinearDSFNN, VolterraFredholmOperator, run_dsfnn, run_linear, run_volterra_fredholm
from .plotting import PlotSpec, render_plot
from .stochastic import RandomSeed, sample_brownian

SUBCOMMANDS = ("linear", "dsfnn", "vf", "bs", "contagion", "merton", "bounds")
EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_USAGE = 0, 2, 3, 64
MANIFEST = "manifest.json"
ENV_PREFIX = "SFNN_"


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


def packaged_config(name: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    parser.read_string(resources.files("sfnn.configs").joinpath(f"{name}.ini").read_text())
    return parser


def resolve_config(name: str, path=None, env=None, overrides=None) -> dict:
    """Merge defaults, an optional file, environment overrides and flag overrides."""
    parser = packaged_config(name)
    if path is not None:
        if not Path(path).is_file():
            raise ConfigurationError(f"config file not found: {path}")
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
    env = os.environ if env is None else env
    for section in parser.sections():
        for key in parser[section]:
            var = f"{ENV_PREFIX}{section}_{key}".upper()
            if var in env:
                parser[section][key] = env[var]
    for (section, key), value in (overrides or {}).items():
        if value is not None:
            if not parser.has_section(section):
                parser.add_section(section)
            parser[section][key] = str(value)
    return {s: {k: " ".join(v.split()) for k, v in parser[s].items()} for s in parser.sections()}


def config_digest(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.blake2b(canonical.encode(), digest_size=8).hexdigest()


class Section:
    """Typed accessors over one config section."""

    def __init__(self, config: dict, name: str):
        if name not in config:
            raise ConfigurationError(f"missing [{name}] section")
        self.name, self.values = name, config[name]

    def _raw(self, key):
        try:
            return self.values[key.lower()]
        except KeyError:
            raise ConfigurationError(f"[{self.name}] missing key {key!r}") from None

    def _convert(self, key, fn, kind):
        raw = self._raw(key)
        try:
            return fn(raw)
        except ValueError:
            raise ConfigurationError(f"[{self.name}] {key} = {raw!r} is not {kind}") from None

    def float(self, key) -> float:
        return self._convert(key, float, "a number")

    def int(self, key) -> int:
        return self._convert(key, int, "an integer")

    def str(self, key, default=None) -> str:
        if default is not None and key.lower() not in self.values:
            return default
        return self._raw(key)

    def bool(self, key, default=False) -> bool:
        if key not in self.values:
            return default
        raw = self.values[key].lower()
        if raw in ("1", "true", "yes", "on"):
            return True
        if raw in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"[{self.name}] {key} = {raw!r} is not a boolean")

    def floats(self, key) -> list[float]:
        return self._convert(key, lambda s: [float(v) for v in s.split(",") if v.strip()], "a list of numbers")

    def ints(self, key) -> list[int]:
        return self._convert(key, lambda s: [int(v) for v in s.split(",") if v.strip()], "a list of integers")

    def params(self, key) -> dict:
        raw = self.values.get(key, "").strip()
        out = {}
        for item in filter(None, (p.strip() for p in raw.split(","))):
            if "=" not in item:
                raise ConfigurationError(f"[{self.name}] {key}: expected name=value, got {item!r}")
            k, v = item.split("=", 1)
            try:
                out[k.strip()] = float(v)
            except ValueError:
                raise ConfigurationError(f"[{self.name}] {key}: {v!r} is not a number") from None
        return out

    def kernel(self, key):
        name = self.values.get(key, "none").strip()
        if name in ("", "none"):
            return None
        try:
            return make_kernel(name, **self.params(f"{key}_params"))
        except TypeError as exc:
            raise ConfigurationError(f"[{self.name}] {key}: {exc}") from None

    def forcing(self, key="forcing"):
        try:
            return make_forcing(self.str(key), **self.params(f"{key}_params"))
        except TypeError as exc:
            raise ConfigurationError(f"[{self.name}] {key}: {exc}") from None

    def grid(self) -> Grid:
        return Grid(self.float("lower"), self.float("upper"), self.int("n_nodes"))


def _fp_config(run: Section, weight: float = 1.0) -> FixedPointConfig:
    return FixedPointConfig(tol=run.float("tol"), max_iter=run.int("max_iter"), weight=weight)


# --------------------------------------------------------------------------
# output bookkeeping
# --------------------------------------------------------------------------


class RunContext:
    def __init__(self, out_dir: Path):
        self.out = out_dir
        self.outputs: list[str] = []
        self.metrics: dict = {}
        self.dropped = 0

    def csv(self, name: str, header, rows) -> Path:
        path = self.out / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
        self.outputs.append(name)
        return path

    def columns(self, name: str, columns: dict) -> Path:
        header = list(columns)
        data = [np.asarray(v) for v in columns.values()]
        return self.csv(name, header, zip(*data))

    def register(self, path: Path) -> None:
        self.outputs.append(path.name)

    def plot(self, csv_path: Path, **kw) -> None:
        res = render_plot(csv_path, PlotSpec(**kw))
        self.dropped += res.dropped
        self.register(res.path)


def _cell(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def prepare_output_dir(out_dir: Path) -> None:
    """Create the directory; clear files from a previous run listed in its manifest."""
    out_dir.mkdir(parents=True, exist_ok=True)
    existing = {p.name for p in out_dir.iterdir()}
    if not existing:
        return
    listed = set()
    manifest = out_dir / MANIFEST
    if manifest.is_file():
        try:
            listed = set(json.loads(manifest.read_text()).get("outputs", []))
        except (json.JSONDecodeError, AttributeError):
            raise ConfigurationError(f"{manifest}: unreadable manifest") from None
        listed.add(MANIFEST)
    foreign = sorted(existing - listed)
    if foreign:
        raise ConfigurationError(f"output directory {out_dir} holds files from elsewhere: {', '.join(foreign[:5])}")
    for name in existing:
        (out_dir / name).unlink()


def read_manifest(path) -> dict:
    """Load a manifest and check that its config digest still matches."""
    data = json.loads(Path(path).read_text())
    if config_digest(data["config"]) != data["config_digest"]:
        raise ConfigurationError(f"{path}: config digest mismatch")
    return data


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def _linear_spec(sec: Section) -> KernelSpec:
    return KernelSpec(
        kernel=sec.kernel("kernel") or make_kernel("zero"),
        forcing=sec.forcing(),
        stochastic_kernel=sec.kernel("stochastic_kernel"),
        causal=sec.bool("causal"),
    )


def cmd_linear(config: dict, ctx: RunContext, args) -> None:
    run, sec = Section(config, "run"), Section(config, "linear")
    grid = sec.grid()
    spec = _linear_spec(sec)
    path = sample_brownian(grid, RandomSeed(run.int("seed"))) if spec.stochastic_kernel else None
    layer = assemble_layer(grid, spec, path, sec.float("kappa"))
    g = np.asarray(spec.forcing(grid.nodes), dtype=float) * np.ones(grid.n_nodes)
    y, trace = iterate(layer, g, _fp_config(run))
    direct = np.linalg.solve(np.eye(grid.n_nodes) - layer.W, layer.b)
    net = LinearSFNN(layer, max(trace.iterations_used, 1), grid, spec, path)
    y_net = run_linear(net, g)
    trace_path = ctx.csv("trace.csv", ["iteration", "residual", "ratio_estimate"],
                         ((i + 1, r, q) for i, (r, q) in enumerate(zip(trace.residuals, trace.ratio_estimates))))
    sol_path = ctx.columns("solution.csv", {"t": grid.nodes, "y_network": y_net, "y_direct": direct, "forcing": g})
    ctx.plot(trace_path, x="iteration", y=("residual",), semilog_y=True, title="fixed-point residual")
    ctx.plot(sol_path, x="t", y=("y_network", "y_direct"), title="solution")
    ctx.metrics.update(
        iterations=trace.iterations_used,
        converged=trace.converged,
        final_residual=trace.final_residual,
        direct_solve_rel_error=float(np.linalg.norm(y_net - direct) / np.linalg.norm(direct)),
        spectral_radius=float(np.max(np.abs(np.linalg.eigvals(layer.W)))),
        operator_norm_bound=operator_norm_bound(spec, grid, path),
    )
    if not trace.converged:
        raise DivergenceError(f"no convergence within {trace.iterations_used} iterations", trace)


def cmd_dsfnn(config: dict, ctx: RunContext, args) -> None:
    run, sec = Section(config, "run"), Section(config, "dsfnn")
    grid = sec.grid()
    spec = _linear_spec(sec)
    path = sample_brownian(grid, RandomSeed(run.int("seed"))) if spec.stochastic_kernel else None
    net = NonlinearDSFNN.from_spec(grid, spec, path, sec.str("activation", "identity"))
    x, trace = run_dsfnn(net, _fp_config(run))
    trace_path = ctx.csv("trace.csv", ["iteration", "residual", "ratio_estimate"],
                         ((i + 1, r, q) for i, (r, q) in enumerate(zip(trace.residuals, trace.ratio_estimates))))
    sol_path = ctx.columns("solution.csv", {"t": grid.nodes, "x": x, "forcing": net.f})
    ctx.plot(trace_path, x="iteration", y=("residual",), semilog_y=True, title="fixed-point residual")
    ctx.plot(sol_path, x="t", title="solution")
    ctx.metrics.update(iterations=trace.iterations_used, converged=trace.converged,
                       final_residual=trace.final_residual, certificate=net.certificate())
    if not trace.converged:
        raise DivergenceError(f"no convergence within {trace.iterations_used} iterations", trace)


def cmd_vf(config: dict, ctx: RunContext, args) -> None:
    run, sec = Section(config, "run"), Section(config, "vf")
    grid = sec.grid()
    stochastic = sec.kernel("stochastic_kernel")
    path = sample_brownian(grid, RandomSeed(run.int("seed"))) if stochastic else None
    op = VolterraFredholmOperator.from_kernels(
        grid, sec.kernel("memory_kernel"), sec.kernel("fredholm_kernel"), sec.forcing(),
        stochastic, path, sec.str("activation", "identity"),
    )
    y, trace = run_volterra_fredholm(op, _fp_config(run))
    trace_path = ctx.csv("trace.csv", ["iteration", "residual", "ratio_estimate"],
                         ((i + 1, r, q) for i, (r, q) in enumerate(zip(trace.residuals, trace.ratio_estimates))))
    sol_path = ctx.columns("solution.csv", {"t": grid.nodes, "y": y, "forcing": op.f})
    ctx.plot(trace_path, x="iteration", y=("residual",), semilog_y=True, title="fixed-point residual")
    ctx.plot(sol_path, x="t", title="solution")
    ctx.metrics.update(iterations=trace.iterations_used, converged=trace.converged,
                       final_residual=trace.final_residual, certificate=op.certificate())
    if not trace.converged:
        raise DivergenceError(f"no convergence within {trace.iterations_used} iterations", trace)


def cmd_bs(config: dict, ctx: RunContext, args) -> None:
    from .apps import black_scholes as bs

    run = Section(config, "run")
    action = args.action
    if action == "price":
        sec = Section(config, "price")
        S = np.linspace(sec.float("s_lower"), sec.float("s_upper"), sec.int("n_points"))
        K, r, sig, T = sec.float("strike"), sec.float("r"), sec.float("sigma"), sec.float("T")
        exact = bs.black_scholes_call(S, K, r, sig, T)
        greens = bs.price_greens_function(S, K, r, sig, T, n_nodes=sec.int("quadrature_nodes"))
        p = ctx.columns("price.csv", {"S": S, "V_exact": exact, "V_greens": greens})
        ctx.plot(p, x="S", title="European call")
        ctx.metrics["max_rel_error"] = float(np.max(np.abs(greens - exact) / np.abs(exact)))
    elif action == "barrier":
        sec = Section(config, "barrier")
        cfg = bs.BsConfig(sec.float("r"), sec.float("sigma"), sec.float("T"), sec.float("strike"),
                          sec.float("barrier"), sec.int("n_nodes"))
        sol, trace = bs.solve_barrier_bvp(cfg, _fp_config(run))
        S_fd, V_fd = bs.finite_difference_bvp(cfg)
        V_fd_grid = np.interp(sol.S, S_fd, V_fd)
        p = ctx.columns("barrier.csv", {"S": sol.S, "V_exact": bs.barrier_closed_form(sol.S, cfg),
                                        "V_sfnn": sol.V, "V_fd": V_fd_grid, "nu": sol.nu})
        t = ctx.csv("trace.csv", ["iteration", "residual", "ratio_estimate"],
                    ((i + 1, r_, q) for i, (r_, q) in enumerate(zip(trace.residuals, trace.ratio_estimates))))
        ctx.plot(p, x="S", y=("V_exact", "V_sfnn", "V_fd"), title="barrier option")
        ctx.plot(t, x="iteration", y=("residual",), semilog_y=True, title="fixed-point residual")
        ctx.metrics.update(spectral_radius=sol.spectral_radius, iterations=trace.iterations_used,
                           rel_error_fd=float(np.max(np.abs(sol.V - V_fd_grid)) / np.max(np.abs(V_fd_grid))))
        if not trace.converged:
            raise DivergenceError("barrier iteration did not converge", trace)
    else:
        sec = Section(config, "galerkin")
        degree = args.degree if args.degree is not None else sec.int("degree")
        cfg = bs.GalerkinConfig(sec.float("lower"), sec.float("upper"), sec.int("n_nodes"), sec.float("strike"),
                                sec.float("r"), sec.float("sigma"), tuple(sec.floats("taus")))
        coef, err = bs.galerkin_projection(degree, cfg)
        S = cfg.grid.nodes
        greens = bs.time_slice_curves(cfg)
        fitted = bs.galerkin_eval(coef, S, cfg)
        cols = {"S": S}
        for k, tau in enumerate(cfg.taus):
            cols[f"V_exact_tau{tau:g}"] = bs.black_scholes_call(S, cfg.strike, cfg.r, cfg.sigma, tau)
            cols[f"V_greens_tau{tau:g}"] = greens[k]
            cols[f"V_galerkin_tau{tau:g}"] = fitted[k]
        p = ctx.columns("galerkin.csv", cols)
        ctx.plot(p, x="S", y=tuple(c for c in cols if c.startswith("V_g")), title=f"degree-{degree} projection")
        ctx.metrics.update(degree=degree, global_rel_error=err)


def cmd_contagion(config: dict, ctx: RunContext, args) -> None:
    from .apps.contagion import initial_slopes, network_from_section, solve_contagion

    run = Section(config, "run")
    net = network_from_section(Section(config, "contagion").values)
    sol = solve_contagion(net, _fp_config(run))
    cols = {"t": net.grid.nodes}
    cols.update({f"y_{i + 1}": sol.Y[i] for i in range(net.n_banks)})
    p = ctx.columns("trajectories.csv", cols)
    r = ctx.csv("residuals.csv", ["iteration", "residual", "ratio_estimate"],
                ((i + 1, a, b) for i, (a, b) in enumerate(zip(sol.trace.residuals, sol.trace.ratio_estimates))))
    ctx.plot(p, x="t", title="bank distress")
    ctx.plot(r, x="iteration", y=("residual",), semilog_y=True, title="fixed-point residual")
    ctx.metrics.update(
        spectral_radius=sol.certificate.value,
        certificate_approximate=sol.certificate.approximate,
        iterations=sol.trace.iterations_used,
        residual_log_r2=sol.trace.log_linear_r2(10),
        initial_slopes=[float(v) for v in initial_slopes(sol, net.grid)],
    )
    if not sol.trace.converged:
        raise DivergenceError("contagion iteration did not converge", sol.trace)


def merton_setup(config: dict):
    """(MertonConfig, TrainingConfig, run_sfvnn keyword arguments) from a resolved config."""
    from .apps.merton import MertonConfig, TrainingConfig
    from .stochastic import LogNormalParams

    run, sec, tr = Section(config, "run"), Section(config, "merton"), Section(config, "training")
    cfg = MertonConfig(sec.float("mu"), sec.float("sigma"), sec.float("intensity"),
                       LogNormalParams(sec.float("mean_log"), sec.float("sd_log")),
                       sec.float("S0"), sec.float("T"), sec.int("n_nodes"))
    tcfg = TrainingConfig(tr.int("sweeps"), tr.int("steps_per_sweep"), tr.int("batch_size"),
                          tr.float("learning_rate"), tuple(tr.ints("reinit_sweeps")), tr.int("init_seed"))
    kwargs = dict(tol=run.float("tol"), max_outer=run.int("max_outer"), n_paths=run.int("paths"), seed=run.int("seed"))
    return cfg, tcfg, kwargs


def cmd_merton(config: dict, ctx: RunContext, args) -> None:
    from .apps.merton import run_sfvnn
    from .neural_kernel import save_checkpoint, write_loss_csv

    cfg, tcfg, kwargs = merton_setup(config)
    res = run_sfvnn(cfg, tcfg=tcfg, **kwargs)
    st = res.state
    k = np.arange(1, len(st.fp_residuals) + 1)
    fp = ctx.columns("fp_residual.csv", {"outer_iteration": k, "fp_residual": st.fp_residuals})
    nn = ctx.columns("nn_error.csv", {"outer_iteration": k, "fp_residual": st.fp_residuals, "nn_error": st.nn_errors})
    loss_path = ctx.out / "training_loss.csv"
    write_loss_csv(res.train_state, loss_path)
    ctx.register(loss_path)
    ckpt = ctx.out / "kernel.bin"
    save_checkpoint(res.kernel, ckpt)
    ctx.register(ckpt)
    ctx.plot(fp, x="outer_iteration", semilog_y=True, title="outer fixed-point residual")
    ctx.plot(loss_path, x="global_step", y=("loss", "moving_average"), semilog_y=True, title="training loss")
    ctx.plot(nn, x="outer_iteration", y=("fp_residual", "nn_error"), semilog_y=True, title="network error vs residual")
    ma = res.train_state.moving_average
    ctx.metrics.update(outer_iterations=st.outer_k, converged=st.converged,
                       final_fp_residual=st.fp_residuals[-1],
                       loss_ma_ratio=float(ma[-1] / ma[0]) if ma else None)
    if not st.converged:
        ctx.metrics["partial"] = True
        warnings.warn(f"outer iteration stopped at {st.outer_k} without reaching tol", RuntimeWarning)


def cmd_bounds(config: dict, ctx: RunContext, args) -> None:
    run, sec = Section(config, "run"), Section(config, "bounds")
    coarse = sec.grid()
    fine = coarse.refine(sec.int("refine"))
    spec = _linear_spec(sec)
    seed = run.int("seed")
    paths = [sample_brownian(fine, RandomSeed(seed, p)) for p in range(run.int("paths"))] if spec.stochastic_kernel else []
    c_dt = estimate_discretization_error(spec, fine, coarse, paths)
    path = paths[0].coarsen(coarse) if paths else None
    layer = assemble_layer(coarse, spec, path)
    q = float(np.linalg.norm(layer.W, 2))
    g = np.asarray(spec.forcing(coarse.nodes), dtype=float) * np.ones(coarse.n_nodes)
    gap = forcing_gap(layer, g)
    y_star = np.linalg.solve(np.eye(coarse.n_nodes) - layer.W, layer.b)
    net = LinearSFNN(layer, 1, coarse, spec, path)
    max_depth = run.int("max_depth")
    _, states = run_linear(net, g, depth=max_depth, return_states=True)
    depths = np.arange(1, max_depth + 1)
    measured = [float(np.linalg.norm(states[m] - y_star)) for m in depths]
    bounds = [error_bound(q, int(m), c_dt, gap) for m in depths]
    p = ctx.columns("bounds.csv", {"depth": depths, "bound": bounds, "measured_error": measured})
    ctx.plot(p, x="depth", semilog_y=True, title="a-priori bound vs measured error")
    ctx.metrics.update(q=q, c_dt=c_dt, forcing_gap=gap,
                       M_star=prescribe_depth(q, run.float("eps"), c_dt, gap))


COMMANDS = {
    "linear": cmd_linear,
    "dsfnn": cmd_dsfnn,
    "vf": cmd_vf,
    "bs": cmd_bs,
    "contagion": cmd_contagion,
    "merton": cmd_merton,
    "bounds": cmd_bounds,
}


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sfnn", description="Fixed-point network solvers for stochastic integral equations.")
    parser.add_argument("--version", action="version", version=f"sfnn {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file overriding the packaged defaults")
        p.add_argument("--seed", type=int, help="64-bit seed")
        p.add_argument("--out", help="output directory (default: out/<subcommand>)")
        p.add_argument("--tol", type=float, help="fixed-point tolerance")
        p.add_argument("--demo", action="store_true", help="run the packaged demo configuration only")
        if name in ("merton", "bounds"):
            p.add_argument("--paths", type=int, help="Monte Carlo ensemble size")
        if name == "merton":
            p.add_argument("--outer", type=int, help="maximum outer iterations")
        if name == "bs":
            p.add_argument("action", nargs="?", default="price", choices=("price", "barrier", "galerkin"))
            p.add_argument("--degree", type=int, help="Galerkin polynomial degree")
    return parser


def run_subcommand(argv=None, env=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv or (not argv[0].startswith("-") and argv[0] not in SUBCOMMANDS):
        if argv:
            print(f"sfnn: unknown subcommand {argv[0]!r}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except _ArgumentError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    started = time.perf_counter()
    try:
        overrides = {("run", "seed"): args.seed, ("run", "tol"): args.tol,
                     ("run", "paths"): getattr(args, "paths", None), ("run", "max_outer"): getattr(args, "outer", None)}
        if args.demo:
            config = resolve_config(args.command, None, env={}, overrides=overrides)
        else:
            config = resolve_config(args.command, args.config, env, overrides)
        seed = Section(config, "run").int("seed")
        if not 0 <= seed < 2**64:
            raise ConfigurationError(f"seed {seed} is not an unsigned 64-bit integer")
        out_dir = Path(args.out or Path("out") / args.command)
        prepare_output_dir(out_dir)
        ctx = RunContext(out_dir)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            COMMANDS[args.command](config, ctx, args)
        messages = [str(w.message) for w in caught]
        if ctx.dropped:
            messages.append(f"{ctx.dropped} non-finite or non-positive plot points dropped")
        manifest = {
            "subcommand": args.command if args.command != "bs" else f"bs {args.action}",
            "config_digest": config_digest(config),
            "config": config,
            "seed": seed,
            "version": __version__,
            "outputs": sorted(ctx.outputs),
            "duration_seconds": round(time.perf_counter() - started, 3),
            "dropped_points": ctx.dropped,
            "warnings": messages,
            "metrics": ctx.metrics,
        }
        (out_dir / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
        for msg in messages:
            print(f"warning: {msg}", file=sys.stderr)
        print(f"{manifest['subcommand']}: wrote {len(ctx.outputs)} files to {out_dir}")
        return EXIT_OK
    except (DivergenceError, TrainingError) as exc:
        print(f"sfnn {args.command}: divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (SFNNError, ValueError) as exc:
        print(f"sfnn {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    raise TypeError(f"not serializable: {type(v)}")


def main() -> None:
    sys.exit(run_subcommand())


if __name__ == "__main__":
    main()
