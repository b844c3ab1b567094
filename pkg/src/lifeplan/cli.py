"""Command-line front end: solve, sweep premiums, price, validate.

Configuration comes from a TOML file (see docs/config.md for the schema);
``--seed``, ``--paths``, ``--dt`` and ``--theta`` override the corresponding
config values.  All numeric CSV output is written with 17 significant
digits so files round-trip to the exact binary values.

Exit codes: 0 success, 1 configuration error, 2 solver failure,
3 validation failure.  Set LIFEPLAN_VERBOSE=1 for progress chatter on
standard error; no other behavior is environment-dependent.
"""

from __future__ import annotations

import csv
import math
import os
import sys
from dataclasses import dataclass, field, replace

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import closedform, hjb, montecarlo
from .params import (
    InvalidParams,
    ModelParams,
    PiecewiseConstant,
    TimeGrid,
    derive,
    validate,
)

CONFIG_ERROR, SOLVER_ERROR, VALIDATION_ERROR = 1, 2, 3

_REQUIRED_MODEL_KEYS = (
    "r", "mu", "sigma", "rho", "alpha", "delta", "horizon", "w0",
)


def _verbose(msg: str) -> None:
    if os.environ.get("LIFEPLAN_VERBOSE"):
        click.echo(msg, err=True)


@dataclass
class RunConfig:
    """Validated run configuration shared by every subcommand."""

    params: ModelParams
    grid_steps: int = 10_000
    theta_max: float = 2.0
    mc_paths: int = 100_000
    mc_dt: float = 0.01
    mc_utility_dt: float = 0.005
    seed: int = 42
    workers: int = 1
    check_thetas: list = field(default_factory=lambda: [0.0, 1.0])
    sweep_thetas: list = field(default_factory=lambda: [round(0.1 * i, 10) for i in range(21)])
    figure_a_thetas: list = field(default_factory=lambda: [0.0, 1.0])
    x_values: list = field(default_factory=lambda: [1.0, 5.0, 10.0])
    x_min: float = 0.0
    x_max: float = 10.0
    x_points: int = 101
    out_dir: str = "out"


def _piecewise_from_config(section, raw, key: str) -> PiecewiseConstant:
    if isinstance(raw, dict):
        try:
            return PiecewiseConstant(tuple(raw["breaks"]), tuple(raw["values"]))
        except KeyError as exc:
            raise InvalidParams(
                f"missing required key {exc.args[0]!r} in [model.{key}]"
            ) from None
    return PiecewiseConstant.constant(float(raw))


def load_run_config(path: str) -> RunConfig:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    if "model" not in doc:
        raise InvalidParams("missing required section [model]")
    model = doc["model"]
    for key in _REQUIRED_MODEL_KEYS:
        if key not in model:
            raise InvalidParams(f"missing required key {key!r} in [model]")
    params = validate(
        ModelParams(
            r=float(model["r"]),
            mu=float(model["mu"]),
            sigma=float(model["sigma"]),
            rho=float(model["rho"]),
            alpha=float(model["alpha"]),
            delta=float(model["delta"]),
            T=float(model["horizon"]),
            W0=float(model["w0"]),
            lambda_fn=_piecewise_from_config(model, model.get("mortality", 0.0), "mortality"),
            y_fn=_piecewise_from_config(model, model.get("income", 0.0), "income"),
        )
    )
    cfg = RunConfig(params=params)
    solver = doc.get("solver", {})
    cfg.grid_steps = int(solver.get("grid_steps", cfg.grid_steps))
    cfg.theta_max = float(solver.get("theta_max", cfg.theta_max))
    mc = doc.get("mc", {})
    cfg.mc_paths = int(mc.get("paths", cfg.mc_paths))
    cfg.mc_dt = float(mc.get("dt", cfg.mc_dt))
    cfg.mc_utility_dt = float(mc.get("utility_dt", cfg.mc_utility_dt))
    cfg.seed = int(mc.get("seed", cfg.seed))
    cfg.workers = int(mc.get("workers", cfg.workers))
    cfg.check_thetas = [float(t) for t in mc.get("check_thetas", cfg.check_thetas)]
    sweep = doc.get("sweep", {})
    if "thetas" in sweep:
        cfg.sweep_thetas = [float(t) for t in sweep["thetas"]]
    cfg.figure_a_thetas = [
        float(t) for t in sweep.get("figure_a_thetas", cfg.figure_a_thetas)
    ]
    cfg.x_values = [float(x) for x in sweep.get("x_values", cfg.x_values)]
    cfg.x_min = float(sweep.get("x_min", cfg.x_min))
    cfg.x_max = float(sweep.get("x_max", cfg.x_max))
    cfg.x_points = int(sweep.get("x_points", cfg.x_points))
    cfg.out_dir = str(doc.get("output", {}).get("directory", cfg.out_dir))
    if cfg.grid_steps < 2 or cfg.grid_steps % 2:
        raise InvalidParams("solver.grid_steps must be a positive even integer")
    if cfg.mc_dt <= 0 or cfg.mc_utility_dt <= 0:
        raise InvalidParams("mc.dt and mc.utility_dt must be positive")
    return cfg


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([c if isinstance(c, str) else _fmt(c) for c in row])


def _apply_overrides(cfg: RunConfig, seed, paths, dt, theta) -> RunConfig:
    if seed is not None:
        cfg.seed = seed
    if paths is not None:
        cfg.mc_paths = paths
    if dt is not None:
        cfg.mc_dt = dt
        cfg.mc_utility_dt = dt
    if theta is not None:
        thetas = [float(t) for t in theta.split(",") if t.strip() != ""]
        if not thetas:
            raise InvalidParams("--theta needs a comma-separated list of numbers")
        cfg.sweep_thetas = thetas
        cfg.check_thetas = thetas
        if len(thetas) >= 2:
            cfg.figure_a_thetas = thetas[:2]
    return cfg


def _mc_grid(cfg: RunConfig, dt: float) -> TimeGrid:
    return TimeGrid(0.0, cfg.params.T, max(1, round(cfg.params.T / dt)))


_common_options = [
    click.option("--config", "config_path", required=True, type=click.Path(exists=False), help="TOML run configuration."),
    click.option("--out", "out_dir", default=None, type=click.Path(), help="Output directory (default from config, else ./out)."),
    click.option("--seed", type=int, default=None, help="Override the Monte Carlo seed."),
    click.option("--paths", type=int, default=None, help="Override the Monte Carlo path count."),
    click.option("--dt", type=float, default=None, help="Override the Monte Carlo step size."),
    click.option("--theta", type=str, default=None, help="Comma-separated premium amounts."),
]


def common_options(fn):
    for opt in reversed(_common_options):
        fn = opt(fn)
    return fn


def _load_or_exit(config_path, out_dir, seed, paths, dt, theta) -> RunConfig:
    try:
        cfg = load_run_config(config_path)
        cfg = _apply_overrides(cfg, seed, paths, dt, theta)
    except (OSError, tomllib.TOMLDecodeError, InvalidParams, ValueError, TypeError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(CONFIG_ERROR)
    if out_dir is not None:
        cfg.out_dir = out_dir
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg


@click.group()
def main() -> None:
    """Optimal life-insurance / consumption / investment planning tools."""


@main.command("solve")
@common_options
def cmd_solve(config_path, out_dir, seed, paths, dt, theta):
    """Solve both routes; write closed_form.csv, hjb.csv and summary.txt."""
    cfg = _load_or_exit(config_path, out_dir, seed, paths, dt, theta)
    params = cfg.params
    try:
        solution = closedform.solve(params, theta_max=cfg.theta_max)
        grid = TimeGrid(0.0, params.T, cfg.grid_steps)
        nodes = grid.nodes()
        _verbose(f"solving surfaces for thetas {cfg.sweep_thetas}")
        thetas = sorted(set(cfg.check_thetas) | {0.0})
        surfaces = {t: hjb.solve_surface(params, t, grid) for t in thetas}
    except (ArithmeticError, ValueError) as exc:
        click.echo(f"solver error: {exc}", err=True)
        sys.exit(SOLVER_ERROR)

    _write_csv(
        os.path.join(cfg.out_dir, "closed_form.csv"),
        ["t", "g1", "g2", "w_hat"],
        (
            (
                t,
                solution.g1_at(t),
                solution.g2_at(t),
                closedform.optimal_portfolio(t, params),
            )
            for t in nodes
        ),
    )
    header = ["t", "A"] + [f"B_theta{_fmt_theta(t)}" for t in thetas]
    _write_csv(
        os.path.join(cfg.out_dir, "hjb.csv"),
        header,
        (
            [nodes[i], surfaces[thetas[0]].A[i]] + [surfaces[t].B[i] for t in thetas]
            for i in range(nodes.size)
        ),
    )
    v_hjb = float(hjb.value(0.0, params.W0, surfaces[0.0]))
    residual = abs(solution.value - v_hjb) / abs(v_hjb)
    der = derive(params)
    lines = [
        "householder plan summary",
        f"config: {os.path.abspath(config_path)}",
        f"seed: {cfg.seed}",
        f"derived: xi={_fmt(der.xi)} psi={_fmt(der.psi)} gamma={_fmt(der.gamma)}",
        f"zeta_star: {_fmt(solution.zeta_star)}",
        f"theta_hat: {_fmt(solution.theta_hat)}",
        f"J_star: {_fmt(solution.value)}",
        f"V_hjb(0, W0): {_fmt(v_hjb)}",
        f"cross_check_relative_residual: {_fmt(residual)}",
    ]
    with open(os.path.join(cfg.out_dir, "summary.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    click.echo(
        f"theta_hat={_fmt(solution.theta_hat)} "
        f"cross-check residual={residual:.3e}"
    )


def _fmt_theta(t: float) -> str:
    s = f"{t:g}"
    return s.replace(".", "p").replace("-", "m")


@main.command("sweep-theta")
@common_options
def cmd_sweep_theta(config_path, out_dir, seed, paths, dt, theta):
    """Sweep the premium amount; write figure1a.csv and figure1b.csv."""
    cfg = _load_or_exit(config_path, out_dir, seed, paths, dt, theta)
    params = cfg.params
    try:
        grid = TimeGrid(0.0, params.T, cfg.grid_steps)
        thetas = sorted(set(cfg.sweep_thetas))
        surfaces = {t: hjb.solve_surface(params, t, grid) for t in thetas}
        pair = cfg.figure_a_thetas[:2]
        for t in pair:
            if t not in surfaces:
                surfaces[t] = hjb.solve_surface(params, t, grid)
    except (ArithmeticError, ValueError) as exc:
        click.echo(f"solver error: {exc}", err=True)
        sys.exit(SOLVER_ERROR)

    xs = np.linspace(cfg.x_min, cfg.x_max, cfg.x_points)
    _write_csv(
        os.path.join(cfg.out_dir, "figure1a.csv"),
        ["x"] + [f"V_theta{_fmt_theta(t)}" for t in pair],
        ((x, *(float(hjb.value(0.0, x, surfaces[t])) for t in pair)) for x in xs),
    )
    _write_csv(
        os.path.join(cfg.out_dir, "figure1b.csv"),
        ["theta"] + [f"V_x{_fmt_theta(x)}" for x in cfg.x_values],
        (
            (t, *(float(hjb.value(0.0, x, surfaces[t])) for x in cfg.x_values))
            for t in thetas
        ),
    )
    if len(thetas) >= 2:
        ok = True
        for x in cfg.x_values:
            vals = [float(hjb.value(0.0, x, surfaces[t])) for t in thetas]
            if any(v1 > v0 + 1e-15 for v0, v1 in zip(vals, vals[1:])):
                ok = False
        click.echo(
            "theta-monotonicity (V(0,x) nonincreasing in theta): "
            + ("PASS" if ok else "FAIL")
        )
    else:
        click.echo("theta-monotonicity: skipped (single theta)")


@main.command("indifference")
@common_options
def cmd_indifference(config_path, out_dir, seed, paths, dt, theta):
    """Buyer's indifference prices; write indifference.csv."""
    cfg = _load_or_exit(config_path, out_dir, seed, paths, dt, theta)
    params = cfg.params
    thetas = sorted(set(cfg.sweep_thetas if theta is None else cfg.check_thetas))
    try:
        grid = TimeGrid(0.0, params.T, cfg.grid_steps)
        zero = hjb.solve_surface(params, 0.0, grid)
        rows = []
        for t in thetas:
            h = hjb.indifference_price(0.0, t, params, cfg.grid_steps)
            surface = hjb.solve_surface(params, t, grid)
            ok = all(
                abs(_bisect_indifference(zero, surface, x) - h) < 1e-8
                for x in cfg.x_values
            )
            rows.append((t, h, "PASS" if ok else "FAIL"))
    except (ArithmeticError, ValueError) as exc:
        click.echo(f"solver error: {exc}", err=True)
        sys.exit(SOLVER_ERROR)
    _write_csv(
        os.path.join(cfg.out_dir, "indifference.csv"),
        ["theta", "h", "self_check"],
        rows,
    )
    click.echo("\n".join(f"theta={r[0]:g} h={_fmt(r[1])} [{r[2]}]" for r in rows))


def _bisect_indifference(zero_surface, theta_surface, x: float) -> float:
    """Solve V_0(0, x) = V_theta(0, x - h) for h by bisection."""
    target = float(hjb.value(0.0, x, zero_surface))

    def diff(h: float) -> float:
        return float(hjb.value(0.0, x - h, theta_surface)) - target

    lo, hi = -100.0, 100.0
    flo = diff(lo)
    if flo > 0:  # V_theta increasing in x - h, so diff is decreasing in h
        lo, hi = hi, lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if diff(mid) > 0:
            lo = mid
        else:
            hi = mid
        if abs(hi - lo) < 1e-12:
            break
    return 0.5 * (lo + hi)


@main.command("validate")
@common_options
@click.option(
    "--corrupt-drift",
    type=float,
    default=0.0,
    help="Testing aid: bias the simulated risky drift by this amount "
    "(solvers are unaffected); nonzero values should make checks fail.",
)
def cmd_validate(config_path, out_dir, seed, paths, dt, theta, corrupt_drift):
    """Run the statistical validation suite; write validation.txt."""
    cfg = _load_or_exit(config_path, out_dir, seed, paths, dt, theta)
    params = cfg.params
    sim_params = (
        replace(params, mu=params.mu + corrupt_drift) if corrupt_drift else params
    )
    reports: list[montecarlo.CheckReport] = []
    lines: list[str] = [
        f"validation suite (seed={cfg.seed}, paths={cfg.mc_paths}, "
        f"dt={_fmt(cfg.mc_dt)}, utility_dt={_fmt(cfg.mc_utility_dt)}, "
        f"workers={cfg.workers})"
    ]
    try:
        solution = closedform.solve(params, theta_max=cfg.theta_max)

        _verbose("martingale checks")
        mart_cfg = montecarlo.SimConfig(
            n_paths=cfg.mc_paths,
            grid=_mc_grid(cfg, cfg.mc_dt),
            seed=cfg.seed,
            measure="physical",
            dynamics="paper-eq-2.4",
            workers=cfg.workers,
        )
        t_list = [params.T / 4, params.T / 2, params.T]
        reports.extend(
            montecarlo.MonteCarloEngine(mart_cfg).martingale_check(t_list, sim_params)
        )

        _verbose("budget check")
        budget_cfg = replace(mart_cfg, measure="pricing-v-star")
        engine = montecarlo.MonteCarloEngine(budget_cfg)
        if corrupt_drift:
            reports.append(
                closedform.budget_identity_check(solution, sim_params, engine)
            )
        else:
            reports.append(engine.budget_check(solution, params))

        _verbose("utility vs dynamic-programming value")
        grid = TimeGrid(0.0, params.T, cfg.grid_steps)
        util_cfg = montecarlo.SimConfig(
            n_paths=cfg.mc_paths,
            grid=_mc_grid(cfg, cfg.mc_utility_dt),
            seed=cfg.seed,
            measure="physical",
            dynamics="hjb-generator",
            workers=cfg.workers,
        )
        for th in cfg.check_thetas:
            surface = hjb.solve_surface(params, th, grid)
            controls = hjb.feedback_controls(surface, params)
            run = montecarlo.MonteCarloEngine(util_cfg).run_utility_estimate(
                sim_params, controls
            )
            target = float(hjb.value(0.0, params.W0, surface))
            gap = run.result.mean - target
            threshold = (
                3.0 * run.result.std_error if run.result.std_error > 0 else 1e-8
            )
            reports.append(
                montecarlo.CheckReport(
                    name=f"utility vs value surface @ theta={th:g}",
                    value=gap,
                    std_error=run.result.std_error,
                    threshold=threshold,
                    passed=abs(gap) <= threshold,
                    n_paths=cfg.mc_paths,
                    seed=cfg.seed,
                )
            )
            lines.append(
                f"negative-consumption step fraction @ theta={th:g}: "
                f"{_fmt(run.negative_consumption_fraction)}"
            )
    except (ArithmeticError, ValueError) as exc:
        click.echo(f"solver error: {exc}", err=True)
        sys.exit(SOLVER_ERROR)

    lines.extend(r.line() for r in reports)
    all_pass = all(r.passed for r in reports)
    lines.append("result: ALL PASS" if all_pass else "result: FAILURES PRESENT")
    report_path = os.path.join(cfg.out_dir, "validation.txt")
    with open(report_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    click.echo("\n".join(lines))
    if not all_pass:
        sys.exit(VALIDATION_ERROR)


if __name__ == "__main__":
    main()
