import functools
import sys
import typing as tp
from enum import Enum
from pathlib import Path

import typer

import reaction_learn.config as config
import reaction_learn.utils as utils
from reaction_learn import (
    DEFAULT_SWEEP,
    FitReport,
    fit_data,
    integrate_report,
    monomial_labels,
    prune_data,
    render_model,
    score_report,
    simulate_abm,
    sweep_data,
)
from reaction_learn.abm import AbmConfig
from reaction_learn.echo import echo, setup_logger
from reaction_learn.helpers import Exit, InputError, NumericalError, exit_if
from reaction_learn.ode_sim import IntegrationConfig
from reaction_learn.reactions import enumerate_library, render_reaction
from reaction_learn.solvers import SolverOptions

app = typer.Typer(
    name="reaction-learn",
    help=f"""Learn reaction-network ODEs from stochastic simulation data.

    \b
    [dim]Ver: {config.__version__}[/dim]
    """,
    context_settings=config.CONTEXT_SETTINGS,
    pretty_exceptions_enable=config.PRETTY_EXCEPTIONS,
    rich_markup_mode="rich",
    no_args_is_help=True,
)

P = tp.ParamSpec("P")


class FitMode(str, Enum):
    coupled = "coupled"
    decoupled = "decoupled"


class Solver(str, Enum):
    nnls = "nnls"
    lsq = "lsq"
    ridge = "ridge"
    lsqr = "lsqr"
    lasso = "lasso"
    stlsq = "stlsq"


@app.callback()
def app_callback(
    json: bool = typer.Option(False, "--json", help="JSON output mode"),
    log_level: str | None = typer.Option(
        None,
        "--log-level",
        help="Log level (debug|info|warn|error)",
    ),
):
    """Global options for all commands."""
    if json:
        config.JSON_OUTPUT = True
    if log_level is not None:
        config.LOG_LEVEL = log_level
    setup_logger(log_level=log_level)


def exit_codes(fn: tp.Callable[P, None]) -> tp.Callable[P, None]:
    """Report an ``Exit`` and turn it into the process exit code"""

    @functools.wraps(fn)
    def wrapper(*args: P.args, **kwargs: P.kwargs) -> None:
        try:
            fn(*args, **kwargs)
        except Exit as e:
            if config.RAISE_EXCEPTIONS:
                raise
            if config.JSON_OUTPUT:
                echo.print_json({"error": e.message, "code": e.code})
            else:
                echo.printc(f"Error: {e.message}", color="red", bold=True)
            raise typer.Exit(e.code) from e

    return wrapper


def _solver_options(
    solver: Solver | None,
    ridge_k: float,
    lam: float,
    threshold: float,
    max_iter: int | None,
    tol: float | None,
    default: str,
) -> SolverOptions:
    return SolverOptions(
        method=solver.value if solver else default,
        ridge_k=ridge_k,
        lam=lam,
        threshold=threshold,
        max_iter=max_iter,
        tol=tol,
    )


def _show_report(report: FitReport) -> None:
    if config.JSON_OUTPUT:
        echo.print_json(report.to_dict())
        return
    for line in render_model(report.model):
        echo.print(line)
    if report.rates is not None:
        lib = enumerate_library(report.dimension)
        excluded = set(report.excluded or [])
        rows = [
            (j + 1, render_reaction(lib[j], lib.species), f"{k:.6g}")
            for j, k in enumerate(report.rates)
            if j not in excluded
        ]
        echo.table("Rate constants", ["#", "reaction", "k"], rows)
    if report.coefficients is not None and report.monomials is not None:
        names = monomial_labels(report.monomials, report.dimension)
        rows = [[name, *(f"{c[n]:.6g}" for c in report.coefficients)] for n, name in enumerate(names)]
        echo.table("Coefficients", ["monomial", *(f"d{i + 1}" for i in range(report.dimension))], rows)
    _show_mse(report.mse_trajectory, report.mse_final)
    if not report.converged:
        echo.warning("Solver did not converge; the returned iterate is reported anyway")


def _show_mse(trajectory: tp.Sequence[float] | None, final: tp.Sequence[float] | None) -> None:
    if trajectory is None or final is None:
        return
    rows = [
        (f"x{i + 1}", utils.format_float(t), utils.format_float(f))
        for i, (t, f) in enumerate(zip(trajectory, final, strict=True))
    ]
    echo.table("Mean squared error", ["component", "trajectory", "final"], rows)


def _check_instability(report: FitReport) -> None:
    if report.instability is not None:
        raise NumericalError(f"Fitted model is unstable: {report.instability}")


@app.command("library")
@exit_codes
def library_command(
    species: int = typer.Option(2, "--species", "-d", help="Number of species"),
    out: Path | None = typer.Option(None, "--out", "-o", help="Output JSON (stdout if omitted)"),
):
    """Write the complete uni/bimolecular reaction library as JSON"""
    lib = enumerate_library(species)
    if out is not None:
        utils.write_json(out, lib.to_dict())
        echo.info(f"Wrote {len(lib)} reactions to {out}")
    if config.JSON_OUTPUT or out is None:
        echo.print_json(lib.to_dict())
        return
    echo.table("Reactions", ["#", "reaction"], [(r.id + 1, render_reaction(r, lib.species)) for r in lib])


@app.command("abm")
@exit_codes
def abm_command(
    out: Path = typer.Option(..., "--out", "-o", help="Output directory"),
    config_path: Path | None = typer.Option(None, "--config", "-c", help="ABM config JSON"),
    runs: int = typer.Option(1, "--runs", "-n", help="Number of runs"),
    seed: int = typer.Option(0, "--seed", help="Base seed (run i uses seed + i)"),
    workers: int = typer.Option(config.WORKERS, "--workers", help="Worker processes"),
):
    """Simulate an ABM ensemble: per-run CSVs, mean.csv and manifest.json"""
    cfg = AbmConfig.load(config_path) if config_path is not None else AbmConfig.default()
    if runs < 1:
        raise InputError(f"--runs must be >= 1, got {runs}")
    manifest = simulate_abm(cfg, runs, seed, out, workers=workers)
    if config.JSON_OUTPUT:
        echo.print_json(manifest)


@app.command("fit")
@exit_codes
def fit_command(
    data: Path = typer.Argument(..., help="CSV with columns t,x1..xd"),
    mode: FitMode = typer.Option(FitMode.coupled, "--mode", "-m", help="coupled or decoupled"),
    solver: Solver | None = typer.Option(None, "--solver", help="Default: nnls (coupled), lsqr (decoupled)"),
    ridge_k: float = typer.Option(0.0, "--ridge-k"),
    lam: float = typer.Option(0.0, "--lambda"),
    threshold: float = typer.Option(0.0, "--threshold"),
    max_iter: int | None = typer.Option(None, "--max-iter"),
    tol: float | None = typer.Option(None, "--tol"),
    stride: int = typer.Option(1, "--subsample", help="Keep every n-th point"),
    out: Path | None = typer.Option(None, "--out", "-o", help="FitReport JSON"),
):
    """Fit a polynomial ODE to (ensemble-mean) densities"""
    default = "nnls" if mode == FitMode.coupled else "lsqr"
    options = _solver_options(solver, ridge_k, lam, threshold, max_iter, tol, default)
    report = fit_data(data, mode.value, options, stride)
    if out is not None:
        report.save(out)
    _show_report(report)
    _check_instability(report)


@app.command("prune")
@exit_codes
def prune_command(
    data: Path = typer.Argument(..., help="CSV with columns t,x1..xd"),
    exclude: str | None = typer.Option(None, "--exclude", "-x", help="1-based reaction numbers, e.g. 12,6,3"),
    sweep: list[str] = typer.Option([], "--sweep", help="Exclusion set per refit (repeatable)"),
    max_iter: int | None = typer.Option(None, "--max-iter"),
    stride: int = typer.Option(1, "--subsample", help="Keep every n-th point"),
    workers: int = typer.Option(config.WORKERS, "--workers"),
    out: Path | None = typer.Option(None, "--out", "-o", help="Report JSON"),
):
    """Coupled refit without selected reactions (default: sweep 12 | 12,6 | 12,6,3)"""
    options = SolverOptions("nnls", max_iter=max_iter)
    exit_if(exclude is not None and bool(sweep), "Use either --exclude or --sweep", code=InputError.code)
    if exclude is None:
        sets = [utils.parse_ids(s) for s in sweep] if sweep else [list(s) for s in DEFAULT_SWEEP]
        results = sweep_data(data, sets, options, stride, workers)
        payload = [r.to_dict() for r in results]
        if out is not None:
            utils.write_json(out, payload)
        if config.JSON_OUTPUT:
            echo.print_json(payload)
            return
        rows = [
            (
                ",".join(map(str, r.excluded)),
                f"{r.report.residual_norm:.4g}",
                " ".join(utils.format_float(v) for v in r.report.mse_trajectory or []) or "unstable",
                " ".join(f"{v:.4g}" for v in r.equilibrium) if r.equilibrium else r.equilibrium_error,
            )
            for r in results
        ]
        echo.table("Pruning sweep", ["excluded", "residual", "mse", "equilibrium"], rows)
        return

    report = prune_data(data, utils.parse_ids(exclude), options, stride)
    if out is not None:
        report.save(out)
    _show_report(report)
    _check_instability(report)


def _grid(t_end: float | None, h: float | None) -> IntegrationConfig:
    return IntegrationConfig(
        t_end=config.GRID_T_END if t_end is None else t_end,
        h=config.GRID_STEP if h is None else h,
    )


@app.command("integrate")
@exit_codes
def integrate_command(
    report_path: Path = typer.Argument(..., help="FitReport JSON"),
    y0: str | None = typer.Option(None, "--y0", help="Initial state, e.g. 0.001,0.324"),
    t_end: float | None = typer.Option(None, "--t-end"),
    h: float | None = typer.Option(None, "--h"),
    out: Path = typer.Option(..., "--out", "-o", help="Trajectory CSV"),
):
    """Integrate a fitted model with RK4 and write the trajectory"""
    report = FitReport.load(report_path)
    state = utils.parse_floats(y0, "--y0") if y0 is not None else None
    ts = integrate_report(report, state, _grid(t_end, h))
    utils.write_series(ts, out)
    echo.info(f"Wrote {ts.n_points} points to {out}")
    if config.JSON_OUTPUT:
        echo.print_json({"out": str(out), "n_points": ts.n_points, "final": ts.values[-1].tolist()})


@app.command("mse")
@exit_codes
def mse_command(
    report_path: Path = typer.Argument(..., help="FitReport JSON"),
    data: Path = typer.Argument(..., help="CSV to compare against"),
    y0: str | None = typer.Option(None, "--y0", help="Initial state (default: first data row)"),
):
    """Per-component mean squared error of a fitted model against data"""
    report = FitReport.load(report_path)
    series = utils.read_series(data)
    state = utils.parse_floats(y0, "--y0") if y0 is not None else None
    trajectory, final = score_report(report, series, state)
    if config.JSON_OUTPUT:
        echo.print_json({"mse_trajectory": trajectory.tolist(), "mse_final": final.tolist()})
        return
    _show_mse(trajectory.tolist(), final.tolist())


def run():
    try:
        app()
    except Exit as e:
        echo.debug(f"Exit: {e.code}")
        echo.printc(f"Error: {e.message}", color="red", bold=True)
        if config.RAISE_EXCEPTIONS:
            raise
        sys.exit(e.code)
    except Exception as e:
        if config.JSON_OUTPUT:
            echo.print_json({"error": f"{e.__class__.__name__}: {e}", "code": 2})
        else:
            echo.printc(f"{e.__class__.__name__}: {e}", color="red", bold=True)
            echo.printc("Set RAISE_EXCEPTIONS=true environment variable to raise exceptions")
        if config.RAISE_EXCEPTIONS:
            raise
        sys.exit(2)
