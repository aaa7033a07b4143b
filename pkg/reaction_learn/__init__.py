import dataclasses
import typing as tp
from pathlib import Path

import numpy as np

import reaction_learn.config as config
import reaction_learn.utils as utils
from reaction_learn.abm import AbmConfig, run_ensemble
from reaction_learn.echo import echo
from reaction_learn.eql import (
    COUPLED,
    DECOUPLED,
    FitResult,
    SweepEntry,
    fit_coupled,
    fit_decoupled,
    prune_and_refit,
    subsample,
    sweep_exclusions,
    trajectory_mse,
)
from reaction_learn.helpers import DimensionError, Exit, InputError, check_dimension
from reaction_learn.ode_sim import IntegrationConfig, integrate_rk4
from reaction_learn.reactions import (
    PolynomialODE,
    ReactionLibrary,
    default_species,
    enumerate_library,
    render_monomial,
)
from reaction_learn.series import TimeSeries
from reaction_learn.solvers import SolverOptions

MEAN_CSV = "mean.csv"
MANIFEST_JSON = "manifest.json"
# 1-based; drops the weakest reactions of the coupled tumour fit one at a time
DEFAULT_SWEEP = ((12,), (12, 6), (12, 6, 3))


@dataclasses.dataclass(frozen=True)
class FitReport:
    """Serializable outcome of one fit, written by ``fit`` and ``prune``"""

    mode: str  # coupled | decoupled
    method: str
    solver_options: dict[str, tp.Any]
    polynomial: dict[str, tp.Any]  # PolynomialODE.to_dict()
    residual_norm: float
    provenance: dict[str, tp.Any]  # input, n_points, dimension, h, stride
    diagnostics: list[dict[str, tp.Any]]
    library: dict[str, tp.Any] | None = None  # coupled: ReactionLibrary.to_dict()
    rates: list[float] | None = None  # coupled: full vector, zeros included
    active: list[int] | None = None  # 0-based reaction ids
    excluded: list[int] | None = None
    monomials: list[list[int]] | None = None  # decoupled
    coefficients: list[list[float]] | None = None  # decoupled, one row per component
    mse_trajectory: list[float] | None = None
    mse_final: list[float] | None = None
    instability: str | None = None
    negative_transient: bool = False
    converged: bool = True
    tool_version: str = config.__version__

    @classmethod
    def from_fit(
        cls,
        fit: FitResult,
        options: SolverOptions,
        provenance: dict[str, tp.Any],
        lib: ReactionLibrary | None = None,
    ) -> "FitReport":
        coupled = fit.layout == COUPLED
        return cls(
            mode=fit.layout,
            method=options.method,
            solver_options=options.to_dict(),
            polynomial=fit.model.to_dict(),
            residual_norm=float(fit.residual_norm),
            provenance=provenance,
            diagnostics=fit.diagnostics(),
            library=lib.to_dict() if coupled and lib is not None else None,
            rates=fit.rates.values.tolist() if fit.rates is not None else None,
            active=sorted(fit.active_reactions) if coupled else None,
            excluded=sorted(fit.excluded) if coupled else None,
            monomials=[list(m) for m in fit.monomials] if not coupled else None,
            coefficients=fit.coefficients.tolist() if fit.coefficients is not None else None,
            mse_trajectory=_as_list(fit.mse_trajectory),
            mse_final=_as_list(fit.mse_final),
            instability=fit.instability,
            negative_transient=fit.negative_transient,
            converged=fit.converged,
        )

    @property
    def model(self) -> PolynomialODE:
        return PolynomialODE.from_dict(self.polynomial)

    @property
    def dimension(self) -> int:
        return int(self.polynomial["dimension"])

    def to_dict(self) -> dict[str, tp.Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, tp.Any]) -> "FitReport":
        fields = {f.name for f in dataclasses.fields(cls)}
        try:
            return cls(**{k: v for k, v in data.items() if k in fields})
        except TypeError as e:
            raise InputError(f"Malformed fit report: {e}") from e

    def save(self, path: Path) -> None:
        utils.write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: Path) -> "FitReport":
        data = utils.read_json(path)
        if not isinstance(data, dict):
            raise InputError(f"Fit report `{path}` must be a JSON object")
        return cls.from_dict(data)


def _as_list(values: np.ndarray | None) -> list[float] | None:
    return None if values is None else [float(v) for v in values]


def load_series(path: Path, stride: int = 1) -> tuple[TimeSeries, dict[str, tp.Any]]:
    """Read a CSV and subsample; returns the series with its provenance record"""
    ts = utils.read_series(path)
    if stride != 1:
        ts = subsample(ts, stride)
    provenance = {
        "input": str(path),
        "n_points": ts.n_points,
        "dimension": ts.dimension,
        "h": ts.h,
        "stride": stride,
    }
    return ts, provenance


def fit_data(
    path: Path,
    mode: str,
    options: SolverOptions | None = None,
    stride: int = 1,
) -> FitReport:
    """Fit a CSV of (ensemble-mean) densities"""
    ts, provenance = load_series(path, stride)
    if mode == COUPLED:
        lib = enumerate_library(ts.dimension)
        options = options or SolverOptions("nnls")
        fit = fit_coupled(ts, lib, options)
        return FitReport.from_fit(fit, options, provenance, lib)
    if mode == DECOUPLED:
        options = options or SolverOptions("lsqr")
        fit = fit_decoupled(ts, options=options)
        return FitReport.from_fit(fit, options, provenance)
    raise InputError(f"Unknown fit mode `{mode}` (coupled|decoupled)")


def prune_data(
    path: Path,
    numbers: tp.Sequence[int],
    options: SolverOptions | None = None,
    stride: int = 1,
) -> FitReport:
    """Coupled refit without the given 1-based reaction numbers"""
    ts, provenance = load_series(path, stride)
    lib = enumerate_library(ts.dimension)
    options = options or SolverOptions("nnls")
    fit = prune_and_refit(ts, lib, to_zero_based(numbers, len(lib)), options)
    return FitReport.from_fit(fit, options, provenance, lib)


@dataclasses.dataclass
class SweepReport:
    excluded: list[int]  # 1-based, as given on the command line
    report: FitReport
    equilibrium: list[float] | None
    equilibrium_error: str | None

    def to_dict(self) -> dict[str, tp.Any]:
        return {
            "excluded": self.excluded,
            "report": self.report.to_dict(),
            "equilibrium": self.equilibrium,
            "equilibrium_error": self.equilibrium_error,
        }


def sweep_data(
    path: Path,
    exclusion_sets: tp.Sequence[tp.Sequence[int]],
    options: SolverOptions | None = None,
    stride: int = 1,
    workers: int = config.WORKERS,
) -> list[SweepReport]:
    """Pruning sweep; ``exclusion_sets`` use 1-based reaction numbers"""
    ts, provenance = load_series(path, stride)
    lib = enumerate_library(ts.dimension)
    options = options or SolverOptions("nnls")
    zero_based = [to_zero_based(s, len(lib)) for s in exclusion_sets]
    entries: list[SweepEntry] = sweep_exclusions(ts, lib, zero_based, options, workers=workers)
    return [
        SweepReport(
            excluded=list(one_based),
            report=FitReport.from_fit(entry.fit, options, provenance, lib),
            equilibrium=_as_list(entry.equilibrium),
            equilibrium_error=entry.equilibrium_error,
        )
        for one_based, entry in zip(exclusion_sets, entries, strict=True)
    ]


def to_zero_based(ids: tp.Iterable[int], size: int) -> list[int]:
    ids = list(ids)
    bad = [j for j in ids if not 1 <= j <= size]
    if bad:
        raise InputError(f"Reaction numbers {bad} are outside 1..{size}")
    return [j - 1 for j in ids]


def default_initial_state(d: int) -> tuple[float, ...]:
    if d != len(config.INITIAL_STATE):
        raise InputError(f"No default initial state for {d} species, pass --y0")
    return config.INITIAL_STATE


def integrate_report(
    report: FitReport, y0: tp.Sequence[float] | None, cfg: IntegrationConfig
) -> TimeSeries:
    y0 = default_initial_state(report.dimension) if y0 is None else y0
    check_dimension(len(y0), report.dimension, "--y0")
    return integrate_rk4(report.model, y0, cfg)


def score_report(
    report: FitReport, data: TimeSeries, y0: tp.Sequence[float] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    if data.dimension != report.dimension:
        raise DimensionError(
            f"Model has {report.dimension} components, data has {data.dimension}"
        )
    return trajectory_mse(report.model, data, y0)


def render_model(model: PolynomialODE) -> list[str]:
    return model.render(default_species(model.dimension))


def simulate_abm(
    cfg: AbmConfig,
    runs: int,
    base_seed: int,
    out_dir: Path,
    workers: int = config.WORKERS,
) -> dict[str, tp.Any]:
    """Run an ABM ensemble and write run_XXXX.csv, mean.csv and manifest.json"""
    out_dir = utils.ensure_dir(out_dir)
    ensemble = run_ensemble(cfg, runs, base_seed, workers=workers)
    width = max(4, len(str(runs - 1)))
    files = []
    try:
        for i, series in enumerate(ensemble):
            name = f"run_{i:0{width}d}.csv"
            utils.write_series(series, out_dir / name)
            files.append(name)
        utils.write_series(ensemble.mean(), out_dir / MEAN_CSV)
        manifest = {
            "tool_version": config.__version__,
            "runs": runs,
            "base_seed": base_seed,
            "seeds": [base_seed + i for i in range(runs)],
            "config": cfg.to_dict(),
            "config_hash": cfg.config_hash(),
            "files": files,
            "mean": MEAN_CSV,
        }
        utils.write_json(out_dir / MANIFEST_JSON, manifest)
    except Exit:
        echo.error(f"Ensemble output in {out_dir} is incomplete ({len(files)} of {runs} runs)")
        raise
    echo.info(f"Wrote {runs} runs, {MEAN_CSV} and {MANIFEST_JSON} to {out_dir}")
    return manifest


def monomial_labels(monomials: tp.Sequence[tp.Sequence[int]], d: int) -> list[str]:
    species = default_species(d)
    return [render_monomial(tuple(m), species) for m in monomials]


__all__ = [
    "FitReport",
    "SweepReport",
    "fit_data",
    "integrate_report",
    "load_series",
    "prune_data",
    "score_report",
    "simulate_abm",
    "sweep_data",
]
