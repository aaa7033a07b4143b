"""Equation learning from ensemble-averaged densities.

Two fitting modes share the same derivative estimate:

- coupled: one non-negative regression of the stacked derivatives
  ``(x'_1..x'_N, z'_1..z'_N, ...)`` on the reaction columns ``nu_j * a_j(Y)``;
- decoupled: one regression per component on constant-free monomials.
"""

import concurrent.futures
import dataclasses
import typing as tp

import numpy as np

from reaction_learn.echo import echo
from reaction_learn.helpers import (
    DegenerateDataError,
    InputError,
    InstabilityError,
    NonConvergenceError,
    check_dimension,
)
from reaction_learn.ode_sim import (
    IntegrationConfig,
    find_equilibrium,
    has_negative_transient,
    integrate_rk4,
)
from reaction_learn.reactions import (
    Exponents,
    PolynomialODE,
    RateVector,
    ReactionLibrary,
    assemble_polynomial,
    check_monomial,
)
from reaction_learn.series import Ensemble, TimeSeries
from reaction_learn.solvers import (
    RegressionProblem,
    SolverOptions,
    SolverResult,
    run_solver,
)

Smoothing = tp.Callable[[TimeSeries], TimeSeries]

COUPLED = "coupled"
DECOUPLED = "decoupled"


def _rates(values: dict[int, float], size: int = 17) -> np.ndarray:
    rates = np.zeros(size)
    for one_based, k in values.items():
        rates[one_based - 1] = k
    return rates


# Coupled fits of the tumour/healthy ensemble (1-based reaction numbering)
TUMOUR_RATES_1800 = _rates(
    {5: 3.2039137, 7: 2.983428, 9: 3.132762, 10: 9.107733, 12: 0.116421, 14: 0.119287, 15: 3.855036, 17: 4.520207}
)
TUMOUR_RATES_180 = _rates(
    {5: 3.063352, 7: 2.586338, 9: 3.000332, 10: 7.912730, 12: 0.113799, 14: 0.079011, 15: 3.44351, 17: 4.45157}
)

_X, _Z, _XX, _ZZ, _XZ = (1, 0), (0, 1), (2, 0), (0, 2), (1, 1)

# Printed equations; these differ slightly from assembling the rates above
TUMOUR_COUPLED_1800 = PolynomialODE.from_terms(
    2,
    [
        {_X: 3.2039, _XX: -3.2491, _ZZ: 0.0591, _XZ: -8.3752},
        {_Z: 2.9834, _ZZ: -9.2296, _XX: 0.0582, _XZ: -3.8550},
    ],
)
TUMOUR_COUPLED_180 = PolynomialODE.from_terms(
    2,
    [
        {_X: 3.0634, _XX: -3.1141, _ZZ: 0.0395, _XZ: -7.8951},
        {_Z: 2.5863, _ZZ: -7.9917, _XX: 0.0582, _XZ: -3.4435},
    ],
)
TUMOUR_DECOUPLED_LSQR = PolynomialODE.from_terms(
    2,
    [
        {_X: 2.5877, _XX: -2.6283, _Z: -0.7384, _ZZ: 2.3198, _XZ: -5.9795},
        {_Z: 0.1407, _ZZ: -0.4710, _X: -0.6011, _XX: 0.6204, _XZ: 1.2618},
    ],
)


@dataclasses.dataclass(frozen=True, eq=False)
class DerivativeEstimate:
    values: np.ndarray


@dataclasses.dataclass(frozen=True, eq=False)
class DesignMatrix:
    entries: np.ndarray
    columns: tuple[tp.Any, ...]  # reaction ids (coupled) or exponent tuples (decoupled)
    layout: str


@dataclasses.dataclass(eq=False)
class FitResult:
    layout: str
    model: PolynomialODE
    residual_norm: float
    solver_results: list[SolverResult]
    rates: RateVector | None = None
    reaction_ids: tuple[int, ...] = ()
    coefficients: np.ndarray | None = None
    monomials: tuple[Exponents, ...] = ()
    mse_trajectory: np.ndarray | None = None
    mse_final: np.ndarray | None = None
    instability: str | None = None
    negative_transient: bool = False

    @property
    def active_reactions(self) -> frozenset[int]:
        return self.rates.active() if self.rates is not None else frozenset()

    @property
    def excluded(self) -> frozenset[int]:
        if self.rates is None:
            return frozenset()
        return frozenset(range(len(self.rates))) - set(self.reaction_ids)

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.solver_results)

    def rate_map(self) -> dict[int, float]:
        """Rate per fitted reaction id; excluded reactions are absent"""
        if self.rates is None:
            return {}
        return {j: float(self.rates.values[j]) for j in self.reaction_ids}

    def diagnostics(self) -> list[dict[str, tp.Any]]:
        return [r.summary() for r in self.solver_results]


def ensemble_mean(e: Ensemble) -> TimeSeries:
    return e.mean()


def finite_difference(ts: TimeSeries) -> DerivativeEstimate:
    """Central differences inside, second-order one-sided stencils at both ends."""
    ts.require_points(3, "Finite differences")
    return DerivativeEstimate(np.gradient(ts.values, ts.h, axis=0, edge_order=2))


def subsample(ts: TimeSeries, stride: int) -> TimeSeries:
    if stride < 1:
        raise InputError(f"Stride must be >= 1, got {stride}")
    if stride > 1 and ts.n_points <= stride:
        raise InputError(f"Stride {stride} needs more than {stride} points, got {ts.n_points}")
    values = ts.values[::stride]
    if values.shape[0] < 3:
        raise InputError(f"Subsampling by {stride} leaves {values.shape[0]} points (need 3)")
    return TimeSeries(ts.t0, ts.h * stride, values)


def default_monomials(d: int) -> list[Exponents]:
    """Per species x_i, x_i^2, then cross terms x_i x_j (i < j): (x, x^2, z, z^2, xz) at d = 2"""
    monomials: list[Exponents] = []
    for i in range(d):
        for power in (1, 2):
            e = [0] * d
            e[i] = power
            monomials.append(tuple(e))
    for i in range(d):
        for j in range(i + 1, d):
            e = [0] * d
            e[i] = e[j] = 1
            monomials.append(tuple(e))
    return monomials


def coupled_design_matrix(
    ts: TimeSeries, lib: ReactionLibrary, ids: tp.Sequence[int] | None = None
) -> DesignMatrix:
    """Rows component-major: all times of component 0, then component 1, ..."""
    check_dimension(ts.dimension, lib.dimension, "time series")
    ids = tuple(range(len(lib))) if ids is None else tuple(ids)
    propensities = lib.propensities(ts.values)[:, ids]  # (N, m)
    stoich = lib.stoichiometry[list(ids)].T.astype(float)  # (d, m)
    entries = (stoich[:, None, :] * propensities[None, :, :]).reshape(-1, len(ids))
    return DesignMatrix(entries, ids, COUPLED)


def decoupled_design_matrix(ts: TimeSeries, monomials: tp.Sequence[tp.Sequence[int]]) -> DesignMatrix:
    if not monomials:
        raise InputError("Decoupled fit needs at least one monomial")
    exponents = tuple(check_monomial(m, ts.dimension) for m in monomials)
    E = np.array(exponents, dtype=np.int64)
    entries = np.prod(ts.values[:, None, :] ** E, axis=-1)
    return DesignMatrix(entries, exponents, DECOUPLED)


def trajectory_mse(
    model: PolynomialODE, ts: TimeSeries, y0: tp.Sequence[float] | np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``model`` on the grid of ``ts``; (mean over time, last point) squared errors."""
    check_dimension(model.dimension, ts.dimension, "model")
    y0 = ts.values[0] if y0 is None else y0
    predicted = integrate_rk4(model, y0, IntegrationConfig.for_series(ts))
    errors = (predicted.values - ts.values) ** 2
    return errors.mean(axis=0), errors[-1]


def _score(result: FitResult, ts: TimeSeries) -> FitResult:
    """Attach MSEs, or the instability message when re-integration blows up."""
    try:
        predicted = integrate_rk4(result.model, ts.values[0], IntegrationConfig.for_series(ts))
    except InstabilityError as e:
        echo.warning(f"Fitted model is unstable: {e.message}")
        result.instability = e.message
        return result
    errors = (predicted.values - ts.values) ** 2
    result.mse_trajectory = errors.mean(axis=0)
    result.mse_final = errors[-1]
    result.negative_transient = has_negative_transient(predicted)
    if result.negative_transient:
        echo.warning("Fitted model goes negative along the data grid")
    return result


def _prepare(ts: TimeSeries, smoothing: Smoothing | None) -> tuple[TimeSeries, DerivativeEstimate]:
    ts.require_points(3, "Fitting")
    source = smoothing(ts) if smoothing is not None else ts
    return source, finite_difference(source)


def _fit_reactions(
    ts: TimeSeries,
    lib: ReactionLibrary,
    ids: tp.Sequence[int],
    options: SolverOptions | None,
    smoothing: Smoothing | None,
) -> FitResult:
    options = options or SolverOptions("nnls")
    if options.method != "nnls":
        raise InputError(f"Coupled fits need non-negative rates (solver nnls), got {options.method}")
    source, deriv = _prepare(ts, smoothing)
    design = coupled_design_matrix(source, lib, ids)
    if not np.any(design.entries):
        raise DegenerateDataError("Design matrix is all zeros (data identically zero?)")

    rhs = deriv.values.T.ravel()
    solved = run_solver(RegressionProblem(design.entries, rhs), options)
    rates = np.zeros(len(lib))
    rates[list(ids)] = solved.x
    K = RateVector(rates)
    result = FitResult(
        layout=COUPLED,
        model=assemble_polynomial(lib, K),
        residual_norm=solved.residual_norm,
        solver_results=[solved],
        rates=K,
        reaction_ids=tuple(ids),
    )
    echo.info(
        f"Coupled fit over {len(ids)} reactions: {len(K.active())} active, "
        f"residual {solved.residual_norm:.4g}"
    )
    return _score(result, ts)


def fit_coupled(
    ts: TimeSeries,
    lib: ReactionLibrary,
    options: SolverOptions | None = None,
    smoothing: Smoothing | None = None,
) -> FitResult:
    return _fit_reactions(ts, lib, range(len(lib)), options, smoothing)


def prune_and_refit(
    ts: TimeSeries,
    lib: ReactionLibrary,
    excluded: tp.Iterable[int],
    options: SolverOptions | None = None,
    smoothing: Smoothing | None = None,
) -> FitResult:
    """Coupled fit without the ``excluded`` (0-based) reaction ids"""
    excluded = set(excluded)
    unknown = sorted(j for j in excluded if not 0 <= j < len(lib))
    if unknown:
        raise InputError(f"Reaction ids {unknown} are outside the library (0..{len(lib) - 1})")
    ids = [j for j in range(len(lib)) if j not in excluded]
    if not ids:
        raise InputError("Cannot exclude every reaction")
    return _fit_reactions(ts, lib, ids, options, smoothing)


def fit_decoupled(
    ts: TimeSeries,
    monomials: tp.Sequence[tp.Sequence[int]] | None = None,
    options: SolverOptions | None = None,
    smoothing: Smoothing | None = None,
) -> FitResult:
    options = options or SolverOptions("lsqr")
    source, deriv = _prepare(ts, smoothing)
    monomials = default_monomials(ts.dimension) if monomials is None else monomials
    design = decoupled_design_matrix(source, monomials)
    if not np.any(design.entries):
        raise DegenerateDataError("Design matrix is all zeros (data identically zero?)")

    solved = [
        run_solver(RegressionProblem(design.entries, deriv.values[:, i]), options)
        for i in range(ts.dimension)
    ]
    coefficients = np.array([s.x for s in solved])
    terms = [dict(zip(design.columns, row, strict=True)) for row in coefficients]
    residual = float(np.sqrt(sum(s.residual_norm**2 for s in solved)))
    result = FitResult(
        layout=DECOUPLED,
        model=PolynomialODE.from_terms(ts.dimension, terms),
        residual_norm=residual,
        solver_results=solved,
        coefficients=coefficients,
        monomials=design.columns,
    )
    echo.info(f"Decoupled {options.method} fit over {len(design.columns)} monomials, residual {residual:.4g}")
    return _score(result, ts)


@dataclasses.dataclass(eq=False)
class SweepEntry:
    excluded: frozenset[int]
    fit: FitResult
    equilibrium: np.ndarray | None = None
    equilibrium_error: str | None = None


def _sweep_one(
    ts: TimeSeries,
    lib: ReactionLibrary,
    excluded: frozenset[int],
    options: SolverOptions | None,
    horizon: float,
) -> SweepEntry:
    fit = prune_and_refit(ts, lib, excluded, options)
    entry = SweepEntry(excluded, fit)
    if fit.instability is None:
        try:
            entry.equilibrium = find_equilibrium(fit.model, ts.values[0], horizon=horizon)
        except (NonConvergenceError, InstabilityError) as e:
            entry.equilibrium_error = e.message
    return entry


def sweep_exclusions(
    ts: TimeSeries,
    lib: ReactionLibrary,
    exclusion_sets: tp.Sequence[tp.Iterable[int]],
    options: SolverOptions | None = None,
    workers: int = 1,
    horizon: float = 1e4,
) -> list[SweepEntry]:
    """Refit once per exclusion set (0-based ids); results keep the input order."""
    sets = [frozenset(s) for s in exclusion_sets]
    if workers <= 1:
        return [_sweep_one(ts, lib, s, options, horizon) for s in sets]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: _sweep_one(ts, lib, s, options, horizon), sets))
