import dataclasses
import typing as tp

import numpy as np

import reaction_learn.config as config
from reaction_learn.echo import echo
from reaction_learn.helpers import (
    InputError,
    InstabilityError,
    NonConvergenceError,
    as_finite_array,
    check_dimension,
)
from reaction_learn.reactions import PolynomialODE
from reaction_learn.series import TimeSeries


@dataclasses.dataclass(frozen=True)
class IntegrationConfig:
    t_end: float = config.GRID_T_END
    h: float = config.GRID_STEP
    blowup_bound: float = config.BLOWUP_BOUND
    t0: float = 0.0

    def __post_init__(self) -> None:
        if not self.h > 0:
            raise InputError(f"Step size must be positive, got {self.h}")
        if not self.t_end > self.t0:
            raise InputError(f"t_end ({self.t_end}) must exceed t0 ({self.t0})")
        if self.h > self.t_end - self.t0:
            raise InputError(f"Step size {self.h} exceeds the interval length {self.t_end - self.t0}")
        if not self.blowup_bound > 0:
            raise InputError(f"Blow-up bound must be positive, got {self.blowup_bound}")

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t0) / self.h))

    @classmethod
    def for_series(cls, ts: TimeSeries, blowup_bound: float = config.BLOWUP_BOUND) -> "IntegrationConfig":
        """Grid of an existing series; needs at least two points."""
        ts.require_points(2, "Integration grid")
        return cls(t_end=ts.t_end, h=ts.h, blowup_bound=blowup_bound, t0=ts.t0)


def eval_rhs(model: PolynomialODE, y: tp.Sequence[float] | np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    check_dimension(y.shape[0] if y.ndim == 1 else -1, model.dimension, "state")
    return model.evaluate(y)


def rk4_step(model: PolynomialODE, y: np.ndarray, h: float) -> np.ndarray:
    k1 = model.evaluate(y)
    k2 = model.evaluate(y + 0.5 * h * k1)
    k3 = model.evaluate(y + 0.5 * h * k2)
    k4 = model.evaluate(y + h * k3)
    return y + h * (k1 + 2 * (k2 + k3) + k4) / 6


def _check_bounded(y: np.ndarray, t: float, bound: float) -> None:
    if not np.all(np.isfinite(y)) or np.any(np.abs(y) > bound):
        raise InstabilityError(f"Integration blew up at t = {t:.6g} (|y| > {bound:g})", time=t)


def integrate_rk4(
    model: PolynomialODE,
    y0: tp.Sequence[float] | np.ndarray,
    cfg: IntegrationConfig | None = None,
) -> TimeSeries:
    """Classical RK4 on ``t0, t0 + h, ..., t_end``; values are never clamped."""
    cfg = cfg or IntegrationConfig()
    y = as_finite_array(y0, "initial state", ndim=1)
    check_dimension(y.shape[0], model.dimension, "initial state")
    _check_bounded(y, cfg.t0, cfg.blowup_bound)

    values = np.empty((cfg.n_steps + 1, model.dimension))
    values[0] = y
    for n in range(cfg.n_steps):
        y = rk4_step(model, y, cfg.h)
        _check_bounded(y, cfg.t0 + (n + 1) * cfg.h, cfg.blowup_bound)
        values[n + 1] = y
    echo.debug(f"Integrated {cfg.n_steps} RK4 steps to t = {cfg.t_end:.6g}")
    return TimeSeries(cfg.t0, cfg.h, values)


def has_negative_transient(ts: TimeSeries) -> bool:
    return bool(np.any(ts.values < 0))


def find_equilibrium(
    model: PolynomialODE,
    y0: tp.Sequence[float] | np.ndarray,
    horizon: float = 1e4,
    tol: float = 1e-8,
    h: float = config.EQUILIBRIUM_STEP,
    blowup_bound: float = config.BLOWUP_BOUND,
) -> np.ndarray:
    """Integrate until ``||rhs||_inf < tol``; raises if the horizon runs out first."""
    if not (horizon > 0 and tol > 0 and h > 0):
        raise InputError(f"horizon, tol and h must be positive, got {horizon}, {tol}, {h}")
    y = as_finite_array(y0, "initial state", ndim=1)
    check_dimension(y.shape[0], model.dimension, "initial state")
    n_steps = int(np.ceil(horizon / h))
    for n in range(n_steps + 1):
        if float(np.max(np.abs(model.evaluate(y)))) < tol:
            echo.debug(f"Equilibrium {y} reached at t = {n * h:.6g}")
            return y
        if n == n_steps:
            break
        y = rk4_step(model, y, h)
        _check_bounded(y, (n + 1) * h, blowup_bound)
    raise NonConvergenceError(
        f"No equilibrium within horizon {horizon:g} (|rhs| = {np.max(np.abs(model.evaluate(y))):.3g})",
        state=y,
    )
