import dataclasses
import typing as tp

import numpy as np

from reaction_learn.helpers import DimensionError, InputError, as_finite_array


@dataclasses.dataclass(frozen=True, eq=False)
class TimeSeries:
    """Densities on the uniform grid ``t0, t0 + h, ..., t0 + (N - 1) h``.

    ``values`` has shape ``(N, d)``. A single-row series is allowed (an ABM run
    with zero steps); operations that need derivatives require ``N >= 3``.
    """

    t0: float
    h: float
    values: np.ndarray

    def __post_init__(self) -> None:
        values = as_finite_array(self.values, "time series values", ndim=2)
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise DimensionError(f"Time series needs at least one point and one component, got {values.shape}")
        if not (np.isfinite(self.h) and self.h > 0):
            raise InputError(f"Time step must be positive, got {self.h}")
        if not np.isfinite(self.t0):
            raise InputError(f"Start time must be finite, got {self.t0}")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "h", float(self.h))

    @property
    def n_points(self) -> int:
        return self.values.shape[0]

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.n_points)

    @property
    def t_end(self) -> float:
        return self.t0 + self.h * (self.n_points - 1)

    def same_grid(self, other: "TimeSeries") -> bool:
        return (
            self.values.shape == other.values.shape
            and np.isclose(self.t0, other.t0, rtol=0, atol=1e-12)
            and np.isclose(self.h, other.h, rtol=1e-12, atol=0)
        )

    def require_points(self, n: int, what: str) -> None:
        if self.n_points < n:
            raise InputError(f"{what} needs at least {n} time points, got {self.n_points}")

    def allclose(self, other: "TimeSeries", atol: float = 1e-12) -> bool:
        return self.same_grid(other) and bool(np.allclose(self.values, other.values, rtol=0, atol=atol))

    def with_values(self, values: np.ndarray) -> "TimeSeries":
        return TimeSeries(self.t0, self.h, values)


@dataclasses.dataclass(frozen=True)
class Ensemble:
    runs: tuple[TimeSeries, ...]

    def __post_init__(self) -> None:
        runs = tuple(self.runs)
        if not runs:
            raise InputError("Ensemble needs at least one run")
        first = runs[0]
        for n, run in enumerate(runs[1:], start=1):
            if not first.same_grid(run):
                raise InputError(
                    f"Run {n} grid (t0={run.t0}, h={run.h}, shape={run.values.shape}) differs "
                    f"from run 0 (t0={first.t0}, h={first.h}, shape={first.values.shape})"
                )
        object.__setattr__(self, "runs", runs)

    def __len__(self) -> int:
        return len(self.runs)

    def __iter__(self) -> tp.Iterator[TimeSeries]:
        return iter(self.runs)

    def stacked(self) -> np.ndarray:
        """(runs, N, d) array"""
        return np.stack([run.values for run in self.runs])

    def mean(self) -> TimeSeries:
        first = self.runs[0]
        return TimeSeries(first.t0, first.h, self.stacked().mean(axis=0))

    def standard_error(self) -> np.ndarray:
        if len(self.runs) < 2:
            return np.zeros_like(self.runs[0].values)
        return self.stacked().std(axis=0, ddof=1) / np.sqrt(len(self.runs))
