import concurrent.futures
import dataclasses
import typing as tp

import numpy as np

from reaction_learn.echo import echo, log
from reaction_learn.helpers import InputError, check_dimension
from reaction_learn.reactions import RateVector, ReactionLibrary, as_rates
from reaction_learn.series import Ensemble, TimeSeries

UNIFORM_BATCH = 4096

_UNI, _HOMO, _HETERO = 0, 1, 2


@dataclasses.dataclass(frozen=True)
class SsaConfig:
    initial_counts: tuple[int, ...]
    t_end: float
    h: float
    volume: float = 1.0
    t0: float = 0.0
    n_points: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        counts = tuple(int(c) for c in self.initial_counts)
        if not counts or any(c < 0 for c in counts):
            raise InputError(f"Initial counts must be non-negative integers, got {self.initial_counts}")
        object.__setattr__(self, "initial_counts", counts)
        if not self.volume > 0:
            raise InputError(f"Volume must be positive, got {self.volume}")
        if not self.h > 0:
            raise InputError(f"Recording step must be positive, got {self.h}")
        if not self.t_end >= self.t0:
            raise InputError(f"t_end ({self.t_end}) is before t0 ({self.t0})")
        if self.n_points is not None:
            if self.n_points < 1:
                raise InputError(f"Need at least one recording point, got {self.n_points}")
            if self.n_points * self.h > self.t_end - self.t0 + self.h * (1 + 1e-9):
                raise InputError("Recording grid extends past t_end")

    @property
    def points(self) -> int:
        if self.n_points is not None:
            return self.n_points
        return int(np.floor((self.t_end - self.t0) / self.h + 1e-9)) + 1

    @property
    def grid(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.points)

    def with_seed(self, seed: int) -> "SsaConfig":
        return dataclasses.replace(self, seed=seed)


@dataclasses.dataclass(frozen=True)
class _CountKinetics:
    """Count propensities of the reactions with a positive rate"""

    stoich: np.ndarray  # (m, d)
    rates: np.ndarray
    first: np.ndarray
    second: np.ndarray
    kind: np.ndarray
    volume: float

    @classmethod
    def build(cls, lib: ReactionLibrary, K: RateVector, volume: float) -> "_CountKinetics":
        active = np.flatnonzero(K.values > 0)
        first, second, kind = [], [], []
        for j in active:
            reactants = lib[int(j)].reactants
            indices = reactants.indices()
            first.append(indices[0])
            second.append(indices[-1])
            if reactants.order == 1:
                kind.append(_UNI)
            elif reactants.is_homodimer:
                kind.append(_HOMO)
            else:
                kind.append(_HETERO)
        return cls(
            stoich=lib.stoichiometry[active],
            rates=K.values[active],
            first=np.array(first, dtype=np.int64),
            second=np.array(second, dtype=np.int64),
            kind=np.array(kind, dtype=np.int64),
            volume=volume,
        )

    def propensities(self, counts: np.ndarray) -> np.ndarray:
        n1 = counts[self.first].astype(float)
        n2 = counts[self.second].astype(float)
        factor = np.where(
            self.kind == _UNI,
            1.0,
            np.where(self.kind == _HOMO, (n1 - 1) / (2 * self.volume), n2 / self.volume),
        )
        return self.rates * n1 * factor


def gillespie(
    lib: ReactionLibrary, K: RateVector | tp.Sequence[float] | np.ndarray, cfg: SsaConfig
) -> TimeSeries:
    """Exact stochastic simulation, recorded as densities (count / volume).

    Grid values take the state just before the first event after each grid time.
    """
    rates = as_rates(lib, K)
    check_dimension(len(cfg.initial_counts), lib.dimension, "initial counts")
    kinetics = _CountKinetics.build(lib, rates, cfg.volume)
    rng = np.random.default_rng(cfg.seed)
    grid = cfg.grid
    values = np.empty((grid.shape[0], lib.dimension))

    counts = np.array(cfg.initial_counts, dtype=np.int64)
    t = cfg.t0
    recorded = 0
    uniforms = rng.random((UNIFORM_BATCH, 2))
    used = 0
    events = 0
    while recorded < grid.shape[0]:
        a = kinetics.propensities(counts) if kinetics.rates.size else np.zeros(0)
        total = float(a.sum())
        if total <= 0:
            break
        if used == UNIFORM_BATCH:
            uniforms = rng.random((UNIFORM_BATCH, 2))
            used = 0
        u_time, u_pick = uniforms[used]
        used += 1
        t_next = t - np.log1p(-u_time) / total
        while recorded < grid.shape[0] and grid[recorded] < t_next:
            values[recorded] = counts / cfg.volume
            recorded += 1
        if t_next > cfg.t_end:
            break
        j = int(np.searchsorted(np.cumsum(a), u_pick * total, side="right"))
        counts += kinetics.stoich[min(j, a.shape[0] - 1)]
        t = t_next
        events += 1
    values[recorded:] = counts / cfg.volume
    echo.debug(f"SSA path seed={cfg.seed}: {events} events")
    return TimeSeries(cfg.t0, cfg.h, values)


def _path(args: tuple[ReactionLibrary, RateVector, SsaConfig]) -> TimeSeries:
    return gillespie(*args)


@log("Simulating SSA paths")
def simulate_paths(
    lib: ReactionLibrary,
    K: RateVector | tp.Sequence[float] | np.ndarray,
    cfg: SsaConfig,
    paths: int,
    workers: int = 1,
) -> Ensemble:
    """``paths`` independent runs with seeds cfg.seed, cfg.seed + 1, ..."""
    if paths < 1:
        raise InputError(f"Need at least one path, got {paths}")
    rates = as_rates(lib, K)
    jobs = [(lib, rates, cfg.with_seed(cfg.seed + i)) for i in range(paths)]
    if workers <= 1:
        runs = [_path(job) for job in jobs]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_path, jobs, chunksize=max(1, paths // (4 * workers))))
    return Ensemble(tuple(runs))
