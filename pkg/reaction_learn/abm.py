"""Lattice agent-based model of a tumour invading healthy tissue.

Sites are empty, ECM obstacles, healthy cells or tumour cells. The outer ring of
sites carries a fence that tumour cells on or next to it break down; a tumour
cell on a broken fence site leaves the domain.

Each step visits the cells alive at its start in random order. A visited cell
dies, divides (into an empty Moore neighbour, else by displacing a weaker
neighbour) or moves (a short step, or a jump whose likelihood falls with
stickiness).
"""

import concurrent.futures
import copy
import dataclasses
import functools
import importlib.resources
import json
import math
import typing as tp
from pathlib import Path

import numpy as np

from reaction_learn.echo import echo, log
from reaction_learn.helpers import InputError
from reaction_learn.series import Ensemble, TimeSeries
from reaction_learn.utils import config_hash, read_json

EMPTY, OBSTACLE, HEALTHY, TUMOUR = 0, 1, 2, 3
KIND_NAMES = {HEALTHY: "healthy", TUMOUR: "tumour"}
DEFAULTS_RESOURCE = "abm_defaults.json"
SEED_LIMIT = 2**64


@functools.cache
def _shipped_defaults() -> dict[str, tp.Any]:
    resource = importlib.resources.files("reaction_learn") / "data" / DEFAULTS_RESOURCE
    return json.loads(resource.read_text())


@dataclasses.dataclass(frozen=True)
class AbmConfig:
    lattice_size: int
    healthy_density: float
    tumour_density: float
    ecm_density: float
    ecm_breakdown_prob: float
    death_prob: tuple[float, float]  # (healthy, tumour), per step
    movement_prob: float
    division_age: float
    competition_rate: float
    stickiness: float
    jump_radius: int
    max_healthy_divisions: int
    dt: float
    steps: int
    seed: int
    initial_tumour_cells: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "death_prob", tuple(float(p) for p in self.death_prob))
        _check(len(self.death_prob) == 2, "death_prob must be a (healthy, tumour) pair")
        _check(self.lattice_size >= 1, f"lattice_size must be >= 1, got {self.lattice_size}")
        for name in ("healthy_density", "tumour_density", "ecm_density", "ecm_breakdown_prob", "movement_prob"):
            value = getattr(self, name)
            _check(0 <= value <= 1, f"{name} must lie in [0, 1], got {value}")
        for p in self.death_prob:
            _check(0 <= p <= 1, f"death_prob entries must lie in [0, 1], got {p}")
        density = self.healthy_density + self.tumour_density + self.ecm_density
        _check(density <= 1 + 1e-12, f"Densities sum to {density} > 1")
        _check(self.division_age > 0, f"division_age must be positive, got {self.division_age}")
        _check(self.competition_rate >= 0, f"competition_rate must be >= 0, got {self.competition_rate}")
        _check(self.stickiness >= 0, f"stickiness must be >= 0, got {self.stickiness}")
        _check(self.jump_radius >= 1, f"jump_radius must be >= 1, got {self.jump_radius}")
        # a wider box reaches no further sites
        object.__setattr__(self, "jump_radius", min(self.jump_radius, max(1, self.lattice_size - 1)))
        _check(self.max_healthy_divisions >= 1, f"max_healthy_divisions must be >= 1, got {self.max_healthy_divisions}")
        _check(math.isfinite(self.dt) and self.dt > 0, f"dt must be positive, got {self.dt}")
        _check(self.steps >= 0, f"steps must be >= 0, got {self.steps}")
        _check(0 <= self.seed < SEED_LIMIT, f"seed must be a 64-bit unsigned integer, got {self.seed}")
        _check(
            self.initial_tumour_cells is None or self.initial_tumour_cells >= 1,
            f"initial_tumour_cells must be >= 1, got {self.initial_tumour_cells}",
        )

    @classmethod
    def from_dict(cls, data: dict[str, tp.Any]) -> "AbmConfig":
        """Merge ``data`` over the shipped defaults; unknown keys are rejected"""
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - fields - {"version"})
        if unknown:
            raise InputError(f"Unknown ABM config keys: {', '.join(unknown)}")
        merged = {k: v for k, v in _shipped_defaults().items() if k != "version"}
        merged.update({k: v for k, v in data.items() if k != "version"})
        try:
            return cls(**merged)
        except TypeError as e:
            raise InputError(f"Malformed ABM config: {e}") from e

    @classmethod
    def default(cls) -> "AbmConfig":
        return cls.from_dict({})

    @classmethod
    def load(cls, path: Path) -> "AbmConfig":
        echo.debug(f"Loading ABM configuration from {path}")
        data = read_json(path)
        if not isinstance(data, dict):
            raise InputError(f"ABM config `{path}` must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, tp.Any]:
        d = dataclasses.asdict(self)
        d["death_prob"] = list(self.death_prob)
        d["version"] = _shipped_defaults()["version"]
        return d

    def config_hash(self) -> str:
        return config_hash(self.to_dict())

    def with_seed(self, seed: int) -> "AbmConfig":
        return dataclasses.replace(self, seed=seed)

    def strength(self, kind: int) -> float:
        return 1.0 + self.competition_rate if kind == TUMOUR else 1.0

    def death(self, kind: int) -> float:
        return self.death_prob[1] if kind == TUMOUR else self.death_prob[0]


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise InputError(message)


@dataclasses.dataclass(frozen=True)
class Cell:
    kind: int
    division_count: int
    age: float
    strength: float

    @property
    def name(self) -> str:
        return KIND_NAMES[self.kind]


@dataclasses.dataclass(eq=False)
class LatticeState:
    kind: np.ndarray  # (L, L) site codes
    age: np.ndarray
    divisions: np.ndarray
    ident: np.ndarray  # -1 on empty/obstacle sites
    fence: np.ndarray  # True on intact boundary sites
    time: float
    next_id: int
    rng: np.random.Generator

    @property
    def lattice_size(self) -> int:
        return self.kind.shape[0]

    def counts(self) -> tuple[int, int, int]:
        """(tumour, healthy, obstacle) site counts"""
        return (
            int(np.count_nonzero(self.kind == TUMOUR)),
            int(np.count_nonzero(self.kind == HEALTHY)),
            int(np.count_nonzero(self.kind == OBSTACLE)),
        )

    def densities(self) -> tuple[float, float]:
        tumour, healthy, _ = self.counts()
        area = self.lattice_size**2
        return tumour / area, healthy / area

    def cell_at(self, i: int, j: int, cfg: AbmConfig) -> Cell | None:
        kind = int(self.kind[i, j])
        if kind not in KIND_NAMES:
            return None
        return Cell(kind, int(self.divisions[i, j]), float(self.age[i, j]), cfg.strength(kind))

    def copy(self) -> "LatticeState":
        return LatticeState(
            kind=self.kind.copy(),
            age=self.age.copy(),
            divisions=self.divisions.copy(),
            ident=self.ident.copy(),
            fence=self.fence.copy(),
            time=self.time,
            next_id=self.next_id,
            rng=copy.deepcopy(self.rng),
        )


def boundary_mask(L: int) -> np.ndarray:
    mask = np.zeros((L, L), dtype=bool)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
    return mask


@functools.cache
def _moore(L: int) -> tuple[tuple[int, ...], ...]:
    """Flat indices of the Moore neighbours of every site"""
    return tuple(
        tuple(
            a * L + b
            for a in range(max(0, i - 1), min(L, i + 2))
            for b in range(max(0, j - 1), min(L, j + 2))
            if (a, b) != (i, j)
        )
        for i in range(L)
        for j in range(L)
    )


@functools.cache
def _boundary(L: int) -> tuple[bool, ...]:
    return tuple(boundary_mask(L).ravel().tolist())


@functools.cache
def _fence_reach(L: int) -> tuple[bool, ...]:
    """Sites on the boundary ring or next to it"""
    i, j = np.indices((L, L))
    near = (np.minimum(i, L - 1 - i) <= 1) | (np.minimum(j, L - 1 - j) <= 1)
    return tuple(near.ravel().tolist())


def _round_count(density: float, area: int) -> int:
    return int(math.floor(density * area + 0.5))


def init_state(cfg: AbmConfig) -> LatticeState:
    L = cfg.lattice_size
    area = L * L
    n_ecm = _round_count(cfg.ecm_density, area)
    n_healthy = _round_count(cfg.healthy_density, area)
    if cfg.initial_tumour_cells is not None:
        n_tumour = cfg.initial_tumour_cells
    else:
        n_tumour = max(1, _round_count(cfg.tumour_density, area))
    if n_ecm + n_healthy + n_tumour > area:
        raise InputError(
            f"{n_ecm} obstacles + {n_healthy} healthy + {n_tumour} tumour cells "
            f"do not fit on {area} sites"
        )

    rng = np.random.default_rng(cfg.seed)
    sites = rng.permutation(area)
    kind = np.full(area, EMPTY, dtype=np.int8)
    kind[sites[:n_ecm]] = OBSTACLE
    cells = sites[n_ecm : n_ecm + n_healthy + n_tumour]
    kind[cells[:n_healthy]] = HEALTHY
    kind[cells[n_healthy:]] = TUMOUR

    age = np.zeros(area)
    if math.isfinite(cfg.division_age):
        age[cells] = rng.uniform(0, cfg.division_age, size=cells.size)
    ident = np.full(area, -1, dtype=np.int64)
    ident[cells] = np.arange(cells.size)

    echo.debug(f"ABM init: {n_ecm} obstacles, {n_healthy} healthy, {n_tumour} tumour on {L}x{L}")
    return LatticeState(
        kind=kind.reshape(L, L),
        age=age.reshape(L, L),
        divisions=np.zeros((L, L), dtype=np.int64),
        ident=ident.reshape(L, L),
        fence=boundary_mask(L),
        time=0.0,
        next_id=int(cells.size),
        rng=rng,
    )


_N_UNIFORMS = 7  # per visited cell: death, compete, move, jump, pick, jump row, jump column
_SCAN_LIMIT = 64  # larger jump boxes are sampled before they are scanned
_JUMP_RETRIES = 8


class _Sweep:
    """Flat lattice advanced in place, one ``dt`` per ``advance``.

    Ages are stored as birth times so they move with the clock, and ``free``
    counts the empty Moore neighbours of each site.
    """

    def __init__(self, state: LatticeState, cfg: AbmConfig) -> None:
        self.cfg = cfg
        self.L = L = state.lattice_size
        self.rng = state.rng
        self.time = state.time
        self.next_id = state.next_id
        self.kind = state.kind.ravel().tolist()
        self.born = (state.time - state.age).ravel().tolist()
        self.divisions = state.divisions.ravel().tolist()
        self.ident = state.ident.ravel().tolist()
        self.fence = state.fence.ravel().tolist()
        self.moore = _moore(L)
        self.boundary = _boundary(L)
        self.fence_reach = _fence_reach(L)
        self.free = [sum(self.kind[t] == EMPTY for t in nb) for nb in self.moore]
        self.population = {HEALTHY: self.kind.count(HEALTHY), TUMOUR: self.kind.count(TUMOUR)}

    def densities(self) -> tuple[float, float]:
        area = self.L * self.L
        return self.population[TUMOUR] / area, self.population[HEALTHY] / area

    def _place(self, t: int, k: int, born: float, divisions: int, ident: int) -> None:
        self.kind[t] = k
        self.born[t] = born
        self.divisions[t] = divisions
        self.ident[t] = ident
        self.population[k] += 1
        for n in self.moore[t]:
            self.free[n] -= 1

    def _vacate(self, s: int) -> None:
        self.population[self.kind[s]] -= 1
        self.kind[s] = EMPTY
        self.divisions[s] = 0
        self.ident[s] = -1
        for n in self.moore[s]:
            self.free[n] += 1

    def _empty_neighbour(self, s: int, u: float) -> int:
        if not self.free[s]:
            return -1
        kind = self.kind
        empties = [t for t in self.moore[s] if kind[t] == EMPTY]
        return empties[int(u * len(empties))]

    def _jump_target(self, s: int, u_row: float, u_col: float, u_pick: float) -> int:
        """Uniformly chosen empty site within ``jump_radius`` of ``s``, or -1.

        Draws from the clipped box and keeps the first empty hit; a crowded box
        falls back to scanning it.
        """
        L, r, kind = self.L, self.cfg.jump_radius, self.kind
        i, j = divmod(s, L)
        a0, b0 = max(0, i - r), max(0, j - r)
        rows, cols = min(L, i + r + 1) - a0, min(L, j + r + 1) - b0
        t = (a0 + int(u_row * rows)) * L + b0 + int(u_col * cols)
        if kind[t] == EMPTY:
            return t
        if rows * cols > _SCAN_LIMIT:
            for u, v in self.rng.random((_JUMP_RETRIES, 2)).tolist():
                t = (a0 + int(u * rows)) * L + b0 + int(v * cols)
                if kind[t] == EMPTY:
                    return t
        empties = [
            a * L + b
            for a in range(a0, a0 + rows)
            for b in range(b0, b0 + cols)
            if kind[a * L + b] == EMPTY
        ]
        return empties[int(u_pick * len(empties))] if empties else -1

    def _attack_fence(self, s: int) -> None:
        """Break intact fence sites around a tumour cell at ``s``; a broken site under it lets it escape"""
        fence = self.fence
        intact = [f for f in (s, *self.moore[s]) if fence[f]]
        if intact:
            draws = self.rng.random(len(intact)).tolist()
            for f, u in zip(intact, draws, strict=True):
                if u < self.cfg.ecm_breakdown_prob:
                    fence[f] = False
        if self.boundary[s] and not fence[s]:
            self._vacate(s)

    def advance(self) -> None:
        cfg = self.cfg
        kind, born, divisions, ident, moore = self.kind, self.born, self.divisions, self.ident, self.moore
        time = self.time

        occupied = np.array([s for s, k in enumerate(kind) if k >= HEALTHY], dtype=np.int64)
        order = self.rng.permutation(occupied).tolist()
        snapshot = [ident[s] for s in order]
        uniforms = self.rng.random((_N_UNIFORMS, len(order))).tolist()

        strength = {HEALTHY: cfg.strength(HEALTHY), TUMOUR: cfg.strength(TUMOUR)}
        death = {HEALTHY: cfg.death(HEALTHY), TUMOUR: cfg.death(TUMOUR)}
        displace_prob = min(1.0, cfg.competition_rate)
        jump_prob = 1.0 / (1.0 + cfg.stickiness)
        K = cfg.max_healthy_divisions

        for s, cell_id, u_death, u_compete, u_move, u_jump, u_pick, u_row, u_col in zip(
            order, snapshot, *uniforms, strict=True
        ):
            if ident[s] != cell_id:
                continue  # died or was displaced earlier in this sweep
            k = kind[s]
            if u_death < death[k]:
                self._vacate(s)
                continue

            divided = False
            if time - born[s] >= cfg.division_age and (k == TUMOUR or divisions[s] < K):
                t = self._empty_neighbour(s, u_pick)
                if t < 0 and u_compete < displace_prob:
                    weaker = [n for n in moore[s] if kind[n] >= HEALTHY and strength[kind[n]] < strength[k]]
                    if weaker:
                        t = weaker[int(u_pick * len(weaker))]
                        self._vacate(t)
                if t >= 0:
                    divisions[s] += 1
                    born[s] = time
                    self._place(t, k, time, divisions[s], self.next_id)
                    self.next_id += 1
                    divided = True

            if not divided and u_move < cfg.movement_prob:
                if u_jump < jump_prob:
                    t = self._jump_target(s, u_row, u_col, u_pick)
                else:
                    t = self._empty_neighbour(s, u_pick)
                if t >= 0:
                    self._place(t, k, born[s], divisions[s], ident[s])
                    self._vacate(s)
                    s = t

            if k == TUMOUR and self.fence_reach[s]:
                self._attack_fence(s)

        self.time = time + cfg.dt

    def to_state(self) -> LatticeState:
        shape = (self.L, self.L)
        kind = np.array(self.kind, dtype=np.int8).reshape(shape)
        age = self.time - np.array(self.born).reshape(shape)
        age[kind < HEALTHY] = 0.0
        return LatticeState(
            kind=kind,
            age=age,
            divisions=np.array(self.divisions, dtype=np.int64).reshape(shape),
            ident=np.array(self.ident, dtype=np.int64).reshape(shape),
            fence=np.array(self.fence, dtype=bool).reshape(shape),
            time=self.time,
            next_id=self.next_id,
            rng=self.rng,
        )


def step(state: LatticeState, cfg: AbmConfig) -> LatticeState:
    """Advance by one ``dt``; returns a new state and leaves ``state`` untouched."""
    sweep = _Sweep(state.copy(), cfg)
    sweep.advance()
    return sweep.to_state()


def run(cfg: AbmConfig) -> TimeSeries:
    """(tumour, healthy) densities at t = 0, dt, ..., steps * dt"""
    sweep = _Sweep(init_state(cfg), cfg)
    values = np.empty((cfg.steps + 1, 2))
    values[0] = sweep.densities()
    for n in range(1, cfg.steps + 1):
        sweep.advance()
        values[n] = sweep.densities()
    echo.debug(f"ABM run seed={cfg.seed} finished: tumour={values[-1, 0]:.4f} healthy={values[-1, 1]:.4f}")
    return TimeSeries(0.0, cfg.dt, values)


@log("Running ABM ensemble")
def run_ensemble(cfg: AbmConfig, runs: int, base_seed: int, workers: int = 1) -> Ensemble:
    """``runs`` independent runs seeded base_seed, base_seed + 1, ..."""
    if runs < 1:
        raise InputError(f"Need at least one run, got {runs}")
    configs = [cfg.with_seed(base_seed + i) for i in range(runs)]
    if workers <= 1:
        series = [run(c) for c in configs]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            series = list(pool.map(run, configs))
    echo.info(f"ABM ensemble: {runs} runs, seeds {base_seed}..{base_seed + runs - 1}")
    return Ensemble(tuple(series))
