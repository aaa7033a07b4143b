import contextlib
import hashlib
import io
import json
import os
import typing as tp
from pathlib import Path

import numpy as np

import reaction_learn.config as config
from reaction_learn.echo import echo
from reaction_learn.helpers import InputError, IOFailure
from reaction_learn.series import TimeSeries

GRID_RTOL = 1e-9


def resolve_path_pwd(path: Path) -> Path:
    """Resolve path with PWD (shell) if it's relative

    NB! PWD (shell) can be different from the script's directory"""
    path = path.expanduser()
    if path.is_absolute():
        return path
    pwd = Path(os.environ.get("PWD", Path.cwd()))
    return Path(os.path.normpath(pwd / path))


def ensure_dir(path: Path) -> Path:
    path = resolve_path_pwd(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IOFailure(f"Cannot create directory `{path}`: {e}") from e
    return path


def _write_text(path: Path, text: str) -> None:
    """Write via a sibling temp file so a failed write never leaves a partial file"""
    path = resolve_path_pwd(path)
    tmp = path.with_name(f".{path.name}.tmp")
    try:
        if not path.parent.exists():
            path.parent.mkdir(parents=True)
        tmp.write_text(text)
        tmp.replace(path)
    except OSError as e:
        with contextlib.suppress(OSError):
            tmp.unlink()
        raise IOFailure(f"Cannot write `{path}`: {e}") from e


def _read_text(path: Path) -> str:
    path = resolve_path_pwd(path)
    if not path.exists():
        raise InputError(f"File `{path}` does not exist")
    try:
        return path.read_text()
    except OSError as e:
        raise IOFailure(f"Cannot read `{path}`: {e}") from e


def write_json(path: Path, data: tp.Any) -> None:
    echo.debug(f"Writing JSON to {path}")
    _write_text(path, json.dumps(data, indent=2, ensure_ascii=False) + "\n")


def read_json(path: Path) -> tp.Any:
    echo.debug(f"Reading JSON from {path}")
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"Malformed JSON in `{path}`: {e}") from e


def canonical_json(data: tp.Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(data: tp.Any) -> str:
    """sha256 of the canonical JSON form"""
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()


def csv_header(d: int) -> list[str]:
    return ["t"] + [f"x{i + 1}" for i in range(d)]


def _accepted_headers(d: int) -> list[list[str]]:
    headers = [csv_header(d)]
    if d == 2:
        headers.append(["t", "x", "z"])
    if d == 1:
        headers.append(["t", "x"])
    return headers


def format_series(ts: TimeSeries) -> str:
    buffer = io.StringIO()
    table = np.column_stack([ts.times, ts.values])
    np.savetxt(
        buffer,
        table,
        fmt=f"%.{config.CSV_DIGITS}g",
        delimiter=",",
        header=",".join(csv_header(ts.dimension)),
        comments="",
    )
    return buffer.getvalue()


def write_series(ts: TimeSeries, path: Path) -> None:
    echo.debug(f"Writing {ts.n_points}x{ts.dimension} series to {path}")
    _write_text(path, format_series(ts))


def parse_series(text: str, source: str = "<string>") -> TimeSeries:
    lines = text.splitlines()
    if not lines:
        raise InputError(f"Empty CSV: {source}")
    header = [c.strip() for c in lines[0].split(",")]
    d = len(header) - 1
    if d < 1 or header not in _accepted_headers(d):
        raise InputError(f"Unexpected CSV header in {source}: {lines[0]!r}")
    try:
        table = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
    except ValueError as e:
        raise InputError(f"Malformed CSV {source}: {e}") from e
    if table.shape[0] == 0:
        raise InputError(f"CSV {source} has no data rows")
    if table.shape[1] != d + 1:
        raise InputError(f"CSV {source}: expected {d + 1} columns, got {table.shape[1]}")
    if not np.all(np.isfinite(table)):
        raise InputError(f"CSV {source} contains non-finite values")

    t = table[:, 0]
    n = t.shape[0]
    h = (t[-1] - t[0]) / (n - 1) if n > 1 else config.GRID_STEP
    if n > 1:
        if h <= 0:
            raise InputError(f"CSV {source}: time column must be increasing")
        grid = t[0] + h * np.arange(n)
        if not np.allclose(grid, t, rtol=GRID_RTOL, atol=GRID_RTOL * h):
            raise InputError(f"CSV {source}: time column is not a uniform grid")
    return TimeSeries(float(t[0]), float(h), table[:, 1:])


def read_series(path: Path) -> TimeSeries:
    echo.debug(f"Reading series from {path}")
    return parse_series(_read_text(path), source=str(path))


def format_float(value: float | None, digits: int = 4) -> str:
    if value is None:
        return "-"
    return f"{value:.{digits}e}" if value and abs(value) < 10 ** -digits else f"{value:.{digits}f}"


def parse_floats(text: str, what: str) -> tuple[float, ...]:
    """``"0.001,0.324"`` -> (0.001, 0.324)"""
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as e:
        raise InputError(f"Invalid {what}: {text!r}") from e
    if not values:
        raise InputError(f"Empty {what}")
    return values


def parse_ids(text: str, what: str = "reaction ids") -> list[int]:
    """``"12,6,3"`` -> [12, 6, 3]"""
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise InputError(f"Invalid {what}: {text!r}") from e
