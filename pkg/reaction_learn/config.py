import os

__version__ = "0.1.0"


def _env_flag(name: str, default: bool = False) -> bool:
    value = os.getenv(name, str(default)).lower()
    return value in ["true", "1", "yes"]


# Typer
CONTEXT_SETTINGS = {"help_option_names": ["-h", "--help"]}

# Environment variables (diagnostics and output mode only)
DEBUG = _env_flag("DEBUG")
PRETTY_EXCEPTIONS = _env_flag("PRETTY_EXCEPTIONS", default=True)
RAISE_EXCEPTIONS = _env_flag("RAISE_EXCEPTIONS")
JSON_OUTPUT = _env_flag("JSON_OUTPUT")

# Runtime flags (set by CLI callback, can be overridden by env vars)
LOG_LEVEL: str | None = os.getenv("LOG_LEVEL")

# Solvers
NNLS_ENTER_TOL = 1e-12  # relative to ||A^T b||_inf
NNLS_MAXITER_FACTOR = 3  # x columns
LSQR_MAXITER_FACTOR = 2  # x max(rows, columns)
LSQR_TOL = 1e-10
LASSO_MAXITER = 10_000
LASSO_TOL = 1e-10
STLSQ_SWEEPS = 10
CONDITION_WARNING = 1e12
SINGULAR_PIVOT = 1e-12  # relative to the largest diagonal entry

# Integration
BLOWUP_BOUND = 1e6
GRID_STEP = 2 / 135
GRID_T_END = 80 / 3
GRID_STEPS = 1800
EQUILIBRIUM_STEP = 0.01
INITIAL_STATE = (0.001, 0.324)  # (tumour, healthy)

# IO
CSV_DIGITS = 17
WORKERS = 1
