"""Dense least-squares solvers for ``A x = b``.

All solvers return a :class:`SolverResult` whose ``residual_norm`` is recomputed
from the returned ``x``. Iteration caps and ill-conditioning are reported through
flags on the result; only a singular normal matrix raises.
"""

import dataclasses
import typing as tp

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

import reaction_learn.config as config
from reaction_learn.echo import echo
from reaction_learn.helpers import (
    DimensionError,
    InputError,
    SingularMatrixError,
    as_finite_array,
    input_error_if,
)

METHODS = ("nnls", "lsq", "ridge", "lsqr", "lasso", "stlsq")


@dataclasses.dataclass(frozen=True, eq=False)
class RegressionProblem:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        A = as_finite_array(self.A, "design matrix", ndim=2)
        b = as_finite_array(self.b, "right-hand side", ndim=1)
        if A.shape[0] < 1 or A.shape[1] < 1:
            raise DimensionError(f"Design matrix must be non-empty, got shape {A.shape}")
        if A.shape[0] != b.shape[0]:
            raise DimensionError(f"Design matrix has {A.shape[0]} rows, rhs has {b.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def rows(self) -> int:
        return self.A.shape[0]

    @property
    def columns(self) -> int:
        return self.A.shape[1]

    def columns_subset(self, mask: np.ndarray) -> "RegressionProblem":
        return RegressionProblem(self.A[:, mask], self.b)


@dataclasses.dataclass(eq=False)
class SolverResult:
    x: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    condition_warning: float | None = None
    method: str = ""
    warning: str | None = None
    objective_history: list[float] = dataclasses.field(default_factory=list)

    def summary(self) -> dict[str, tp.Any]:
        return {
            "method": self.method,
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "condition_warning": self.condition_warning,
            "warning": self.warning,
        }


def _residual_norm(p: RegressionProblem, x: np.ndarray) -> float:
    return float(np.linalg.norm(p.b - p.A @ x))


def _finish(p: RegressionProblem, x: np.ndarray, **kwargs: tp.Any) -> SolverResult:
    result = SolverResult(x=x, residual_norm=_residual_norm(p, x), **kwargs)
    echo.debug(
        f"{result.method}: residual={result.residual_norm:.6g} "
        f"iterations={result.iterations} converged={result.converged}"
    )
    if not result.converged:
        echo.warning(f"{result.method}: no convergence after {result.iterations} iterations")
    if result.condition_warning is not None:
        echo.warning(f"{result.method}: ill-conditioned system (estimate {result.condition_warning:.3g})")
    if result.warning:
        echo.warning(f"{result.method}: {result.warning}")
    return result


def _cholesky_solve(G: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``G x = rhs`` for symmetric positive definite ``G``.

    A pivot below ``SINGULAR_PIVOT * max(diag(G))`` raises with the column index.
    """
    n = G.shape[0]
    scale = float(np.max(np.diag(G), initial=0.0))
    L = np.zeros_like(G)
    for j in range(n):
        pivot = G[j, j] - L[j, :j] @ L[j, :j]
        if scale <= 0 or pivot <= config.SINGULAR_PIVOT * scale:
            raise SingularMatrixError(f"Normal matrix is singular at column {j}", column=j)
        L[j, j] = np.sqrt(pivot)
        L[j + 1 :, j] = (G[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    y = scipy.linalg.solve_triangular(L, rhs, lower=True)
    return scipy.linalg.solve_triangular(L.T, y, lower=False)


def solve_normal_equations(p: RegressionProblem) -> SolverResult:
    """x = (A^T A)^-1 A^T b"""
    x = _cholesky_solve(p.A.T @ p.A, p.A.T @ p.b)
    return _finish(p, x, iterations=0, converged=True, method="lsq")


def solve_ridge(p: RegressionProblem, k: float) -> SolverResult:
    """x = (A^T A + k I)^-1 A^T b"""
    input_error_if(not np.isfinite(k) or k < 0, f"Ridge parameter must be >= 0, got {k}")
    G = p.A.T @ p.A + k * np.eye(p.columns)
    x = _cholesky_solve(G, p.A.T @ p.b)
    return _finish(p, x, iterations=0, converged=True, method="ridge")


def solve_lsqr(
    p: RegressionProblem,
    max_iterations: int | None = None,
    tolerance: float = config.LSQR_TOL,
) -> SolverResult:
    if max_iterations is None:
        max_iterations = config.LSQR_MAXITER_FACTOR * max(p.rows, p.columns)
    input_error_if(max_iterations < 1, f"LSQR needs max_iterations >= 1, got {max_iterations}")
    x, istop, itn, *_ = scipy.sparse.linalg.lsqr(
        p.A, p.b, atol=tolerance, btol=tolerance, iter_lim=max_iterations
    )
    # istop 3/6: condition limit, 7: iteration limit
    converged = istop in (0, 1, 2, 4, 5)
    return _finish(p, np.asarray(x, dtype=float), iterations=int(itn), converged=converged, method="lsqr")


def soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0)


def lasso_objective(p: RegressionProblem, x: np.ndarray, lam: float) -> float:
    r = p.b - p.A @ x
    return float(r @ r + lam * np.abs(x).sum())


def solve_lasso(
    p: RegressionProblem,
    lam: float,
    max_iterations: int = config.LASSO_MAXITER,
    tolerance: float = config.LASSO_TOL,
) -> SolverResult:
    """Proximal gradient for ``||A x - b||^2 + lam ||x||_1`` with step ``1 / L``.

    ``L = 2 lambda_max(A^T A)`` is the Lipschitz constant of the smooth part, so
    for orthonormal ``A`` one step lands on ``soft(b, lam / 2)``.
    """
    input_error_if(not np.isfinite(lam) or lam < 0, f"Lasso lambda must be >= 0, got {lam}")
    input_error_if(max_iterations < 1, f"Lasso needs max_iterations >= 1, got {max_iterations}")
    G = p.A.T @ p.A
    Atb = p.A.T @ p.b
    max_eig = float(scipy.linalg.eigvalsh(G)[-1])
    x = np.zeros(p.columns)
    history = [lasso_objective(p, x, lam)]
    if max_eig <= 0:
        return _finish(p, x, iterations=0, converged=True, method="lasso", objective_history=history)

    step = 1.0 / (2 * max_eig)
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        gradient = 2 * (G @ x - Atb)
        x_new = soft_threshold(x - step * gradient, step * lam)
        history.append(lasso_objective(p, x_new, lam))
        delta = float(np.max(np.abs(x_new - x)))
        x = x_new
        if delta < tolerance:
            converged = True
            break
    return _finish(
        p, x, iterations=iterations, converged=converged, method="lasso", objective_history=history
    )


def solve_stlsq(
    p: RegressionProblem,
    ridge_k: float = 0.0,
    threshold: float = 0.0,
    max_sweeps: int = config.STLSQ_SWEEPS,
) -> SolverResult:
    """Ridge on the active columns, then drop every |x_i| < threshold; repeat."""
    input_error_if(not np.isfinite(threshold) or threshold < 0, f"Threshold must be >= 0, got {threshold}")
    input_error_if(max_sweeps < 1, f"STLSQ needs max_sweeps >= 1, got {max_sweeps}")
    active = np.ones(p.columns, dtype=bool)
    x = np.zeros(p.columns)
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        sub = solve_ridge(p.columns_subset(active), ridge_k)
        x = np.zeros(p.columns)
        x[active] = sub.x
        small = active & (np.abs(x) < threshold)
        if not small.any():
            converged = True
            break
        x[small] = 0.0
        active &= ~small
        if not active.any():
            converged = True
            break

    warning = None if active.any() else "every column pruned, returning x = 0"
    return _finish(p, x, iterations=sweeps, converged=converged, method="stlsq", warning=warning)


def _passive_solve(
    A: np.ndarray, b: np.ndarray, passive: np.ndarray
) -> tuple[np.ndarray, float]:
    """LS on the passive columns via QR; returns (full-length z, condition estimate)."""
    z = np.zeros(A.shape[1])
    cols = np.flatnonzero(passive)
    if cols.size == 0:
        return z, 0.0
    Ap = A[:, cols]
    if cols.size > A.shape[0]:
        z[cols] = scipy.linalg.lstsq(Ap, b)[0]
        return z, np.inf
    Q, R = scipy.linalg.qr(Ap, mode="economic")
    diag = np.abs(np.diag(R))
    condition = float(diag.max() / diag.min()) if diag.min() > 0 else np.inf
    if condition > config.CONDITION_WARNING:
        z[cols] = scipy.linalg.lstsq(Ap, b)[0]
    else:
        z[cols] = scipy.linalg.solve_triangular(R, Q.T @ b)
    return z, condition


def solve_nnls(p: RegressionProblem, max_iterations: int | None = None) -> SolverResult:
    """Lawson-Hanson active set: min ||A x - b|| subject to x >= 0.

    Entering variable is the first index with the largest dual above
    ``NNLS_ENTER_TOL * ||A^T b||_inf``; variables off the passive set are exactly 0.
    """
    A, b = p.A, p.b
    n = p.columns
    cap = config.NNLS_MAXITER_FACTOR * n if max_iterations is None else max_iterations
    input_error_if(cap < 1, f"NNLS needs max_iterations >= 1, got {cap}")

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    rejected = np.zeros(n, dtype=bool)
    enter_tol = config.NNLS_ENTER_TOL * float(np.max(np.abs(A.T @ b)))
    condition = 0.0
    iterations = 0
    converged = False

    while True:
        w = A.T @ (b - A @ x)
        candidates = ~passive & ~rejected & (w > enter_tol)
        if not candidates.any():
            converged = True
            break
        if iterations >= cap:
            break
        iterations += 1
        j = int(np.argmax(np.where(candidates, w, -np.inf)))
        passive[j] = True
        z, condition = _passive_solve(A, b, passive)
        if z[j] <= 0:
            # rounding made the entrant useless; try the next candidate
            passive[j] = False
            rejected[j] = True
            continue
        rejected[:] = False

        while np.any(z[passive] <= 0):
            if iterations >= cap:
                break
            iterations += 1
            blocking = passive & (z <= 0)
            ratios = np.full(n, np.inf)
            ratios[blocking] = x[blocking] / (x[blocking] - z[blocking])
            i = int(np.argmin(ratios))
            x = x + ratios[i] * (z - x)
            x[i] = 0.0
            passive &= x > 0
            x[~passive] = 0.0
            z, condition = _passive_solve(A, b, passive)
        else:
            x = z
            continue
        # inner loop hit the cap: keep the feasible iterate
        break

    x = np.where(passive, np.maximum(x, 0.0), 0.0)
    warning = condition if passive.any() and condition > config.CONDITION_WARNING else None
    return _finish(
        p, x, iterations=iterations, converged=converged, condition_warning=warning, method="nnls"
    )


@dataclasses.dataclass(frozen=True)
class SolverOptions:
    method: str = "nnls"
    ridge_k: float = 0.0
    lam: float = 0.0
    threshold: float = 0.0
    max_iter: int | None = None
    tol: float | None = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise InputError(f"Unknown solver `{self.method}` (choose from {', '.join(METHODS)})")
        input_error_if(self.ridge_k < 0, f"--ridge-k must be >= 0, got {self.ridge_k}")
        input_error_if(self.lam < 0, f"--lambda must be >= 0, got {self.lam}")
        input_error_if(self.threshold < 0, f"--threshold must be >= 0, got {self.threshold}")
        input_error_if(
            self.max_iter is not None and self.max_iter < 1,
            f"--max-iter must be >= 1, got {self.max_iter}",
        )
        input_error_if(self.tol is not None and self.tol <= 0, f"--tol must be > 0, got {self.tol}")

    def to_dict(self) -> dict[str, tp.Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, tp.Any]) -> "SolverOptions":
        try:
            return cls(**data)
        except TypeError as e:
            raise InputError(f"Malformed solver options: {e}") from e


def run_solver(p: RegressionProblem, options: SolverOptions) -> SolverResult:
    match options.method:
        case "nnls":
            return solve_nnls(p, options.max_iter)
        case "lsq":
            return solve_normal_equations(p)
        case "ridge":
            return solve_ridge(p, options.ridge_k)
        case "lsqr":
            return solve_lsqr(p, options.max_iter, options.tol or config.LSQR_TOL)
        case "lasso":
            return solve_lasso(
                p, options.lam, options.max_iter or config.LASSO_MAXITER, options.tol or config.LASSO_TOL
            )
        case "stlsq":
            return solve_stlsq(p, options.ridge_k, options.threshold, options.max_iter or config.STLSQ_SWEEPS)
    raise InputError(f"Unknown solver `{options.method}`")
