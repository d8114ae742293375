"""Per-step tridiagonal systems of the implicit scheme and their pivoted LU solve."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from stefan_control.config.solver_config import SolverConfig, default_config
from stefan_control.errors import StepSolveError
from stefan_control.numerics.grid import SpatialGrid
from stefan_control.numerics.steklov import AveragedCoefficients
from stefan_control.problem.problem_data import ProblemData
from stefan_control.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class TriSystem:
    """Rows 0..m of one time step; lower[0] and upper[m] are zero padding."""

    k: int
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    rhs: np.ndarray

    @property
    def size(self) -> int:
        return self.diag.size

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diag * x
        y[1:] += self.lower[1:] * x[:-1]
        y[:-1] += self.upper[:-1] * x[1:]
        return y

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.lower) + np.abs(self.diag) + np.abs(self.upper)))

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.lower[1:], -1) + np.diag(self.upper[:-1], 1)


def assemble_step(grid: SpatialGrid, avg: AveragedCoefficients, k: int, u_prev: np.ndarray, tau: float) -> TriSystem:
    """Rows of step k up to the front node m; u_prev is the extended layer k-1."""
    m = grid.boundary_index(k)
    h = grid.widths
    a, b, c, f = avg.a[k], avg.b[k], avg.c[k], avg.f[k]

    lower = np.zeros(m + 1)
    diag = np.zeros(m + 1)
    upper = np.zeros(m + 1)
    rhs = np.zeros(m + 1)

    h0 = h[0]
    diag[0] = a[0] + h0 * b[0] - h0**2 * c[0] + h0**2 / tau
    upper[0] = -(a[0] + h0 * b[0])
    rhs[0] = h0**2 / tau * u_prev[0] - h0**2 * f[0] - h0 * avg.g[k]

    i = np.arange(1, m)
    hi, him = h[i], h[i - 1]
    mass = hi**2 * him
    lower[i] = -a[i - 1] * hi
    diag[i] = a[i - 1] * hi + a[i] * him + b[i] * hi * him - c[i] * mass + mass / tau
    upper[i] = -(a[i] * him + b[i] * hi * him)
    rhs[i] = -mass * f[i] + mass / tau * u_prev[i]

    lower[m] = -a[m - 1]
    diag[m] = a[m - 1]
    rhs[m] = -h[m - 1] * (avg.gamma_ds[k] - avg.chi[k])
    return TriSystem(k=k, lower=lower, diag=diag, upper=upper, rhs=rhs)


def solve_step(sys: TriSystem, config: SolverConfig = default_config) -> np.ndarray:
    """LAPACK gttrf/gttrs solve with pivot and residual checks."""
    dl, d, du, du2, ipiv, info = lapack.dgttrf(sys.lower[1:], sys.diag, sys.upper[:-1])
    if info != 0:
        raise StepSolveError(sys.k, f"singular tridiagonal system (dgttrf info={info})")
    if np.min(np.abs(d)) < config.pivot_floor:
        raise StepSolveError(sys.k, "pivot below floor")
    x, info = lapack.dgttrs(dl, d, du, du2, ipiv, sys.rhs)
    x = np.asarray(x, dtype=float).reshape(-1)
    if info != 0 or not np.all(np.isfinite(x)):
        raise StepSolveError(sys.k, f"back substitution failed (dgttrs info={info})")

    residual = np.max(np.abs(sys.matvec(x) - sys.rhs))
    bound = config.residual_tol * (sys.norm_inf() * np.max(np.abs(x)) + np.max(np.abs(sys.rhs)))
    if residual > bound:
        raise StepSolveError(sys.k, f"residual {residual:.3e} exceeds {bound:.3e}")
    return x


def tau_zero(M: float, a0: float) -> float:
    """Step bound 1 / (M^2 / (2 a0) + M) below which every step system is uniquely solvable."""
    if M <= 0:
        return float("inf")
    return 1.0 / (M * M / (2.0 * a0) + M)


def stability_threshold(problem: ProblemData, config: SolverConfig = default_config) -> float:
    return tau_zero(problem.coefficient_bound(config.lattice_points), problem.a0)


def check_step_size(problem: ProblemData, tau: float, config: SolverConfig = default_config) -> float:
    """Return tau_0, warning when tau does not stay below it."""
    threshold = stability_threshold(problem, config)
    if tau >= threshold:
        logger.warning(f"Time step tau={tau:.6g} is not below tau0={threshold:.6g}; solvability is not guaranteed")
    return threshold
