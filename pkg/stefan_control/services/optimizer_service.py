"""Minimization of the discrete cost over the discrete control set."""

import math
import threading
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import minimize as scipy_minimize

from stefan_control.config.solver_config import SolverConfig, default_config
from stefan_control.errors import ExpressionDomainError, InfeasibleGeometryError, StepSolveError
from stefan_control.numerics.control import DiscreteControl, is_feasible_discrete, project_to_feasible
from stefan_control.numerics.functional import CostBreakdown, discrete_cost
from stefan_control.numerics.state import run_forward
from stefan_control.problem.problem_data import ProblemData
from stefan_control.utils.logger import get_logger

logger = get_logger(__name__)

ARMIJO_C1 = 1e-4
BACKTRACK_FACTOR = 0.5
MAX_BACKTRACKS = 50
BB_STEP_BOUNDS = (1e-10, 1e10)
FAILED = CostBreakdown(math.inf, math.inf, math.inf)


class OptOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    method: Literal["fd_gradient", "pattern_search", "lbfgs"] = "fd_gradient"
    max_iters: int = Field(default=100, ge=1)
    fd_step: float = Field(default=1e-6, gt=0)
    tol_cost: float = Field(default=1e-10, ge=0)
    abs_tol: float = Field(default=1e-20, ge=0)
    min_step: float = Field(default=1e-12, gt=0)
    seed: int = 0
    shuffle_polls: bool = False
    free: Literal["g", "s", "both"] = "both"
    max_workers: int = Field(default=1, ge=1)


@dataclass(frozen=True)
class FeasibleSet:
    delta: float
    l: float  # noqa: E741
    R: float

    def contains(self, v: DiscreteControl) -> bool:
        return is_feasible_discrete(v, self.delta, self.l, self.R)

    def project(self, v: DiscreteControl) -> DiscreteControl:
        return project_to_feasible(v, self.delta, self.l, self.R)


class ControlObjective(Protocol):
    feasible_set: FeasibleSet
    evals: int

    def __call__(self, v: DiscreteControl) -> CostBreakdown: ...


class ProblemObjective:
    """Discrete cost of a fresh forward solve; solver failures evaluate to +inf."""

    def __init__(self, problem: ProblemData, config: SolverConfig = default_config):
        self.problem = problem
        self.config = config
        self.feasible_set = FeasibleSet(problem.delta, problem.l, problem.R)
        self.evals = 0
        self._lock = threading.Lock()

    def __call__(self, v: DiscreteControl) -> CostBreakdown:
        with self._lock:
            self.evals += 1
        try:
            return discrete_cost(run_forward(self.problem, v, config=self.config))
        except (StepSolveError, InfeasibleGeometryError, ExpressionDomainError) as e:
            logger.warning(f"Forward solve failed, objective set to +inf: {e}")
            return FAILED


def objective(p: ProblemData, v: DiscreteControl, config: SolverConfig = default_config) -> float:
    """Discrete cost at v, projecting infeasible controls first."""
    target = ProblemObjective(p, config)
    if not target.feasible_set.contains(v):
        logger.info("Objective called with an infeasible control; projecting")
        v = target.feasible_set.project(v)
    return target(v).total


@dataclass(frozen=True)
class CoordinateMap:
    """Free coordinates (s_1..s_n and/or g_0..g_n) of a control packed into one vector."""

    n: int
    free: str

    @property
    def s_free(self) -> bool:
        return self.free in ("s", "both")

    @property
    def g_free(self) -> bool:
        return self.free in ("g", "both")

    @property
    def size(self) -> int:
        return self.n * self.s_free + (self.n + 1) * self.g_free

    def is_s(self) -> np.ndarray:
        return np.concatenate([np.full(self.n * self.s_free, True), np.full((self.n + 1) * self.g_free, False)])

    def pack(self, v: DiscreteControl) -> np.ndarray:
        parts = []
        if self.s_free:
            parts.append(v.s[1:])
        if self.g_free:
            parts.append(v.g)
        return np.concatenate(parts).astype(float)

    def unpack(self, x: np.ndarray, base: DiscreteControl) -> DiscreteControl:
        s, g = base.s, base.g
        offset = 0
        if self.s_free:
            s = np.concatenate(([base.s[0]], x[: self.n]))
            offset = self.n
        if self.g_free:
            g = x[offset : offset + self.n + 1]
        return base.replace(s=s, g=g)


@dataclass
class OptResult:
    best: DiscreteControl
    history: list[CostBreakdown] = field(default_factory=list)
    evals: int = 0
    status: Literal["converged", "iter_limit", "solver_failure"] = "iter_limit"
    trace: list[dict] = field(default_factory=list)

    @property
    def final(self) -> CostBreakdown:
        return self.history[-1]


def _evaluate_all(target: Callable[[DiscreteControl], CostBreakdown], controls: list, max_workers: int) -> list[float]:
    if max_workers <= 1:
        return [target(v).total for v in controls]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return [cost.total for cost in pool.map(target, controls)]


def fd_gradient(
    target: ControlObjective | ProblemData,
    v: DiscreteControl,
    fd_step: float = 1e-6,
    free: str = "both",
    max_workers: int = 1,
    f0: float | None = None,
) -> np.ndarray:
    """Central-difference gradient over the free coordinates, step fd_step * max(1, |x_i|).

    A failed side falls back to a one-sided difference; if both sides fail the entry is 0.
    """
    if isinstance(target, ProblemData):
        target = ProblemObjective(target)
    coords = CoordinateMap(v.n, free)
    x = coords.pack(v)
    steps = fd_step * np.maximum(1.0, np.abs(x))
    controls = []
    for i in range(x.size):
        for sign in (1.0, -1.0):
            shifted = x.copy()
            shifted[i] += sign * steps[i]
            controls.append(coords.unpack(shifted, v))
    values = np.array(_evaluate_all(target, controls, max_workers)).reshape(x.size, 2)

    grad = np.zeros(x.size)
    for i, (plus, minus) in enumerate(values):
        if math.isfinite(plus) and math.isfinite(minus):
            grad[i] = (plus - minus) / (2.0 * steps[i])
            continue
        if f0 is None:
            f0 = target(v).total
        if math.isfinite(plus) and math.isfinite(f0):
            grad[i] = (plus - f0) / steps[i]
        elif math.isfinite(minus) and math.isfinite(f0):
            grad[i] = (f0 - minus) / steps[i]
        else:
            logger.warning(f"Both finite-difference sides failed for coordinate {i}; gradient entry set to 0")
    return grad


class _Run:
    """Bookkeeping shared by the optimizers: accepted iterates, history and trace rows."""

    def __init__(self, target: ControlObjective, v: DiscreteControl, cost: CostBreakdown):
        self.target = target
        self.best = v
        self.cost = cost
        self.history = [cost]
        self.trace: list[dict] = []
        self._record(0, 0.0)

    def _record(self, iteration: int, step: float) -> None:
        self.trace.append(
            {
                "iter": iteration,
                "total": self.cost.total,
                "boundary_term": self.cost.boundary_term,
                "front_term": self.cost.front_term,
                "step": step,
                "evals": self.target.evals,
            }
        )

    def accept(self, iteration: int, v: DiscreteControl, cost: CostBreakdown, step: float) -> None:
        if cost.total <= self.cost.total:
            self.best, self.cost = v, cost
        self.history.append(self.cost)
        self._record(iteration, step)

    def result(self, status: str) -> OptResult:
        return OptResult(self.best, self.history, self.target.evals, status, self.trace)


def _relative_decrease(old: float, new: float) -> float:
    return (old - new) / max(abs(old), 1e-300)


def _projected_descent(run: _Run, opts: OptOptions, coords: CoordinateMap) -> str:
    feasible = run.target.feasible_set
    x = coords.pack(run.best)
    prev_x = prev_grad = None
    for iteration in range(1, opts.max_iters + 1):
        grad = fd_gradient(run.target, run.best, opts.fd_step, opts.free, opts.max_workers, f0=run.cost.total)
        if not np.any(grad):
            return "converged"
        if prev_x is None:
            alpha = 1.0 / max(1.0, float(np.max(np.abs(grad))))
        else:
            s_k, y_k = x - prev_x, grad - prev_grad
            curvature = float(s_k @ y_k)
            alpha = float(s_k @ s_k) / curvature if curvature > 0 else 1.0 / max(1.0, float(np.max(np.abs(grad))))
            alpha = min(max(alpha, BB_STEP_BOUNDS[0]), BB_STEP_BOUNDS[1])

        accepted = False
        for _ in range(MAX_BACKTRACKS):
            trial = feasible.project(coords.unpack(x - alpha * grad, run.best))
            trial_x = coords.pack(trial)
            cost = run.target(trial)
            if cost.total <= run.cost.total + ARMIJO_C1 * float(grad @ (trial_x - x)):
                accepted = True
                break
            alpha *= BACKTRACK_FACTOR
            if alpha * float(np.max(np.abs(grad))) < opts.min_step:
                break
        if not accepted:
            logger.info(f"Line search stalled at iteration {iteration}")
            return "converged"

        old_total = run.cost.total
        prev_x, prev_grad = x, grad
        x = trial_x
        run.accept(iteration, trial, cost, alpha)
        logger.debug(f"iter {iteration}: total={cost.total:.6e} alpha={alpha:.3e}")
        if cost.total <= opts.abs_tol or _relative_decrease(old_total, cost.total) < opts.tol_cost:
            return "converged"
    return "iter_limit"


def _pattern_search(run: _Run, opts: OptOptions, coords: CoordinateMap) -> str:
    feasible = run.target.feasible_set
    x = coords.pack(run.best)
    steps = np.where(coords.is_s(), 0.1 * (feasible.l - feasible.delta), 0.1 * feasible.R)
    rng = np.random.default_rng(opts.seed)
    for iteration in range(1, opts.max_iters + 1):
        order = rng.permutation(x.size) if opts.shuffle_polls else np.arange(x.size)
        improved = False
        old_total = run.cost.total
        for i in order:
            for sign in (1.0, -1.0):
                shifted = x.copy()
                shifted[i] += sign * steps[i]
                trial = feasible.project(coords.unpack(shifted, run.best))
                cost = run.target(trial)
                if cost.total < run.cost.total:
                    run.accept(iteration, trial, cost, float(steps[i]))
                    x = coords.pack(trial)
                    improved = True
                    break
            if improved:
                break
        if not improved:
            steps = steps * 0.5
            run.accept(iteration, run.best, run.cost, float(np.max(steps)))
            if np.max(steps) < opts.min_step:
                return "converged"
        elif run.cost.total <= opts.abs_tol or _relative_decrease(old_total, run.cost.total) < opts.tol_cost:
            return "converged"
    return "iter_limit"


def _lbfgs(run: _Run, opts: OptOptions, coords: CoordinateMap) -> str:
    feasible = run.target.feasible_set
    base = run.best
    seen: dict[bytes, CostBreakdown] = {}

    def evaluate(x: np.ndarray) -> CostBreakdown:
        key = x.tobytes()
        if key not in seen:
            seen[key] = run.target(coords.unpack(x, base))
        return seen[key]

    def fun(x: np.ndarray) -> float:
        total = evaluate(x).total
        return total if math.isfinite(total) else 1e300

    def jac(x: np.ndarray) -> np.ndarray:
        return fd_gradient(run.target, coords.unpack(x, base), opts.fd_step, opts.free, opts.max_workers, f0=fun(x))

    iteration = 0

    def callback(xk: np.ndarray) -> None:
        nonlocal iteration
        iteration += 1
        v = coords.unpack(xk.copy(), base)
        if feasible.contains(v):
            run.accept(iteration, v, evaluate(xk), 0.0)
            return
        # the bounds only cover the box; iterates outside the ball are accepted projected
        v = feasible.project(v)
        run.accept(iteration, v, run.target(v), 0.0)

    bounds = [(feasible.delta, feasible.l) if is_s else (None, None) for is_s in coords.is_s()]
    outcome = scipy_minimize(
        fun,
        coords.pack(base),
        jac=jac,
        method="L-BFGS-B",
        bounds=bounds,
        callback=callback,
        options={"maxiter": opts.max_iters, "ftol": opts.tol_cost, "gtol": opts.min_step, "maxls": 40},
    )
    final = coords.unpack(outcome.x, base)
    if not feasible.contains(final):
        logger.info("L-BFGS-B result left the ball; projecting")
        final = feasible.project(final)
    run.accept(iteration + 1, final, run.target(final), 0.0)
    logger.info(f"L-BFGS-B finished: {outcome.message}")
    return "converged" if outcome.success else "iter_limit"


def minimize(
    p: ProblemData | ControlObjective,
    v0: DiscreteControl,
    opts: OptOptions | None = None,
    config: SolverConfig = default_config,
) -> OptResult:
    """Minimize the discrete cost from v0 with the method named in opts."""
    opts = opts or OptOptions()
    target = ProblemObjective(p, config) if isinstance(p, ProblemData) else p
    v = v0
    if not target.feasible_set.contains(v0):
        logger.info("Initial control is infeasible; projecting")
        v = target.feasible_set.project(v0)

    cost = target(v)
    run = _Run(target, v, cost)
    if not math.isfinite(cost.total):
        logger.error("Forward solve failed at the initial control")
        return run.result("solver_failure")
    if cost.total <= opts.abs_tol:
        return run.result("converged")

    coords = CoordinateMap(v.n, opts.free)
    methods = {"fd_gradient": _projected_descent, "pattern_search": _pattern_search, "lbfgs": _lbfgs}
    status = methods[opts.method](run, opts, coords)
    logger.info(
        f"{opts.method} finished with status {status}: cost {run.history[0].total:.6e} -> {run.cost.total:.6e} "
        f"after {target.evals} evaluations"
    )
    return run.result(status)
