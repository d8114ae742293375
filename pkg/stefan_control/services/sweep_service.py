import math
import threading
import time
import uuid
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from stefan_control.config.solver_config import SolverConfig, default_config
from stefan_control.numerics.control import DiscreteControl, discrete_norms, refine_control
from stefan_control.numerics.energy import energy_report
from stefan_control.numerics.functional import discrete_cost
from stefan_control.numerics.state import DiscreteState, run_forward
from stefan_control.problem.manufactured import ManufacturedCase
from stefan_control.problem.problem_data import ProblemData
from stefan_control.services.optimizer_service import OptOptions, minimize
from stefan_control.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class SweepRequest:
    """What to solve at each n: the problem, a control per n, and an optional exact solution."""

    problem: ProblemData
    control_for: Callable[[int], DiscreteControl]
    manufactured: ManufacturedCase | None = None
    config: SolverConfig = default_config
    with_energy: bool = True


@dataclass(frozen=True)
class SweepRow:
    n: int
    tau: float
    h: float
    N: int
    total: float
    boundary_term: float
    front_term: float
    s_norm_sq: float
    g_norm_sq: float
    first_lhs: float = math.nan
    first_rhs: float = math.nan
    second_lhs: float = math.nan
    second_rhs: float = math.nan
    first_ratio: float = math.nan
    second_ratio: float = math.nan
    front_error: float = math.nan
    node_error: float = math.nan
    evals: int = 0
    status: str = "forward"

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def solution_errors(st: DiscreteState, case: ManufacturedCase) -> tuple[float, float]:
    """(max_k |u_front(k) - u(s_k, t_k)|, max over k and i <= m_k of |u_i(k) - u(x_i, t_k)|)."""
    times = st.time_grid.nodes
    front = case.exact_u.evaluate(st.control.s, times)
    front_error = float(np.max(np.abs(st.front_values() - front)))
    node_error = 0.0
    for k in range(st.n + 1):
        m = st.grid.boundary_index(k)
        x = st.grid.nodes[: m + 1]
        exact = case.exact_u.evaluate(x, times[k])
        node_error = max(node_error, float(np.max(np.abs(st.layers[k, : m + 1] - exact))))
    return front_error, node_error


def convergence_order(steps, errors) -> float:
    """Least-squares slope of log(error) against log(step)."""
    steps = np.asarray(steps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if steps.size < 2 or np.any(errors <= 0):
        return math.nan
    slope, _ = np.polyfit(np.log(steps), np.log(errors), 1)
    return float(slope)


def build_row(request: SweepRequest, control: DiscreteControl, evals: int = 0, status: str = "forward") -> SweepRow:
    st = run_forward(request.problem, control, config=request.config)
    cost = discrete_cost(st)
    norms = discrete_norms(control)
    row = {
        "n": control.n,
        "tau": st.tau,
        "h": st.grid.h,
        "N": st.grid.N,
        "total": cost.total,
        "boundary_term": cost.boundary_term,
        "front_term": cost.front_term,
        "s_norm_sq": norms.s_norm_sq,
        "g_norm_sq": norms.g_norm_sq,
        "evals": evals,
        "status": status,
    }
    if request.with_energy:
        energy = energy_report(st)
        row["first_lhs"], row["first_rhs"] = energy.first_lhs, energy.first_rhs_data
        row["second_lhs"], row["second_rhs"] = energy.second_lhs, energy.second_rhs_data
        row["first_ratio"] = energy.first_ratio
        row["second_ratio"] = energy.second_ratio
    if request.manufactured is not None:
        row["front_error"], row["node_error"] = solution_errors(st, request.manufactured)
    return SweepRow(**row)


class SweepJobService:
    """Job table for per-n sweep solves run on a thread pool."""

    def __init__(self, max_jobs: int = 200):
        self._jobs: dict[str, dict[str, Any]] = {}
        self._max_jobs = max_jobs
        self._lock = threading.Lock()

    def _prune_jobs(self) -> None:
        if len(self._jobs) <= self._max_jobs:
            return
        finished = [item for item in self._jobs.items() if item[1]["status"] in ("ok", "failed")]
        removable = sorted(finished, key=lambda item: item[1].get("created_at", 0.0))
        overflow = len(self._jobs) - self._max_jobs
        for job_id, _ in removable[:overflow]:
            self._jobs.pop(job_id, None)

    def create_job(self, n: int) -> str:
        job_id = f"sweep-{n}-{uuid.uuid4()}"
        now = time.time()
        with self._lock:
            self._jobs[job_id] = {
                "job_id": job_id,
                "status": "queued",
                "n": n,
                "created_at": now,
                "updated_at": now,
                "result": None,
                "error": None,
            }
            self._prune_jobs()
        return job_id

    def _update_job(self, job_id: str, **updates: Any) -> None:
        with self._lock:
            job = self._jobs.get(job_id)
            if not job:
                return
            job.update(updates)
            job["updated_at"] = time.time()

    def get_job(self, job_id: str) -> dict[str, Any] | None:
        return self._jobs.get(job_id)

    def run_job(self, job_id: str, request: SweepRequest) -> None:
        job = self.get_job(job_id)
        if job is None:
            return
        self._update_job(job_id, status="running")
        try:
            row = build_row(request, request.control_for(job["n"]))
            self._update_job(job_id, status="ok", result=row, error=None)
        except Exception as e:
            logger.error(f"Sweep job {job_id} failed: {e}")
            self._update_job(job_id, status="failed", error=e, result=None)

    def run_sweep(self, request: SweepRequest, ns: list[int], max_workers: int = 1) -> list[SweepRow]:
        """Forward solves for every n; rows come back in the order of ``ns`` whatever the worker count."""
        job_ids = [self.create_job(n) for n in ns]
        if max_workers <= 1:
            for job_id in job_ids:
                self.run_job(job_id, request)
        else:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                list(pool.map(lambda job_id: self.run_job(job_id, request), job_ids))

        rows = []
        for job_id in job_ids:
            job = self.get_job(job_id)
            if job["status"] == "failed":
                raise job["error"]
            rows.append(job["result"])
        logger.info(f"Sweep finished for n in {ns}")
        return rows

    def run_optimized_sweep(self, request: SweepRequest, ns: list[int], opts: OptOptions) -> list[SweepRow]:
        """Minimize at each n in turn, warm-starting from the previous optimum refined to the next grid."""
        rows = []
        start: DiscreteControl | None = None
        for n in ns:
            job_id = self.create_job(n)
            self._update_job(job_id, status="running")
            v0 = request.control_for(n) if start is None else refine_control(start, n)
            try:
                result = minimize(request.problem, v0, opts, request.config)
                row = build_row(request, result.best, evals=result.evals, status=result.status)
            except Exception as e:
                self._update_job(job_id, status="failed", error=e)
                raise
            self._update_job(job_id, status="ok", result=row)
            logger.info(f"n={n}: optimal cost {row.total:.6e} ({result.status}, {result.evals} evaluations)")
            rows.append(row)
            start = result.best
        return rows


sweep_job_service = SweepJobService()
