from __future__ import annotations

import math

import numpy as np
import pytest

from stefan_control.numerics.functional import discrete_cost
from stefan_control.numerics.state import run_forward
from stefan_control.services.optimizer_service import OptOptions
from stefan_control.services.sweep_service import (
    SweepJobService,
    SweepRequest,
    build_row,
    convergence_order,
)


def test_convergence_order() -> None:
    assert convergence_order([1.0, 0.5, 0.25], [1.0, 0.25, 0.0625]) == pytest.approx(2.0)
    assert math.isnan(convergence_order([1.0], [1.0]))
    assert math.isnan(convergence_order([1.0, 0.5], [1.0, 0.0]))


def test_row_for_the_truth_control(parabola_case) -> None:
    request = SweepRequest(parabola_case.problem, parabola_case.truth_control, manufactured=parabola_case)
    row = build_row(request, parabola_case.truth_control(8))
    assert row.n == 8
    assert row.tau == 0.125
    assert row.status == "forward"
    assert row.total == pytest.approx(row.boundary_term + row.front_term)
    assert row.s_norm_sq == pytest.approx(1.0)
    assert row.g_norm_sq == 0.0
    assert row.front_error < 0.5
    assert math.isfinite(row.first_ratio) and math.isfinite(row.second_ratio)
    assert "front_error" in row.to_dict()


def test_front_error_is_first_order_in_h(parabola_case) -> None:
    request = SweepRequest(parabola_case.problem, parabola_case.truth_control, parabola_case, with_energy=False)
    rows = SweepJobService().run_sweep(request, [8, 16, 32, 64, 128])
    assert [row.n for row in rows] == [8, 16, 32, 64, 128]
    assert all(math.isnan(row.first_ratio) for row in rows)
    h = [row.h for row in rows]
    assert convergence_order(h, [row.front_error for row in rows]) >= 0.9
    assert convergence_order(h, [row.node_error for row in rows]) >= 0.9


def test_parallel_sweep_keeps_row_order(parabola_case) -> None:
    request = SweepRequest(parabola_case.problem, parabola_case.truth_control, parabola_case, with_energy=False)
    service = SweepJobService()
    serial = service.run_sweep(request, [32, 8, 16])
    parallel = service.run_sweep(request, [32, 8, 16], max_workers=3)
    assert [row.n for row in parallel] == [32, 8, 16]
    for a, b in zip(serial, parallel, strict=True):
        assert (a.total, a.front_error, a.node_error, a.N) == (b.total, b.front_error, b.node_error, b.N)


def test_failed_job_is_recorded_and_raised(parabola_case) -> None:
    def control_for(n: int):
        raise ValueError(f"no control for n={n}")

    service = SweepJobService()
    request = SweepRequest(parabola_case.problem, control_for)
    job_id = service.create_job(4)
    assert service.get_job(job_id)["status"] == "queued"
    service.run_job(job_id, request)
    job = service.get_job(job_id)
    assert job["status"] == "failed"
    assert isinstance(job["error"], ValueError)
    with pytest.raises(ValueError):
        service.run_sweep(request, [4])


def test_job_table_prunes_finished_jobs(parabola_case) -> None:
    service = SweepJobService(max_jobs=2)
    request = SweepRequest(parabola_case.problem, parabola_case.truth_control, with_energy=False)
    first = service.create_job(4)
    service.run_job(first, request)
    second = service.create_job(4)
    service.run_job(second, request)
    queued = service.create_job(4)
    assert service.get_job(first) is None
    assert service.get_job(second)["status"] == "ok"
    assert service.get_job(queued)["status"] == "queued"


@pytest.mark.slow
def test_optimized_sweep_lowers_the_cost_at_every_n(recovery_case) -> None:
    problem = recovery_case.problem

    def zero_flux(n: int):
        truth = recovery_case.truth_control(n)
        return truth.replace(g=np.zeros_like(truth.g))

    request = SweepRequest(problem, zero_flux, recovery_case, with_energy=False)
    opts = OptOptions(method="lbfgs", free="g", max_iters=100, fd_step=1e-4, tol_cost=1e-15)
    rows = SweepJobService().run_optimized_sweep(request, [8, 16, 32], opts)
    assert [row.n for row in rows] == [8, 16, 32]
    for row in rows:
        start = discrete_cost(run_forward(problem, zero_flux(row.n))).total
        assert row.total < start
        assert row.evals > 0
        assert row.status in ("converged", "iter_limit")


@pytest.mark.slow
def test_optimal_costs_settle_under_refinement(recovery_case) -> None:
    def zero_flux(n: int):
        truth = recovery_case.truth_control(n)
        return truth.replace(g=np.zeros_like(truth.g))

    request = SweepRequest(recovery_case.problem, zero_flux, recovery_case, with_energy=False)
    opts = OptOptions(method="lbfgs", free="g", max_iters=100, fd_step=1e-4, tol_cost=1e-15)
    rows = SweepJobService().run_optimized_sweep(request, [8, 16, 32, 64], opts)
    totals = np.array([row.total for row in rows])
    gaps = np.abs(np.diff(totals))
    assert np.all(np.isfinite(totals))
    assert np.all(gaps[1:] < gaps[:-1])
