from __future__ import annotations

import numpy as np
import pytest

from stefan_control.numerics.control import lift_Pn
from stefan_control.numerics.grid import build_spatial_grid, build_time_grid
from stefan_control.numerics.steklov import (
    build_averages,
    cell_average,
    cell_averages,
    get_average_cache,
    time_average,
    time_averages,
    trace_averages,
    trace_averages_all,
)
from stefan_control.problem.expression import parse_expression
from tests.conftest import constant_control, control_from, make_problem


def test_cell_average_of_product() -> None:
    values = cell_averages(parse_expression("x^2 * t"), np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    assert values.shape == (1, 1)
    assert values[0, 0] == pytest.approx(1.0 / 6.0, abs=1e-15)


def test_cell_average_by_index() -> None:
    time_grid = build_time_grid(1.0, 2)
    grid = build_spatial_grid([1.0, 1.0, 1.0], 2.0, time_grid.tau)
    # cell [0.5, 1] x [0.5, 1] of x + t
    assert cell_average(parse_expression("x + t"), grid, time_grid, 1, 2) == pytest.approx(1.5)
    with pytest.raises(IndexError):
        cell_average(parse_expression("x"), grid, time_grid, 0, 0)


def test_constant_coefficient_is_exact() -> None:
    values = cell_averages(parse_expression("3.25"), np.linspace(0.0, 1.0, 7), np.linspace(0.0, 1.0, 4))
    assert values.shape == (3, 6)
    np.testing.assert_array_equal(values, 3.25)


def test_averages_telescope_to_the_double_integral() -> None:
    nodes = np.linspace(0.0, 2.0, 9)
    times = np.linspace(0.0, 1.0, 5)
    values = cell_averages(parse_expression("sin(x) * exp(t)"), nodes, times)
    area = np.outer(np.diff(times), np.diff(nodes))
    exact = (1.0 - np.cos(2.0)) * (np.e - 1.0)
    assert float(np.sum(values * area)) == pytest.approx(exact, rel=1e-9)


def test_time_averages() -> None:
    times = np.linspace(0.0, 1.0, 5)
    np.testing.assert_allclose(time_averages(lambda t: t, times), 0.5 * (times[1:] + times[:-1]), atol=1e-15)
    assert time_average(lambda t: 3.0 * t**2, build_time_grid(1.0, 1), 1) == pytest.approx(1.0)
    with pytest.raises(IndexError):
        time_average(lambda t: t, build_time_grid(1.0, 2), 3)


def test_trace_average_of_chi_at_fixed_front() -> None:
    c = lift_Pn(constant_control(4, 1.0))
    gamma_ds, chi = trace_averages(c, parse_expression("1"), parse_expression("x"), 2)
    assert gamma_ds == 0.0
    assert chi == pytest.approx(1.0, abs=1e-15)


def test_trace_average_of_front_speed() -> None:
    c = lift_Pn(control_from("1 + t", "0", 4))
    gamma_ds, _ = trace_averages_all(c, parse_expression("1"), parse_expression("0"))
    # the lift starts at rest, so the first cell sees half the speed
    np.testing.assert_allclose(gamma_ds, [0.5, 1.0, 1.0, 1.0], atol=1e-13)


def test_build_averages_layout_and_measurement_modes() -> None:
    v = control_from("1", "t", 4)
    time_grid = build_time_grid(1.0, 4)
    grid = build_spatial_grid(v.s, 1.5, time_grid.tau)
    midpoints = 0.5 * (time_grid.nodes[1:] + time_grid.nodes[:-1])

    steklov = build_averages(make_problem(nu="t", mu="2*t"), time_grid, grid, v)
    assert steklov.a.shape == (5, grid.N)
    np.testing.assert_array_equal(steklov.a[0], 0.0)
    np.testing.assert_allclose(steklov.a[1:], 1.0)
    np.testing.assert_allclose(steklov.nu[1:], midpoints, atol=1e-15)
    np.testing.assert_allclose(steklov.mu[1:], 2.0 * midpoints, atol=1e-15)
    np.testing.assert_allclose(steklov.g[1:], midpoints, atol=1e-15)

    point = build_averages(make_problem(nu="t", mu="2*t", measurement_mode="point"), time_grid, grid, v)
    np.testing.assert_allclose(point.nu[1:], time_grid.nodes[1:], atol=1e-15)


def test_cell_tables_are_cached() -> None:
    cache = get_average_cache()
    cache.clear()
    v = control_from("1 + 0.1*t", "0", 8)
    time_grid = build_time_grid(1.0, 8)
    grid = build_spatial_grid(v.s, 1.5, time_grid.tau)
    problem = make_problem(a="1 + x*t")

    first = build_averages(problem, time_grid, grid, v)
    misses = cache.misses
    second = build_averages(problem, time_grid, grid, v)
    assert cache.misses == misses
    assert cache.hits > 0
    np.testing.assert_array_equal(first.a, second.a)
