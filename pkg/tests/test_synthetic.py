from __future__ import annotations

import numpy as np
import pytest

from stefan_control.numerics.functional import discrete_cost
from stefan_control.numerics.state import run_forward
from stefan_control.services.synthetic_service import add_noise, make_synthetic
from tests.conftest import control_from


def test_noiseless_data_reproduces_the_traces(recovery_case) -> None:
    truth = recovery_case.truth_control(8)
    data = make_synthetic(recovery_case.problem, truth)
    st = data.state
    np.testing.assert_array_equal(data.nu_values, st.layers[1:, 0])
    np.testing.assert_array_equal(data.mu_values, st.front_values()[1:])
    np.testing.assert_array_equal(data.times, st.time_grid.nodes[1:])
    assert data.nu is data.problem.nu
    assert data.problem.nu.kind == "step"


def test_step_series_hold_each_value_on_its_cell(recovery_case) -> None:
    data = make_synthetic(recovery_case.problem, recovery_case.truth_control(4))
    nodes = data.state.time_grid.nodes
    inside = 0.5 * (nodes[1:] + nodes[:-1])
    np.testing.assert_array_equal(data.mu(inside), data.mu_values)
    np.testing.assert_array_equal(data.mu(nodes[1:]), data.mu_values)


def test_noise_is_seeded_and_scaled(recovery_case) -> None:
    truth = recovery_case.truth_control(16)
    first = make_synthetic(recovery_case.problem, truth, noise=0.05, seed=4)
    second = make_synthetic(recovery_case.problem, truth, noise=0.05, seed=4)
    other = make_synthetic(recovery_case.problem, truth, noise=0.05, seed=5)
    np.testing.assert_array_equal(first.nu_values, second.nu_values)
    assert not np.array_equal(first.nu_values, other.nu_values)
    np.testing.assert_array_equal(first.nu_clean, other.nu_clean)
    deviation = np.max(np.abs(first.mu_values - first.mu_clean))
    assert 0.0 < deviation < 6 * 0.05 * np.max(np.abs(first.mu_clean))


def test_add_noise_without_level_copies() -> None:
    values = np.array([1.0, -2.0])
    noisy = add_noise(values, 0.0, np.random.default_rng(0))
    np.testing.assert_array_equal(noisy, values)
    assert noisy is not values


def test_negative_noise_is_rejected(recovery_case) -> None:
    with pytest.raises(ValueError):
        make_synthetic(recovery_case.problem, recovery_case.truth_control(4), noise=-0.1)


def test_other_controls_see_a_positive_cost(recovery_case) -> None:
    data = make_synthetic(recovery_case.problem, recovery_case.truth_control(8))
    other = control_from("1", "0", 8)
    assert discrete_cost(run_forward(data.problem, other)).total > 1e-6
