from __future__ import annotations

import numpy as np
import pytest

from stefan_control.errors import StepSolveError
from stefan_control.numerics import tridiag
from stefan_control.numerics.grid import build_spatial_grid
from stefan_control.numerics.state import (
    extend_reflect,
    fold,
    identity_terms,
    interpolants,
    max_folds,
    residual_identity,
    run_forward,
)
from stefan_control.numerics.tridiag import (
    TriSystem,
    assemble_step,
    check_step_size,
    solve_step,
    stability_threshold,
    tau_zero,
)
from tests.conftest import constant_control, control_from, dense_oracle_solve, make_problem, manufactured


def test_constant_data_gives_constant_state(const_problem) -> None:
    v = control_from("1 + 0.5 * t^2 * (1 - t)^2", "0", 16)
    st = run_forward(const_problem, v)
    for k in range(st.n + 1):
        m = st.grid.boundary_index(k)
        np.testing.assert_allclose(st.layers[k, : m + 1], 1.0, rtol=0, atol=1e-13)
    np.testing.assert_allclose(st.front_values(), 1.0, atol=1e-13)
    np.testing.assert_allclose(st.layers[:, 0], 1.0, atol=1e-13)


def test_state_shapes_and_read_only_layers(const_problem) -> None:
    st = run_forward(const_problem, constant_control(4))
    assert st.layers.shape == (5, st.grid.N + 1)
    assert st.tau == 0.25
    assert st.tau0 == pytest.approx(stability_threshold(const_problem))
    with pytest.raises(ValueError):
        st.layers[0, 0] = 2.0


def test_mismatched_control_step_is_rejected(const_problem) -> None:
    with pytest.raises(ValueError):
        run_forward(const_problem, constant_control(4, T=2.0))


@pytest.mark.parametrize("k", [1, 4, 8])
def test_step_matches_dense_oracle(k: int) -> None:
    problem = manufactured("x^2 + 2*t", b="0.5", c="-1").problem
    st = run_forward(problem, control_from("1 + 0.2*t^2", "0.3*t", 8))
    m = st.grid.boundary_index(k)
    np.testing.assert_allclose(dense_oracle_solve(st, k), st.layers[k, : m + 1], rtol=0, atol=1e-11)


def test_summation_identity_holds_for_any_test_vector() -> None:
    problem = manufactured("x^2 + 2*t + x*t", b="0.5", c="-1").problem
    st = run_forward(problem, control_from("1 + 0.1*t", "t", 16))
    rng = np.random.default_rng(7)
    for k in range(1, st.n + 1):
        m = st.grid.boundary_index(k)
        for _ in range(100):
            eta = rng.normal(size=m + 1)
            terms = identity_terms(st, k, eta)
            assert abs(residual_identity(st, k, eta)) <= 1e-10 * max(1.0, float(np.sum(np.abs(terms))))


def test_identity_detects_a_perturbed_layer(parabola_case) -> None:
    st = run_forward(parabola_case.problem, parabola_case.truth_control(8))
    m = st.grid.boundary_index(3)
    perturbed = np.array(st.layers[3])
    perturbed[m // 2] += 1e-3
    eta = np.zeros(m + 1)
    eta[m // 2] = 1.0
    assert abs(residual_identity(st, 3, eta, perturbed)) > 1e-6
    with pytest.raises(ValueError):
        residual_identity(st, 3, np.ones(m + 2))


def test_mass_is_conserved_without_flux() -> None:
    problem = make_problem(phi="x^2")
    st = run_forward(problem, constant_control(64))
    m = st.grid.boundary_index(0)
    h = st.grid.widths[:m]
    mass = st.layers[:, :m] @ h
    assert np.max(np.abs(mass - mass[0])) <= 1e-11


def test_fold_reflects_past_the_front() -> None:
    folded, count = fold([0.25, 1.0, 1.5, 2.0, 3.5], 1.0, max_folds(4.0, 1.0))
    np.testing.assert_allclose(folded, [0.25, 1.0, 0.5, 0.0, 0.5])
    np.testing.assert_array_equal(count, [0, 0, 1, 1, 1])
    assert max_folds(2.0, 0.5) == 3


def test_extend_reflect_mirrors_the_layer() -> None:
    grid = build_spatial_grid([1.0, 1.0, 1.0], 2.0, 0.5)
    np.testing.assert_array_equal(grid.nodes, [0.0, 0.5, 1.0, 1.5, 2.0])
    layer = extend_reflect(np.array([3.0, 5.0, 7.0]), grid, 2)
    np.testing.assert_allclose(layer, [3.0, 5.0, 7.0, 5.0, 3.0])


def test_layer_function_and_slope(parabola_case) -> None:
    st = run_forward(parabola_case.problem, parabola_case.truth_control(8))
    k = 5
    m = st.grid.boundary_index(k)
    nodes = st.grid.nodes[: m + 1]
    np.testing.assert_allclose(st.layer_function(k, nodes), st.layers[k, : m + 1], atol=1e-15)

    s = nodes[-1]
    inside = np.array([0.3 * s, 0.7 * s])
    mirrored = 2.0 * s - inside
    np.testing.assert_allclose(st.layer_function(k, mirrored), st.layer_function(k, inside), atol=1e-14)
    np.testing.assert_allclose(st.layer_slope(k, mirrored), -st.layer_slope(k, inside), atol=1e-12)


def test_interpolants(parabola_case) -> None:
    st = run_forward(parabola_case.problem, parabola_case.truth_control(4))
    x = np.linspace(0.0, 1.0, 9)
    t1, t2 = st.time_grid.nodes[1], st.time_grid.nodes[2]

    np.testing.assert_array_equal(interpolants(st, x, 0.0), st.layer_function(0, x))
    np.testing.assert_array_equal(interpolants(st, x, 0.5 * (t1 + t2)), st.layer_function(2, x))
    np.testing.assert_array_equal(interpolants(st, x, t2), st.layer_function(2, x))

    hat = interpolants(st, x, 0.5 * (t1 + t2), "u_hat_tau")
    np.testing.assert_allclose(hat, 0.5 * (st.layer_function(1, x) + st.layer_function(2, x)), atol=1e-14)
    np.testing.assert_allclose(interpolants(st, x, t2, "u_hat_tau"), st.layer_function(2, x), atol=1e-14)

    nodes = st.grid.nodes[:-1]
    np.testing.assert_array_equal(interpolants(st, nodes, t2, "u_tilde_tau"), st.layers[2, :-1])

    with pytest.raises(ValueError):
        interpolants(st, x, t2, "u_bar")


def test_step_system_dense_form_matches_matvec(parabola_case) -> None:
    st = run_forward(parabola_case.problem, parabola_case.truth_control(4))
    system = assemble_step(st.grid, st.averages, 2, st.layers[1], st.tau)
    x = np.linspace(1.0, 2.0, system.size)
    np.testing.assert_allclose(system.to_dense() @ x, system.matvec(x), atol=1e-13)
    np.testing.assert_allclose(solve_step(system), st.layers[2, : system.size], atol=1e-14)


def test_singular_step_raises_with_index() -> None:
    zeros = np.zeros(3)
    system = TriSystem(k=7, lower=zeros, diag=zeros, upper=zeros, rhs=np.ones(3))
    with pytest.raises(StepSolveError) as exc_info:
        solve_step(system)
    assert exc_info.value.k == 7


def test_tau_zero() -> None:
    assert tau_zero(0.0, 1.0) == float("inf")
    assert tau_zero(2.0, 1.0) == pytest.approx(0.25)
    assert stability_threshold(make_problem()) == pytest.approx(2.0 / 3.0)


def test_step_size_warning_at_the_threshold(monkeypatch) -> None:
    warnings: list[str] = []
    monkeypatch.setattr(tridiag.logger, "warning", warnings.append)
    problem = make_problem()

    assert check_step_size(problem, 0.5) == pytest.approx(2.0 / 3.0)
    assert warnings == []

    assert check_step_size(problem, 0.7) == pytest.approx(2.0 / 3.0)
    assert len(warnings) == 1
    assert "tau=0.7" in warnings[0]
