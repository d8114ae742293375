from __future__ import annotations

import numpy as np
import pytest

from stefan_control.errors import ProblemConfigError
from tests.conftest import manufactured


def test_parabola_case_derived_data() -> None:
    case = manufactured("x^2 + 2*t")
    p = case.problem
    x = np.linspace(0.0, 1.5, 7)
    t = np.linspace(0.0, 1.0, 5)
    np.testing.assert_allclose(p.f.evaluate(x[:, None], t[None, :]), 0.0, atol=1e-14)
    np.testing.assert_allclose(case.exact_g.evaluate(0.0, t), 0.0, atol=1e-14)
    np.testing.assert_allclose(p.chi.evaluate(1.0, t), 2.0, atol=1e-14)
    np.testing.assert_allclose(p.phi.evaluate(x, 0.0), x**2, atol=1e-14)
    np.testing.assert_allclose(p.nu(t), 2.0 * t, atol=1e-14)
    np.testing.assert_allclose(p.mu(t), 1.0 + 2.0 * t, atol=1e-14)


def test_zero_solution() -> None:
    case = manufactured("0", "1 + 0.1*t")
    t = np.linspace(0.0, 1.0, 5)
    np.testing.assert_array_equal(case.problem.nu(t), 0.0)
    np.testing.assert_array_equal(case.problem.mu(t), 0.0)
    np.testing.assert_array_equal(case.exact_g.evaluate(0.0, t), 0.0)


def test_heat_kernel_case_has_zero_source() -> None:
    case = manufactured("exp(-t)*cos(x)")
    assert case.lattice_residual() <= 1e-10
    np.testing.assert_allclose(case.problem.f.evaluate(np.linspace(0, 1.5, 9), 0.4), 0.0, atol=1e-14)


@pytest.mark.parametrize(
    ("u", "s", "overrides"),
    [
        ("x^2 * t + sin(x) * exp(-t)", "1 + 0.2*t^2", {"a": "1 + x*t", "b": "0.5", "c": "-t"}),
        ("cos(x + t)", "1 - 0.3*t", {"gamma": "2"}),
    ],
)
def test_lattice_residual_vanishes(u: str, s: str, overrides: dict) -> None:
    assert manufactured(u, s, **overrides).lattice_residual() <= 1e-10


def test_front_flux_balance_holds_on_the_exact_front() -> None:
    case = manufactured("x^2 * t + 1", "1 + 0.2*t^2", gamma="2")
    t = np.linspace(0.0, 1.0, 11)
    s = 1.0 + 0.2 * t**2
    u_x = 2.0 * s * t
    np.testing.assert_allclose(case.problem.chi.evaluate(s, t), u_x + 2.0 * 0.4 * t, atol=1e-13)


def test_truth_control_samples_front_and_flux() -> None:
    case = manufactured("x^2 + 2*t + x*t")
    v = case.truth_control(4)
    np.testing.assert_allclose(v.s, 1.0)
    np.testing.assert_allclose(v.g, [0.0, 0.25, 0.5, 0.75, 1.0])


@pytest.mark.parametrize(("s", "message"), [("1 + 2*t", "leaves"), ("0.9", "starts"), ("x", "t only")])
def test_invalid_fronts(s: str, message: str) -> None:
    with pytest.raises(ProblemConfigError, match=message):
        manufactured("x^2", s)


def test_non_differentiable_solution_is_rejected() -> None:
    with pytest.raises(ProblemConfigError):
        manufactured("sqrt(x - 0.5)")
