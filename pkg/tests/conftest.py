from __future__ import annotations

import numpy as np
import pytest

from stefan_control.numerics.control import DiscreteControl, sample_Qn
from stefan_control.numerics.state import DiscreteState, residual_identity
from stefan_control.problem.expression import parse_expression
from stefan_control.problem.manufactured import ManufacturedCase, manufactured_problem
from stefan_control.problem.problem_data import ProblemData


def make_problem(**overrides) -> ProblemData:
    fields = {"T": 1.0, "l": 1.5, "s0": 1.0, "delta": 0.5, "R": 100.0}
    fields.update(overrides)
    return ProblemData(**fields)


def constant_control(n: int, s: float = 1.0, g: float = 0.0, T: float = 1.0) -> DiscreteControl:
    return DiscreteControl(np.full(n + 1, s), np.full(n + 1, g), T / n)


def control_from(s_source: str, g_source: str, n: int, T: float = 1.0) -> DiscreteControl:
    return sample_Qn(parse_expression(s_source), parse_expression(g_source), n, T)


def manufactured(u: str, s: str = "1", **overrides) -> ManufacturedCase:
    return manufactured_problem(parse_expression(u), parse_expression(s), make_problem(**overrides))


def dense_oracle_solve(st: DiscreteState, k: int) -> np.ndarray:
    """Solve step k from the summation identity alone: row j is the identity with eta = e_j."""
    m = st.grid.boundary_index(k)
    basis = np.eye(m + 1)
    zero = np.zeros(st.grid.N + 1)
    offset = np.array([residual_identity(st, k, basis[j], zero) for j in range(m + 1)])
    matrix = np.empty((m + 1, m + 1))
    for i in range(m + 1):
        layer = np.zeros(st.grid.N + 1)
        layer[i] = 1.0
        matrix[:, i] = [residual_identity(st, k, basis[j], layer) - offset[j] for j in range(m + 1)]
    return np.linalg.solve(matrix, -offset)


@pytest.fixture
def const_problem() -> ProblemData:
    return make_problem(l=2.0, phi=1.0, nu=1.0, mu=1.0)


@pytest.fixture
def parabola_case() -> ManufacturedCase:
    return manufactured("x^2 + 2*t")


@pytest.fixture
def recovery_case() -> ManufacturedCase:
    return manufactured("x^2 + 2*t + x*t")
