"""Manufactured solutions: derive the data that makes a chosen u solve the direct problem."""

from dataclasses import dataclass

import numpy as np

from stefan_control.errors import ExpressionDomainError, ProblemConfigError
from stefan_control.numerics.control import DiscreteControl, sample_Qn
from stefan_control.problem.expression import CoefficientExpr
from stefan_control.problem.problem_data import MeasurementSeries, ProblemData
from stefan_control.utils.logger import get_logger

logger = get_logger(__name__)

RESIDUAL_LATTICE = 50
FRONT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ManufacturedCase:
    exact_u: CoefficientExpr
    exact_s: CoefficientExpr
    exact_g: CoefficientExpr
    problem: ProblemData

    def truth_control(self, n: int) -> DiscreteControl:
        return sample_Qn(self.exact_s, self.exact_g, n, self.problem.T)

    def lattice_residual(self, points: int = RESIDUAL_LATTICE) -> float:
        """Max |(a u_x)_x + b u_x + c u - u_t - f| over a lattice of the moving domain."""
        p = self.problem
        ts = np.linspace(0.0, p.T, points)
        theta = np.linspace(0.0, 1.0, points)
        x = theta[:, None] * self.exact_s.evaluate(0.0, ts)[None, :]
        t = np.broadcast_to(ts[None, :], x.shape)
        u_x = self.exact_u.diff("x")
        flux_x = p.a.diff("x").evaluate(x, t) * u_x.evaluate(x, t) + p.a.evaluate(x, t) * u_x.diff("x").evaluate(x, t)
        lhs = flux_x + p.b.evaluate(x, t) * u_x.evaluate(x, t) + p.c.evaluate(x, t) * self.exact_u.evaluate(x, t)
        lhs = lhs - self.exact_u.diff("t").evaluate(x, t)
        return float(np.max(np.abs(lhs - p.f.evaluate(x, t))))


def manufactured_problem(exact_u: CoefficientExpr, exact_s: CoefficientExpr, base: ProblemData) -> ManufacturedCase:
    """Build f, phi, g, chi, nu, mu so that exact_u with front exact_s solves the direct problem.

    Coefficients a, b, c, gamma and all constants are taken from ``base``.
    """
    if "x" in exact_s.depends_on():
        raise ProblemConfigError(f"front '{exact_s.source}' must depend on t only")

    ts = np.linspace(0.0, base.T, RESIDUAL_LATTICE)
    front = exact_s.evaluate(0.0, ts)
    if np.any(front < base.delta - FRONT_TOLERANCE) or np.any(front > base.l + FRONT_TOLERANCE):
        raise ProblemConfigError(f"front '{exact_s.source}' leaves [{base.delta}, {base.l}]")
    if abs(front[0] - base.s0) > FRONT_TOLERANCE:
        raise ProblemConfigError(f"front starts at {front[0]}, expected s0={base.s0}")

    a, b, c, gamma = base.a, base.b, base.c, base.gamma
    u_x = exact_u.diff("x")
    flux = a * u_x
    f = flux.diff("x") + b * u_x + c * exact_u - exact_u.diff("t")
    chi = flux + gamma * exact_s.diff("t")
    g = flux.substitute("x", 0.0)
    phi = exact_u.substitute("t", 0.0)
    nu = exact_u.substitute("x", 0.0)
    mu = exact_u.substitute("x", exact_s)

    lattice = np.linspace(0.0, base.l, RESIDUAL_LATTICE)
    try:
        for expr in (f, chi, g, phi):
            expr.evaluate(lattice[:, None], ts[None, :])
    except ExpressionDomainError as e:
        raise ProblemConfigError(f"manufactured solution '{exact_u.source}' is not differentiable on the box: {e}") from e

    problem = base.model_copy(
        update={
            "f": f,
            "chi": chi,
            "phi": phi,
            "nu": MeasurementSeries.from_expression(nu),
            "mu": MeasurementSeries.from_expression(mu),
        }
    )
    case = ManufacturedCase(exact_u=exact_u, exact_s=exact_s, exact_g=g, problem=problem)
    logger.debug(f"Manufactured case u={exact_u.source}: f={f.source}, chi={chi.source}, g={g.source}")
    return case
