"""Discrete cost functional, its fine-grid reference, and the weak-form residual."""

from dataclasses import asdict, dataclass

import numpy as np

from stefan_control.config.solver_config import SolverConfig, default_config
from stefan_control.numerics.control import ContinuousControl, eval_control, refine_control
from stefan_control.numerics.state import DiscreteState, run_forward
from stefan_control.numerics.steklov import TRACE_SUBINTERVALS, gauss_rule, time_averages
from stefan_control.problem.expression import CoefficientExpr
from stefan_control.problem.problem_data import ProblemData
from stefan_control.utils.logger import get_logger

logger = get_logger(__name__)

TEST_FUNCTION_TOL = 1e-12


@dataclass(frozen=True)
class CostBreakdown:
    boundary_term: float
    front_term: float
    total: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def cost_from_deviations(boundary_dev, front_dev, tau: float, beta0: float, beta1: float) -> CostBreakdown:
    boundary_term = float(beta0 * tau * np.sum(np.square(boundary_dev)))
    front_term = float(beta1 * tau * np.sum(np.square(front_dev)))
    return CostBreakdown(boundary_term, front_term, boundary_term + front_term)


def measurement_averages(problem: ProblemData, times: np.ndarray, points: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """nu_k, mu_k for k = 1..n as Steklov averages or point samples, per the problem's mode."""
    if problem.measurement_mode == "point":
        return problem.nu(times[1:]), problem.mu(times[1:])
    return time_averages(problem.nu, times, points), time_averages(problem.mu, times, points)


def discrete_cost(st: DiscreteState, problem: ProblemData | None = None) -> CostBreakdown:
    """beta0 tau sum (u_0(k) - nu_k)^2 + beta1 tau sum (u_front(k) - mu_k)^2 over k = 1..n.

    Measurements and weights come from ``problem`` when given, otherwise from the state's problem.
    """
    if problem is None or problem is st.problem:
        problem = st.problem
        nu, mu = st.averages.nu[1:], st.averages.mu[1:]
    else:
        nu, mu = measurement_averages(problem, st.time_grid.nodes)
    boundary_dev = st.layers[1:, 0] - nu
    front_dev = st.front_values()[1:] - mu
    return cost_from_deviations(boundary_dev, front_dev, st.tau, problem.beta0, problem.beta1)


def continuous_cost_reference(
    problem: ProblemData, v: ContinuousControl, n_ref: int, config: SolverConfig = default_config
) -> float:
    """Stand-in for the continuous cost: discrete cost of the fine-grid solve with the sampled lift of v."""
    if n_ref < 4 * v.discrete.n:
        raise ValueError(f"n_ref={n_ref} must be at least 4x the working n={v.discrete.n}")
    fine = refine_control(v.discrete, n_ref)
    return discrete_cost(run_forward(problem, fine, config=config)).total


def _segment_rule(breaks: np.ndarray, unit: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    widths = np.diff(breaks)
    x = (breaks[:-1, None] + widths[:, None] * unit).ravel()
    w = (widths[:, None] * weights).ravel()
    return x, w


def weak_residual(
    st: DiscreteState, problem: ProblemData, v: ContinuousControl, test_function: CoefficientExpr, points: int = 4
) -> float:
    """Left side of the weak identity with u replaced by the piecewise-constant-in-time interpolant.

    Space integrals run over [0, s^n(t)] with breakpoints at the layer's nodes and their mirror images.
    """
    nodes = st.grid.nodes
    if np.max(np.abs(test_function.evaluate(nodes, problem.T))) > TEST_FUNCTION_TOL:
        raise ValueError(f"test function '{test_function.source}' must vanish at t = T")

    phi_x = test_function.diff("x")
    phi_t = test_function.diff("t")
    unit, weights = gauss_rule(points)
    sub = np.concatenate([(unit + j) / TRACE_SUBINTERVALS for j in range(TRACE_SUBINTERVALS)])
    sub_weights = np.tile(weights / TRACE_SUBINTERVALS, TRACE_SUBINTERVALS)

    total = 0.0
    for k in range(1, st.n + 1):
        t_q = st.time_grid.nodes[k - 1] + st.tau * sub
        w_q = st.tau * sub_weights
        s_q, ds_q, g_q = eval_control(v, t_q)
        m = st.grid.boundary_index(k)
        prefix = nodes[: m + 1]
        candidates = np.unique(np.concatenate([prefix, 2.0 * prefix[-1] - prefix[::-1]]))

        for t, w, front in zip(t_q, w_q, s_q, strict=True):
            breaks = np.append(candidates[candidates < front], front)
            x, wx = _segment_rule(breaks, unit, weights)
            u = st.layer_function(k, x)
            u_x = st.layer_slope(k, x)
            test = test_function.evaluate(x, t)
            integrand = (
                problem.a.evaluate(x, t) * u_x * phi_x.evaluate(x, t)
                - problem.b.evaluate(x, t) * u_x * test
                - problem.c.evaluate(x, t) * u * test
                - u * phi_t.evaluate(x, t)
                + problem.f.evaluate(x, t) * test
            )
            total += w * float(np.sum(wx * integrand))

        u_front = st.layer_function(k, s_q)
        boundary = g_q * test_function.evaluate(0.0, t_q)
        free = (problem.gamma.evaluate(s_q, t_q) * ds_q - u_front * ds_q - problem.chi.evaluate(s_q, t_q)) * (
            test_function.evaluate(s_q, t_q)
        )
        total += float(np.sum(w_q * (boundary + free)))

    m0 = st.grid.boundary_index(0)
    x, wx = _segment_rule(nodes[: m0 + 1], unit, weights)
    total -= float(np.sum(wx * problem.phi.evaluate(x, 0.0) * test_function.evaluate(x, 0.0)))
    return total
