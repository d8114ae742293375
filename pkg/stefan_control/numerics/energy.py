"""Energy-estimate diagnostics: both sides of the first and second stability bounds."""

import math
from collections.abc import Callable
from dataclasses import asdict, dataclass

import numpy as np

from stefan_control.config.solver_config import SolverConfig, default_config
from stefan_control.numerics.control import ContinuousControl, DiscreteControl, eval_control, lift_Pn
from stefan_control.numerics.state import DiscreteState, run_forward
from stefan_control.numerics.steklov import gauss_rule
from stefan_control.problem.problem_data import ProblemData

FRAC_ROW_CHUNK = 512
TRACE_SAMPLES_PER_STEP = 4


@dataclass(frozen=True)
class EnergyReport:
    first_lhs: float
    first_rhs_data: float
    second_lhs: float
    second_rhs_data: float

    @property
    def first_ratio(self) -> float:
        return self.first_lhs / self.first_rhs_data if self.first_rhs_data > 0 else math.nan

    @property
    def second_ratio(self) -> float:
        return self.second_lhs / self.second_rhs_data if self.second_rhs_data > 0 else math.nan

    def to_dict(self) -> dict[str, float]:
        return {**asdict(self), "first_ratio": self.first_ratio, "second_ratio": self.second_ratio}


def build_u_tilde(st: DiscreteState) -> np.ndarray:
    """Layers with every entry past the front replaced by the front value."""
    index = np.arange(st.grid.N + 1)
    front = st.front_values()
    return np.where(index[None, :] <= st.boundary[:, None], st.layers, front[:, None])


def frac_norm_quarter(samples, T: float) -> float:
    """W_2^{1/4}(0, T) norm of the piecewise-linear interpolant of uniform samples.

    The L2 part is exact; the double integral of |u(t) - u(r)|^2 / |t - r|^{3/2}
    uses the midpoint rule over off-diagonal cell pairs.
    """
    u = np.asarray(samples, dtype=float)
    if u.size < 2:
        raise ValueError("frac_norm_quarter needs at least 2 samples")
    M = u.size - 1
    step = T / M
    l2_sq = step * np.sum(u[:-1] ** 2 + u[:-1] * u[1:] + u[1:] ** 2) / 3.0

    mid = 0.5 * (u[:-1] + u[1:])
    centers = (np.arange(M) + 0.5) * step
    double = 0.0
    for start in range(0, M, FRAC_ROW_CHUNK):
        rows = slice(start, min(start + FRAC_ROW_CHUNK, M))
        gap = np.abs(centers[rows, None] - centers[None, :])
        diff_sq = (mid[rows, None] - mid[None, :]) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            kernel = np.where(gap > 0.0, diff_sq / gap**1.5, 0.0)
        double += float(np.sum(kernel))
    return math.sqrt(l2_sq + step * step * double)


def _layer_l2_sq(values: np.ndarray, widths: np.ndarray) -> np.ndarray:
    return np.sum(widths * values[..., :-1] ** 2, axis=-1)


def _phi_norms(problem: ProblemData, st: DiscreteState) -> tuple[float, float]:
    """||phi^n||^2 in L2(0, s0) of the nodal interpolant and ||phi||^2 in W_2^1(0, s0)."""
    m0 = st.grid.boundary_index(0)
    nodes = st.grid.nodes[: m0 + 1]
    phi_nodes = st.layers[0, : m0 + 1]
    h = np.diff(nodes)
    interp_sq = float(np.sum(h * (phi_nodes[:-1] ** 2 + phi_nodes[:-1] * phi_nodes[1:] + phi_nodes[1:] ** 2)) / 3.0)
    unit, weights = gauss_rule(4)
    x = (nodes[:-1, None] + h[:, None] * unit).ravel()
    w = (h[:, None] * weights).ravel()
    phi = problem.phi.evaluate(x, 0.0)
    phi_x = problem.phi.diff("x").evaluate(x, 0.0)
    return interp_sq, float(np.sum(w * (phi**2 + phi_x**2)))


def _f_norm_sq(problem: ProblemData, st: DiscreteState) -> float:
    unit, weights = gauss_rule(4)
    nodes, times = st.grid.nodes, st.time_grid.nodes
    x = (nodes[:-1, None] + np.diff(nodes)[:, None] * unit).ravel()
    wx = (np.diff(nodes)[:, None] * weights).ravel()
    t = (times[:-1, None] + st.tau * unit).ravel()
    wt = np.tile(st.tau * weights, st.n)
    values = problem.f.evaluate(x[:, None], t[None, :])
    return float(wx @ values**2 @ wt)


def _trace_samples(problem: ProblemData, c: ContinuousControl, samples: int) -> dict[str, np.ndarray]:
    t = np.linspace(0.0, c.T, samples + 1)
    s_val, ds_val, g_val = eval_control(c, t)
    return {
        "g": g_val,
        "gamma_ds": problem.gamma.evaluate(s_val, t) * ds_val,
        "chi": problem.chi.evaluate(s_val, t),
    }


def _l2_sq(samples: np.ndarray, T: float) -> float:
    step = T / (samples.size - 1)
    return float(step * np.sum(samples[:-1] ** 2 + samples[:-1] * samples[1:] + samples[1:] ** 2) / 3.0)


def _front_growth_term(st: DiscreteState) -> float:
    """sum_k 1_+(s_{k+1} - s_k) sum_{i = m_k}^{m_{k+1} - 1} h_i u_i(k)^2 over k = 1..n-1."""
    total = 0.0
    h = st.grid.widths
    for k in range(1, st.n):
        lo, hi = st.boundary[k], st.boundary[k + 1]
        if st.control.s[k + 1] > st.control.s[k]:
            total += float(np.sum(h[lo:hi] * st.layers[k, lo:hi] ** 2))
    return total


def first_energy(
    st: DiscreteState, problem: ProblemData | None = None, v: ContinuousControl | None = None
) -> tuple[float, float]:
    """(lhs, data side) of the first energy estimate."""
    problem = problem or st.problem
    v = v or lift_Pn(st.control)
    h = st.grid.widths
    mass = _layer_l2_sq(st.layers, h)
    gradient = np.diff(st.layers[1:], axis=1) / h
    lhs = float(np.max(mass) + st.tau * np.sum(h * gradient**2))

    phi_interp_sq, _ = _phi_norms(problem, st)
    traces = _trace_samples(problem, v, TRACE_SAMPLES_PER_STEP * st.n)
    data = (
        phi_interp_sq
        + _l2_sq(traces["g"], v.T)
        + _f_norm_sq(problem, st)
        + _l2_sq(traces["gamma_ds"], v.T)
        + _l2_sq(traces["chi"], v.T)
        + _front_growth_term(st)
    )
    return lhs, float(data)


def second_energy(
    st: DiscreteState, problem: ProblemData | None = None, v: ContinuousControl | None = None
) -> tuple[float, float]:
    """(lhs, data side) of the second energy estimate, built from the front-frozen layers."""
    problem = problem or st.problem
    v = v or lift_Pn(st.control)
    h = st.grid.widths
    u_tilde = build_u_tilde(st)
    u_x = np.diff(u_tilde, axis=1) / h  # (n+1, N)
    u_t = np.diff(u_tilde, axis=0) / st.tau  # (n, N+1)
    u_xt = np.diff(u_x, axis=0) / st.tau  # (n, N)

    active = np.arange(st.grid.N)[None, :] < st.boundary[1:, None]
    weighted = active * h
    gradient_max = float(np.max(np.sum(weighted * u_x[1:] ** 2, axis=1)))
    time_term = st.tau * float(np.sum(weighted * u_t[:, :-1] ** 2))
    mixed_term = st.tau**2 * float(np.sum(weighted * u_xt**2))
    lhs = gradient_max + time_term + mixed_term

    phi_interp_sq, phi_w21_sq = _phi_norms(problem, st)
    traces = _trace_samples(problem, v, TRACE_SAMPLES_PER_STEP * st.n)
    data = (
        phi_interp_sq
        + phi_w21_sq
        + frac_norm_quarter(traces["g"], v.T) ** 2
        + frac_norm_quarter(traces["gamma_ds"], v.T) ** 2
        + frac_norm_quarter(traces["chi"], v.T) ** 2
        + _f_norm_sq(problem, st)
    )
    return lhs, float(data)


def energy_report(st: DiscreteState) -> EnergyReport:
    v = lift_Pn(st.control)
    first_lhs, first_rhs = first_energy(st, v=v)
    second_lhs, second_rhs = second_energy(st, v=v)
    return EnergyReport(first_lhs, first_rhs, second_lhs, second_rhs)


def energy_sweep(
    problem: ProblemData,
    control_for: Callable[[int], DiscreteControl],
    ns: list[int],
    config: SolverConfig = default_config,
) -> list[tuple[int, EnergyReport]]:
    """Energy reports for one control family over a list of n."""
    return [(n, energy_report(run_forward(problem, control_for(n), config=config))) for n in ns]
