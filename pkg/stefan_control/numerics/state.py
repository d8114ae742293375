"""Discrete state vector: forward march, reflective continuation, summation identity, interpolants."""

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from stefan_control.config.solver_config import SolverConfig, default_config
from stefan_control.numerics.control import DiscreteControl
from stefan_control.numerics.grid import SpatialGrid, TimeGrid, build_spatial_grid, build_time_grid
from stefan_control.numerics.steklov import AveragedCoefficients, build_averages
from stefan_control.numerics.tridiag import assemble_step, check_step_size, solve_step
from stefan_control.problem.problem_data import ProblemData
from stefan_control.utils.logger import get_logger

logger = get_logger(__name__)


def max_folds(l: float, delta: float) -> int:  # noqa: E741
    """Upper bound ceil(1 + log2(l / delta)) on the reflections needed to reach [0, delta]."""
    return math.ceil(1.0 + math.log2(l / delta))


def fold(x, s: float, limit: int) -> tuple[np.ndarray, np.ndarray]:
    """Reflect points x > s back into [0, s] by x <- 2^p s - x.

    Returns the folded points and the number of reflections applied to each,
    whose parity gives the sign of the derivative of the continuation.
    """
    x = np.array(x, dtype=float, copy=True)
    count = np.zeros(x.shape, dtype=int)
    for _ in range(limit):
        out = x > s
        if not np.any(out):
            break
        p = np.maximum(1.0, np.ceil(np.log2(x[out] / s)))
        p = np.where(np.exp2(p) * s < x[out], p + 1.0, p)
        x[out] = np.exp2(p) * s - x[out]
        count[out] += 1
    return np.clip(x, 0.0, s), count


def extend_reflect(values: np.ndarray, grid: SpatialGrid, m: int) -> np.ndarray:
    """Full layer on all nodes from the values on nodes 0..m (front s = x_m)."""
    s = grid.nodes[m]
    layer = np.empty(grid.N + 1)
    layer[: m + 1] = values
    if m < grid.N:
        folded, _ = fold(grid.nodes[m + 1 :], s, max_folds(grid.l, s))
        layer[m + 1 :] = np.interp(folded, grid.nodes[: m + 1], values)
    return layer


@dataclass(frozen=True, eq=False)
class DiscreteState:
    """Layers u(0)..u(n) on all grid nodes; entries past the front hold the reflective continuation."""

    problem: ProblemData
    control: DiscreteControl
    time_grid: TimeGrid
    grid: SpatialGrid
    averages: AveragedCoefficients
    layers: np.ndarray
    tau0: float

    @property
    def n(self) -> int:
        return self.time_grid.n

    @property
    def tau(self) -> float:
        return self.time_grid.tau

    @property
    def boundary(self) -> np.ndarray:
        return self.grid.boundary

    def front_values(self) -> np.ndarray:
        return self.layers[np.arange(self.n + 1), self.grid.boundary]

    def layer_function(self, k: int, x) -> np.ndarray:
        """Piecewise-linear layer k at x, continued by reflection past s_k."""
        m = self.grid.boundary_index(k)
        s = self.grid.nodes[m]
        folded, _ = fold(x, s, max_folds(self.grid.l, s) + 1)
        return np.interp(folded, self.grid.nodes[: m + 1], self.layers[k, : m + 1])

    def layer_slope(self, k: int, x) -> np.ndarray:
        """x-derivative of layer_function (right-continuous on the folded segment)."""
        m = self.grid.boundary_index(k)
        nodes = self.grid.nodes[: m + 1]
        s = nodes[-1]
        folded, count = fold(x, s, max_folds(self.grid.l, s) + 1)
        slopes = np.diff(self.layers[k, : m + 1]) / np.diff(nodes)
        cell = np.clip(np.searchsorted(nodes, folded, side="right") - 1, 0, m - 1)
        return np.where(count % 2 == 0, 1.0, -1.0) * slopes[cell]


def initial_layer(problem: ProblemData, grid: SpatialGrid) -> np.ndarray:
    m0 = grid.boundary_index(0)
    phi = problem.phi.evaluate(grid.nodes[: m0 + 1], 0.0)
    return extend_reflect(phi, grid, m0)


def run_forward(
    problem: ProblemData,
    v: DiscreteControl,
    grid: SpatialGrid | None = None,
    config: SolverConfig = default_config,
) -> DiscreteState:
    """March the implicit scheme over k = 1..n; StepSolveError propagates with its step index."""
    time_grid = build_time_grid(problem.T, v.n)
    if abs(v.tau - time_grid.tau) > 1e-12 * max(1.0, problem.T):
        raise ValueError(f"control step {v.tau} does not match T/n = {time_grid.tau}")
    tau = time_grid.tau
    if grid is None:
        grid = build_spatial_grid(v.s, problem.l, tau, config.c_h)
    tau0 = check_step_size(problem, tau, config)
    averages = build_averages(problem, time_grid, grid, v, config)

    layers = np.empty((v.n + 1, grid.N + 1))
    layers[0] = initial_layer(problem, grid)
    for k in range(1, v.n + 1):
        system = assemble_step(grid, averages, k, layers[k - 1], tau)
        values = solve_step(system, config)
        layers[k] = extend_reflect(values, grid, grid.boundary_index(k))
    layers.setflags(write=False)
    return DiscreteState(
        problem=problem,
        control=v,
        time_grid=time_grid,
        grid=grid,
        averages=averages,
        layers=layers,
        tau0=tau0,
    )


def identity_terms(st: DiscreteState, k: int, eta: np.ndarray, layer: np.ndarray | None = None) -> np.ndarray:
    """Individual terms of the summation identity at step k (their sum is the residual).

    ``layer`` replaces u(k) when given, e.g. to check a perturbed layer.
    """
    m = st.grid.boundary_index(k)
    eta = np.asarray(eta, dtype=float)
    if eta.size != m + 1:
        raise ValueError(f"eta must have length {m + 1}")
    avg = st.averages
    h = st.grid.widths[:m]
    u = st.layers[k, : m + 1] if layer is None else np.asarray(layer, dtype=float)[: m + 1]
    u_prev = st.layers[k - 1, :m]
    u_x = np.diff(u) / h
    eta_x = np.diff(eta) / h
    u_t = (u[:m] - u_prev) / st.tau
    cells = np.concatenate(
        [
            h * avg.a[k, :m] * u_x * eta_x,
            -h * avg.b[k, :m] * u_x * eta[:m],
            -h * avg.c[k, :m] * u[:m] * eta[:m],
            h * avg.f[k, :m] * eta[:m],
            h * u_t * eta[:m],
        ]
    )
    boundary = [(avg.gamma_ds[k] - avg.chi[k]) * eta[m], avg.g[k] * eta[0]]
    return np.concatenate([cells, boundary])


def residual_identity(st: DiscreteState, k: int, eta: np.ndarray, layer: np.ndarray | None = None) -> float:
    return float(np.sum(identity_terms(st, k, eta, layer)))


Interpolant = Literal["u_tau", "u_hat_tau", "u_tilde_tau"]


def _layer_index(st: DiscreteState, t: float) -> int:
    """k with t in (t_{k-1}, t_k]; t = 0 maps to layer 0 and t > T to layer n."""
    return int(min(np.searchsorted(st.time_grid.nodes, t, side="left"), st.n))


def interpolants(st: DiscreteState, x, t: float, which: Interpolant = "u_tau") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if which == "u_tau":
        return st.layer_function(_layer_index(st, t), x)
    if which == "u_hat_tau":
        if t >= st.time_grid.T:
            return st.layer_function(st.n, x)
        k = max(_layer_index(st, t), 1)
        t_prev = st.time_grid.nodes[k - 1]
        weight = (t - t_prev) / st.tau
        return (1.0 - weight) * st.layer_function(k - 1, x) + weight * st.layer_function(k, x)
    if which == "u_tilde_tau":
        k = _layer_index(st, t)
        i = np.clip(np.searchsorted(st.grid.nodes, x, side="right") - 1, 0, st.grid.N - 1)
        return st.layers[k, i]
    raise ValueError(f"unknown interpolant {which!r}")
