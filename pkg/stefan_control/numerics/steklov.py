"""Steklov averages of coefficients, measurements and free-boundary traces."""

import threading
from collections import OrderedDict
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from stefan_control.config.solver_config import SolverConfig, default_config
from stefan_control.numerics.control import ContinuousControl, DiscreteControl, eval_control, lift_Pn
from stefan_control.numerics.grid import SpatialGrid, TimeGrid
from stefan_control.problem.expression import CoefficientExpr
from stefan_control.problem.problem_data import ProblemData
from stefan_control.utils.logger import get_logger

logger = get_logger(__name__)

TRACE_SUBINTERVALS = 2


def gauss_rule(points: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes in [0, 1] and weights summing to 1."""
    x, w = np.polynomial.legendre.leggauss(points)
    return 0.5 * (x + 1.0), 0.5 * w


def _map(left: np.ndarray, width, unit: np.ndarray) -> np.ndarray:
    return np.asarray(left)[..., None] + np.asarray(width)[..., None] * unit


class _AverageCache:
    """LRU memo of cell-average tables; lookups and inserts are serialized by a lock."""

    def __init__(self, max_entries: int):
        self._entries: OrderedDict[tuple, np.ndarray] = OrderedDict()
        self._max_entries = max_entries
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get_or_compute(self, key: tuple, compute: Callable[[], np.ndarray]) -> np.ndarray:
        with self._lock:
            cached = self._entries.get(key)
            if cached is not None:
                self._entries.move_to_end(key)
                self.hits += 1
                return cached
            self.misses += 1
        value = compute()
        value.setflags(write=False)
        with self._lock:
            self._entries[key] = value
            self._entries.move_to_end(key)
            while len(self._entries) > self._max_entries:
                self._entries.popitem(last=False)
        return value

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()
            self.hits = 0
            self.misses = 0


_cache = _AverageCache(default_config.cache_size)


def get_average_cache() -> _AverageCache:
    return _cache


def cell_averages(d: CoefficientExpr, nodes: np.ndarray, times: np.ndarray, points: int = 4) -> np.ndarray:
    """Averages of d over every [x_i, x_{i+1}] x [t_{k-1}, t_k]; shape (n, N)."""
    n, N = times.size - 1, nodes.size - 1
    if d.is_constant:
        return np.full((n, N), float(d.evaluate(0.0, 0.0)))
    unit, weights = gauss_rule(points)
    x = _map(nodes[:-1], np.diff(nodes), unit)  # (N, p)
    t = _map(times[:-1], np.diff(times), unit)  # (n, p)
    values = d.evaluate(x[None, :, :, None], t[:, None, None, :])  # (n, N, p, p)
    return np.einsum("knij,i,j->kn", values, weights, weights)


def cell_average(d: CoefficientExpr, grid: SpatialGrid, time_grid: TimeGrid, i: int, k: int, points: int = 4) -> float:
    if not (0 <= i < grid.N and 1 <= k <= time_grid.n):
        raise IndexError(f"cell ({i}, {k}) outside the grid")
    nodes = grid.nodes[i : i + 2]
    times = time_grid.nodes[k - 1 : k + 1]
    return float(cell_averages(d, nodes, times, points)[0, 0])


def time_averages(h: Callable, times: np.ndarray, points: int = 4) -> np.ndarray:
    """Averages of h over every [t_{k-1}, t_k]; length n."""
    unit, weights = gauss_rule(points)
    t = _map(times[:-1], np.diff(times), unit)
    return np.asarray(h(t), dtype=float).reshape(t.shape) @ weights


def time_average(h: Callable, time_grid: TimeGrid, k: int, points: int = 4) -> float:
    if not 1 <= k <= time_grid.n:
        raise IndexError(f"time cell {k} outside 1..{time_grid.n}")
    return float(time_averages(h, time_grid.nodes[k - 1 : k + 1], points)[0])


def _trace_points(c: ContinuousControl, points: int) -> tuple[np.ndarray, np.ndarray]:
    unit, weights = gauss_rule(points)
    sub = np.concatenate([(unit + j) / TRACE_SUBINTERVALS for j in range(TRACE_SUBINTERVALS)])
    sub_weights = np.tile(weights / TRACE_SUBINTERVALS, TRACE_SUBINTERVALS)
    t = _map(c.times[:-1], np.diff(c.times), sub)  # (n, 2p)
    return t, sub_weights


def trace_averages_all(
    c: ContinuousControl, gamma: CoefficientExpr, chi: CoefficientExpr, points: int = 4
) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell averages of gamma(s^n, t) s^n'(t) and chi(s^n, t); each of length n."""
    t, weights = _trace_points(c, points)
    s_val, ds_val, _ = eval_control(c, t)
    gamma_ds = (gamma.evaluate(s_val, t) * ds_val) @ weights
    chi_avg = chi.evaluate(s_val, t) @ weights
    return gamma_ds, chi_avg


def trace_averages(
    c: ContinuousControl, gamma: CoefficientExpr, chi: CoefficientExpr, k: int, points: int = 4
) -> tuple[float, float]:
    if not 1 <= k <= c.discrete.n:
        raise IndexError(f"time cell {k} outside 1..{c.discrete.n}")
    gamma_ds, chi_avg = trace_averages_all(c, gamma, chi, points)
    return float(gamma_ds[k - 1]), float(chi_avg[k - 1])


@dataclass(frozen=True, eq=False)
class AveragedCoefficients:
    """Averaged inputs of the scheme; row/entry 0 is unused and zero.

    a, b, c, f have shape (n+1, N); g, nu, mu, gamma_ds, chi have length n+1.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    f: np.ndarray
    g: np.ndarray
    nu: np.ndarray
    mu: np.ndarray
    gamma_ds: np.ndarray
    chi: np.ndarray


def _pad(values: np.ndarray) -> np.ndarray:
    return np.concatenate([np.zeros((1, *values.shape[1:])), values])


def build_averages(
    problem: ProblemData,
    time_grid: TimeGrid,
    grid: SpatialGrid,
    control: DiscreteControl,
    config: SolverConfig = default_config,
) -> AveragedCoefficients:
    points = config.quad_points
    times = time_grid.nodes
    key_grid = (grid.nodes.tobytes(), times.tobytes(), points)

    def averaged(expr: CoefficientExpr) -> np.ndarray:
        return _cache.get_or_compute((expr.source, *key_grid), lambda: cell_averages(expr, grid.nodes, times, points))

    if problem.measurement_mode == "steklov":
        nu = time_averages(problem.nu, times, points)
        mu = time_averages(problem.mu, times, points)
    else:
        nu = problem.nu(times[1:])
        mu = problem.mu(times[1:])

    lifted = lift_Pn(control)
    gamma_ds, chi = trace_averages_all(lifted, problem.gamma, problem.chi, points)
    g = 0.5 * (control.g[:-1] + control.g[1:])

    return AveragedCoefficients(
        a=_pad(averaged(problem.a)),
        b=_pad(averaged(problem.b)),
        c=_pad(averaged(problem.c)),
        f=_pad(averaged(problem.f)),
        g=_pad(g),
        nu=_pad(nu),
        mu=_pad(mu),
        gamma_ds=_pad(gamma_ds),
        chi=_pad(chi),
    )
