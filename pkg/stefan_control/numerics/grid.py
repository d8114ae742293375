"""Time grid and the control-dependent nested spatial grid."""

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from stefan_control.errors import InfeasibleGeometryError


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n: int

    @property
    def tau(self) -> float:
        return self.T / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        nodes = np.arange(self.n + 1, dtype=float) * self.tau
        nodes[-1] = self.T
        return nodes


def build_time_grid(T: float, n: int) -> TimeGrid:
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return TimeGrid(T=float(T), n=int(n))


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    """Nodes x_0..x_N on [0, l] containing every s_k exactly.

    ``level_sizes[j]`` is the node index of the j-th smallest boundary value,
    ``permutation`` sorts s stably and ``boundary[k]`` is the node index of s_k.
    """

    nodes: np.ndarray
    level_sizes: np.ndarray
    permutation: np.ndarray
    boundary: np.ndarray
    h: float
    h_bar: float | None

    @property
    def N(self) -> int:
        return self.nodes.size - 1

    @cached_property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def l(self) -> float:  # noqa: E743
        return float(self.nodes[-1])

    def boundary_index(self, k: int) -> int:
        return int(self.boundary[k])


def build_spatial_grid(s, l: float, tau: float, c_h: float = 1.0) -> SpatialGrid:
    """Nested grid: uniform base cells on [0, s_min], gaps between sorted s values
    split into uniform cells no wider than h, and a uniform tail up to l.
    """
    s = np.asarray(s, dtype=float)
    if c_h <= 0 or tau <= 0:
        raise ValueError("c_h and tau must be positive")
    if s.ndim != 1 or s.size < 1 or np.any(s <= 0.0) or np.any(s > l):
        raise InfeasibleGeometryError(f"boundary samples must lie in (0, {l}]")

    permutation = np.argsort(s, kind="stable")
    sorted_s = s[permutation]

    m0 = math.ceil(sorted_s[0] / (c_h * math.sqrt(tau)))
    h = sorted_s[0] / m0
    pieces = [np.arange(m0, dtype=float) * h, [sorted_s[0]]]
    level_sizes = np.empty(s.size, dtype=int)
    level_sizes[0] = m0
    size = m0
    for j in range(1, s.size):
        gap = sorted_s[j] - sorted_s[j - 1]
        if gap > 0.0:
            cells = math.ceil(gap / h)
            width = gap / cells
            pieces.append(sorted_s[j - 1] + np.arange(1, cells, dtype=float) * width)
            pieces.append([sorted_s[j]])
            size += cells
        level_sizes[j] = size

    h_bar = None
    remainder = l - sorted_s[-1]
    if remainder > 0.0:
        cells = math.ceil(remainder / h)
        h_bar = remainder / cells
        pieces.append(sorted_s[-1] + np.arange(1, cells, dtype=float) * h_bar)
        pieces.append([float(l)])

    nodes = np.concatenate([np.asarray(piece, dtype=float) for piece in pieces])
    boundary = np.empty(s.size, dtype=int)
    boundary[permutation] = level_sizes
    return SpatialGrid(
        nodes=nodes,
        level_sizes=level_sizes,
        permutation=permutation,
        boundary=boundary,
        h=h,
        h_bar=h_bar,
    )


def boundary_index(grid: SpatialGrid, k: int) -> int:
    return grid.boundary_index(k)
