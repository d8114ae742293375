"""Discrete and continuous controls, discrete Sobolev norms and the sampling/lifting maps."""

from collections.abc import Callable
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from stefan_control.errors import InfeasibleGeometryError
from stefan_control.problem.expression import CoefficientExpr
from stefan_control.utils.logger import get_logger

logger = get_logger(__name__)

PROJECTION_TOL = 1e-12

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True, eq=False)
class DiscreteControl:
    """Samples s_0..s_n and g_0..g_n on the uniform time grid with step tau (s_{-1} := s_0)."""

    s: np.ndarray
    g: np.ndarray
    tau: float

    def __post_init__(self):
        s = np.array(self.s, dtype=float)
        g = np.array(self.g, dtype=float)
        if s.ndim != 1 or s.shape != g.shape or s.size < 2:
            raise ValueError("s and g must be 1-d sequences of equal length n+1 >= 2")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        s.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "g", g)

    @property
    def n(self) -> int:
        return self.s.size - 1

    @property
    def T(self) -> float:
        return self.n * self.tau

    def replace(self, s=None, g=None) -> "DiscreteControl":
        return DiscreteControl(self.s if s is None else s, self.g if g is None else g, self.tau)


@dataclass(frozen=True)
class NormReport:
    s_norm_sq: float
    g_norm_sq: float

    @property
    def max_norm_sq(self) -> float:
        return max(self.s_norm_sq, self.g_norm_sq)


def discrete_norms(v: DiscreteControl) -> NormReport:
    tau = v.tau
    s_ext = np.concatenate(([v.s[0]], v.s))
    first = np.diff(v.s) / tau
    second = np.diff(s_ext, 2) / tau**2
    s_norm_sq = tau * (np.sum(v.s[:-1] ** 2) + np.sum(first**2) + np.sum(second**2))
    g_norm_sq = tau * (np.sum(v.g[:-1] ** 2) + np.sum((np.diff(v.g) / tau) ** 2))
    return NormReport(float(s_norm_sq), float(g_norm_sq))


def is_feasible_discrete(v: DiscreteControl, delta: float, l: float, R: float) -> bool:  # noqa: E741
    if np.any(v.s < delta) or np.any(v.s > l):
        return False
    return discrete_norms(v).max_norm_sq <= R * R


def _eval_t(fn: CoefficientExpr | Callable, t: np.ndarray) -> np.ndarray:
    if isinstance(fn, CoefficientExpr):
        return fn.evaluate(0.0, t)
    return np.asarray(fn(t), dtype=float) * np.ones_like(t)


def sample_Qn(s: CoefficientExpr | Callable, g: CoefficientExpr | Callable, n: int, T: float) -> DiscreteControl:
    """Pointwise samples s(t_k), g(t_k) on the uniform grid with n steps."""
    if n < 1:
        raise ValueError("n must be >= 1")
    tau = T / n
    t = np.arange(n + 1, dtype=float) * tau
    t[-1] = T
    return DiscreteControl(_eval_t(s, t), _eval_t(g, t), tau)


@dataclass(frozen=True, eq=False)
class ContinuousControl:
    """C^1 piecewise-quadratic lift of s and piecewise-linear lift of g.

    On [t_{k-1}, t_k]: s^n(t) = s_{k-1} + (t - t_{k-1} - tau/2) d_{k-1} + (t - t_{k-1})^2 q_{k-1} / 2,
    with d_k the backward difference (d_0 = 0) and q_k = (d_{k+1} - d_k) / tau.
    For k = 1 this is s_0 + t^2 d_1 / (2 tau).
    """

    discrete: DiscreteControl

    @cached_property
    def first_diffs(self) -> np.ndarray:
        return np.concatenate(([0.0], np.diff(self.discrete.s) / self.discrete.tau))

    @cached_property
    def second_diffs(self) -> np.ndarray:
        return np.diff(self.first_diffs) / self.discrete.tau

    @cached_property
    def times(self) -> np.ndarray:
        v = self.discrete
        t = np.arange(v.n + 1, dtype=float) * v.tau
        t[-1] = v.T
        return t

    @property
    def T(self) -> float:
        return self.discrete.T

    def cell_index(self, t) -> np.ndarray:
        v = self.discrete
        return np.clip(np.floor(np.asarray(t, dtype=float) / v.tau).astype(int) + 1, 1, v.n)


def lift_Pn(v: DiscreteControl) -> ContinuousControl:
    return ContinuousControl(v)


def eval_control(c: ContinuousControl, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (s^n(t), s^n'(t), g^n(t)); past T the values freeze at s^n(T), 0, g_n."""
    v = c.discrete
    t = np.asarray(t, dtype=float)
    beyond = t > v.T
    t_in = np.clip(t, 0.0, v.T)
    k = c.cell_index(t_in)
    local = t_in - (k - 1) * v.tau
    d = c.first_diffs[k - 1]
    q = c.second_diffs[k - 1]
    s_val = v.s[k - 1] + (local - 0.5 * v.tau) * d + 0.5 * local**2 * q
    ds_val = d + local * q
    ds_val = np.where(beyond, 0.0, ds_val)
    g_val = np.interp(t, c.times, v.g)
    return s_val, ds_val, g_val


def continuous_norms(c: ContinuousControl) -> NormReport:
    """||s^n||^2 in W_2^2(0,T) and ||g^n||^2 in W_2^1(0,T), exact by per-cell Gauss quadrature."""
    v = c.discrete
    left = c.times[:-1]
    t = (left[:, None] + 0.5 * v.tau * (_GAUSS_X[None, :] + 1.0)).ravel()
    weights = np.tile(0.5 * v.tau * _GAUSS_W, v.n)
    s_val, ds_val, g_val = eval_control(c, t)
    s_norm_sq = np.sum(weights * (s_val**2 + ds_val**2)) + v.tau * np.sum(c.second_diffs**2)
    g_norm_sq = np.sum(weights * g_val**2) + v.tau * np.sum((np.diff(v.g) / v.tau) ** 2)
    return NormReport(float(s_norm_sq), float(g_norm_sq))


def max_slope(v: DiscreteControl) -> float:
    """max_k |s_k - s_{k-1}| / tau."""
    return float(np.max(np.abs(np.diff(v.s))) / v.tau)


def project_to_feasible(v: DiscreteControl, delta: float, l: float, R: float) -> DiscreteControl:  # noqa: E741
    """Clip s into [delta, l] with s_0 pinned, then shrink radially toward (s_0, 0) into the ball."""
    s0 = float(v.s[0])
    if not delta <= s0 <= l:
        raise InfeasibleGeometryError(f"s0={s0} outside [{delta}, {l}]")
    if is_feasible_discrete(v, delta, l, R):
        return v

    clipped = np.clip(v.s, delta, l)
    clipped[0] = s0
    candidate = v.replace(s=clipped)
    if is_feasible_discrete(candidate, delta, l, R):
        return candidate

    center = v.replace(s=np.full_like(clipped, s0), g=np.zeros_like(v.g))
    if not is_feasible_discrete(center, delta, l, R):
        raise InfeasibleGeometryError(f"constant control s0={s0} already violates the ball of radius R={R}")

    def shrink(lam: float) -> DiscreteControl:
        return v.replace(s=s0 + lam * (clipped - s0), g=lam * v.g)

    lo, hi = 0.0, 1.0
    while hi - lo > PROJECTION_TOL:
        mid = 0.5 * (lo + hi)
        if is_feasible_discrete(shrink(mid), delta, l, R):
            lo = mid
        else:
            hi = mid
    logger.debug(f"Projected control onto the ball with lambda={lo:.12f}")
    return shrink(lo)


def refine_control(v: DiscreteControl, n: int) -> DiscreteControl:
    """Warm start on a finer grid: sample the lifted control at n steps."""
    c = lift_Pn(v)
    T = v.T
    t = np.arange(n + 1, dtype=float) * (T / n)
    t[-1] = T
    s_val, _, g_val = eval_control(c, t)
    s_val[0] = v.s[0]
    return DiscreteControl(s_val, g_val, T / n)
