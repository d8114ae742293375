from pathlib import Path
from typing import Annotated, Literal

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, model_validator

from stefan_control.errors import ExpressionDomainError, ProblemConfigError
from stefan_control.problem.expression import CoefficientExpr, constant, parse_expression
from stefan_control.utils.logger import get_logger

logger = get_logger(__name__)

ELLIPTICITY_LATTICE = 51


class MeasurementSeries:
    """A measurement function of t: an expression, linear samples, or a step series.

    Step series hold value v_j on (t_{j-1}, t_j] where ``times`` are the right
    endpoints; the first value also covers t <= t_0.
    """

    def __init__(
        self,
        kind: Literal["expression", "samples", "step"],
        expr: CoefficientExpr | None = None,
        times: np.ndarray | None = None,
        values: np.ndarray | None = None,
    ):
        self.kind = kind
        self.expr = expr
        self.times = None if times is None else np.asarray(times, dtype=float)
        self.values = None if values is None else np.asarray(values, dtype=float)
        if kind == "expression":
            if expr is None:
                raise ValueError("expression series needs an expression")
            if "x" in expr.depends_on():
                raise ValueError(f"measurement '{expr.source}' must depend on t only")
        else:
            if self.times is None or self.values is None or self.times.shape != self.values.shape:
                raise ValueError("sampled series needs matching times and values")
            if self.times.size < 1 or np.any(np.diff(self.times) <= 0):
                raise ValueError("sample times must be strictly increasing")

    @classmethod
    def from_expression(cls, source: str | CoefficientExpr) -> "MeasurementSeries":
        expr = source if isinstance(source, CoefficientExpr) else parse_expression(source)
        return cls("expression", expr=expr)

    @classmethod
    def from_samples(cls, times, values) -> "MeasurementSeries":
        return cls("samples", times=times, values=values)

    @classmethod
    def from_steps(cls, right_endpoints, values) -> "MeasurementSeries":
        return cls("step", times=right_endpoints, values=values)

    @classmethod
    def from_csv(cls, path: str | Path, interpolation: str = "linear") -> "MeasurementSeries":
        """Read a ``t,value`` CSV series."""
        path = Path(path)
        if not path.is_file():
            raise ProblemConfigError(f"measurement file not found: {path}")
        with path.open(encoding="utf-8") as handle:
            header = handle.readline().strip().replace(" ", "")
        if header != "t,value":
            raise ProblemConfigError(f"{path}: expected header 't,value', found '{header}'")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if interpolation == "linear":
            return cls.from_samples(data[:, 0], data[:, 1])
        if interpolation == "step":
            return cls.from_steps(data[:, 0], data[:, 1])
        raise ProblemConfigError(f"{path}: unknown interpolation '{interpolation}'")

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "expression":
            return self.expr.evaluate(0.0, t)
        if self.kind == "samples":
            return np.interp(t, self.times, self.values)
        index = np.clip(np.searchsorted(self.times, t, side="left"), 0, self.times.size - 1)
        return self.values[index]

    def __call__(self, t):
        return self.evaluate(t)

    def fingerprint(self) -> str:
        """Stable text identifying the series, used for cache keys and run manifests."""
        if self.kind == "expression":
            return f"expr:{self.expr.source}"
        return f"{self.kind}:{self.times.tobytes().hex()}:{self.values.tobytes().hex()}"


def _as_expr(value):
    if isinstance(value, CoefficientExpr):
        return value
    if isinstance(value, bool):
        raise ValueError("expected an expression")
    if isinstance(value, int | float):
        return constant(value)
    if isinstance(value, str):
        return parse_expression(value)
    raise ValueError(f"cannot build an expression from {value!r}")


def _as_series(value):
    if isinstance(value, MeasurementSeries):
        return value
    return MeasurementSeries.from_expression(_as_expr(value))


Expr = Annotated[CoefficientExpr, BeforeValidator(_as_expr)]
Series = Annotated[MeasurementSeries, BeforeValidator(_as_series)]


class ProblemData(BaseModel):
    """Coefficients, data and control-set parameters of one inverse Stefan problem."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    a: Expr = Field(default_factory=lambda: constant(1.0))
    b: Expr = Field(default_factory=lambda: constant(0.0))
    c: Expr = Field(default_factory=lambda: constant(0.0))
    f: Expr = Field(default_factory=lambda: constant(0.0))
    gamma: Expr = Field(default_factory=lambda: constant(0.0))
    chi: Expr = Field(default_factory=lambda: constant(0.0))
    phi: Expr = Field(default_factory=lambda: constant(0.0))
    nu: Series = Field(default_factory=lambda: MeasurementSeries.from_expression("0"))
    mu: Series = Field(default_factory=lambda: MeasurementSeries.from_expression("0"))
    T: float = Field(gt=0)
    l: float = Field(gt=0)  # noqa: E741
    s0: float = Field(gt=0)
    delta: float = Field(gt=0)
    R: float = Field(gt=0)
    beta0: float = Field(default=1.0, ge=0)
    beta1: float = Field(default=1.0, ge=0)
    a0: float = Field(default=1.0, gt=0)
    measurement_mode: Literal["steklov", "point"] = "steklov"

    @model_validator(mode="after")
    def _check_consistency(self) -> "ProblemData":
        if not self.delta <= self.s0 <= self.l:
            raise ValueError(f"s0={self.s0} must lie in [delta, l] = [{self.delta}, {self.l}]")
        if self.beta0 == 0 and self.beta1 == 0:
            raise ValueError("beta0 and beta1 must not both be zero")
        if "t" in self.phi.depends_on():
            raise ValueError(f"phi '{self.phi.source}' must depend on x only")
        xs = np.linspace(0.0, self.l, ELLIPTICITY_LATTICE)
        ts = np.linspace(0.0, self.T, ELLIPTICITY_LATTICE)
        try:
            a_min = float(np.min(self.a.evaluate(xs[:, None], ts[None, :])))
        except ExpressionDomainError as e:
            raise ValueError(f"coefficient a cannot be evaluated on the box: {e}") from e
        if a_min < self.a0:
            raise ValueError(f"coefficient a has sampled minimum {a_min} below a0={self.a0}")
        return self

    def coefficient_bound(self, lattice_points: int = 101) -> float:
        """max(|a|, |b|, |c|) sampled on a lattice of the box."""
        xs = np.linspace(0.0, self.l, lattice_points)[:, None]
        ts = np.linspace(0.0, self.T, lattice_points)[None, :]
        return float(max(np.max(np.abs(e.evaluate(xs, ts))) for e in (self.a, self.b, self.c)))

    def with_measurements(self, nu: MeasurementSeries, mu: MeasurementSeries) -> "ProblemData":
        return self.model_copy(update={"nu": nu, "mu": mu})

    def fingerprint(self) -> dict[str, str]:
        fields = {name: getattr(self, name).source for name in ("a", "b", "c", "f", "gamma", "chi", "phi")}
        fields.update(nu=self.nu.fingerprint(), mu=self.mu.fingerprint())
        for name in ("T", "l", "s0", "delta", "R", "beta0", "beta1", "a0", "measurement_mode"):
            fields[name] = repr(getattr(self, name))
        return fields
