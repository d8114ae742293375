"""Problem file ingestion (TOML)."""

import tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from stefan_control.errors import ProblemConfigError
from stefan_control.problem.expression import CoefficientExpr, parse_expression
from stefan_control.problem.manufactured import ManufacturedCase, manufactured_problem
from stefan_control.problem.problem_data import MeasurementSeries, ProblemData
from stefan_control.utils.logger import get_logger

logger = get_logger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainSection(_Section):
    T: float
    l: float  # noqa: E741
    s0: float
    delta: float
    R: float
    a0: float = 1.0


class CostSection(_Section):
    beta0: float = 1.0
    beta1: float = 1.0
    measurement_mode: Literal["steklov", "point"] = "steklov"


class CoefficientsSection(_Section):
    a: str | float = 1.0
    b: str | float = 0.0
    c: str | float = 0.0
    f: str | float = 0.0
    gamma: str | float = 0.0
    chi: str | float = 0.0
    phi: str | float = 0.0
    phi_steklov: bool = False


class SeriesFile(_Section):
    csv: str
    interpolation: Literal["linear", "step"] = "linear"


class MeasurementsSection(_Section):
    nu: str | float | SeriesFile = 0.0
    mu: str | float | SeriesFile = 0.0


class ControlSection(_Section):
    s: str | float
    g: str | float = 0.0


class ManufacturedSection(_Section):
    u: str
    s: str


class ProblemFile(_Section):
    domain: DomainSection
    cost: CostSection = Field(default_factory=CostSection)
    coefficients: CoefficientsSection = Field(default_factory=CoefficientsSection)
    measurements: MeasurementsSection | None = None
    control: ControlSection | None = None
    manufactured: ManufacturedSection | None = None


@dataclass(frozen=True)
class LoadedProblem:
    """A validated problem plus the optional control and manufactured case from its file."""

    problem: ProblemData
    path: Path | None = None
    raw: bytes = b""
    control_s: CoefficientExpr | None = None
    control_g: CoefficientExpr | None = None
    manufactured: ManufacturedCase | None = None


def _expr(value: str | float) -> CoefficientExpr:
    return parse_expression(value if isinstance(value, str) else repr(float(value)))


def _series(value: str | float | SeriesFile, base_dir: Path) -> MeasurementSeries:
    if isinstance(value, SeriesFile):
        path = Path(value.csv)
        if not path.is_absolute():
            path = base_dir / path
        return MeasurementSeries.from_csv(path, value.interpolation)
    return MeasurementSeries.from_expression(_expr(value))


def build_problem(document: dict, base_dir: Path = Path(".")) -> LoadedProblem:
    """Validate a parsed problem document and build the ProblemData it describes."""
    try:
        parsed = ProblemFile.model_validate(document)
    except ValidationError as e:
        raise ProblemConfigError(f"invalid problem file: {e}") from e

    coefficients = parsed.coefficients
    if coefficients.phi_steklov:
        raise ProblemConfigError("phi_steklov (Steklov-averaged initial data) is not implemented")

    measurements = parsed.measurements or MeasurementsSection()
    try:
        problem = ProblemData(
            a=_expr(coefficients.a),
            b=_expr(coefficients.b),
            c=_expr(coefficients.c),
            f=_expr(coefficients.f),
            gamma=_expr(coefficients.gamma),
            chi=_expr(coefficients.chi),
            phi=_expr(coefficients.phi),
            nu=_series(measurements.nu, base_dir),
            mu=_series(measurements.mu, base_dir),
            beta0=parsed.cost.beta0,
            beta1=parsed.cost.beta1,
            measurement_mode=parsed.cost.measurement_mode,
            **parsed.domain.model_dump(),
        )
    except ValidationError as e:
        raise ProblemConfigError(f"invalid problem data: {e}") from e

    control_s = _expr(parsed.control.s) if parsed.control else None
    control_g = _expr(parsed.control.g) if parsed.control else None

    case = None
    if parsed.manufactured is not None:
        case = manufactured_problem(parse_expression(parsed.manufactured.u), parse_expression(parsed.manufactured.s), problem)
        if parsed.measurements is None:
            problem = case.problem
        else:
            # measured series win; the exact solution still gives f, phi, chi and the reference errors
            logger.info("Manufactured section with [measurements]: keeping the measured nu and mu")
            problem = case.problem.model_copy(update={"nu": problem.nu, "mu": problem.mu})
        if control_s is None:
            control_s, control_g = case.exact_s, case.exact_g

    return LoadedProblem(problem=problem, control_s=control_s, control_g=control_g, manufactured=case)


def load_problem(path: str | Path) -> LoadedProblem:
    """Read and validate a TOML problem file; CSV series resolve relative to it."""
    path = Path(path)
    if not path.is_file():
        raise ProblemConfigError(f"problem file not found: {path}")
    raw = path.read_bytes()
    try:
        document = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as e:
        raise ProblemConfigError(f"{path}: {e}") from e

    loaded = build_problem(document, base_dir=path.parent)
    logger.info(f"Loaded problem {path} (T={loaded.problem.T}, l={loaded.problem.l}, s0={loaded.problem.s0})")
    return LoadedProblem(
        problem=loaded.problem,
        path=path,
        raw=raw,
        control_s=loaded.control_s,
        control_g=loaded.control_g,
        manufactured=loaded.manufactured,
    )
