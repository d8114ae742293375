from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from stefan_control.errors import ProblemConfigError
from stefan_control.problem.problem_data import MeasurementSeries, ProblemData
from tests.conftest import make_problem


def test_defaults_and_expression_coercion() -> None:
    p = make_problem(a="1 + x^2", f=0.5)
    assert p.a.source == "1 + x^2"
    assert p.f.is_constant
    assert p.b.evaluate(0.3, 0.2) == 0.0
    assert p.measurement_mode == "steklov"
    assert p.beta0 == p.beta1 == 1.0


@pytest.mark.parametrize(
    "overrides",
    [
        {"s0": 0.4},
        {"s0": 2.0},
        {"beta0": 0.0, "beta1": 0.0},
        {"phi": "x + t"},
        {"a": "0.5 + x", "a0": 1.0},
        {"T": 0.0},
        {"R": -1.0},
    ],
)
def test_invalid_problem_data_is_rejected(overrides: dict) -> None:
    with pytest.raises(ValidationError):
        make_problem(**overrides)


def test_ellipticity_uses_a0() -> None:
    p = make_problem(a="0.5 + x", a0=0.5)
    assert p.a0 == 0.5


def test_problem_is_immutable() -> None:
    p = make_problem()
    with pytest.raises(ValidationError):
        p.T = 2.0


def test_coefficient_bound_samples_the_box() -> None:
    p = make_problem(a="1 + x", b="-3*t", c=0.5)
    assert p.coefficient_bound(11) == pytest.approx(3.0)


def test_with_measurements_replaces_series_only() -> None:
    p = make_problem(nu="t", mu="1 + t")
    q = p.with_measurements(MeasurementSeries.from_expression("2"), MeasurementSeries.from_expression("3"))
    assert q.nu(0.5) == 2.0
    assert q.mu(0.5) == 3.0
    assert p.nu(0.5) == 0.5
    assert q.T == p.T


def test_sample_series_interpolates_linearly() -> None:
    series = MeasurementSeries.from_samples([0.0, 1.0, 2.0], [0.0, 2.0, 0.0])
    np.testing.assert_allclose(series([0.5, 1.5, 3.0]), [1.0, 1.0, 0.0])


def test_step_series_is_constant_on_left_open_cells() -> None:
    series = MeasurementSeries.from_steps([0.5, 1.0], [10.0, 20.0])
    np.testing.assert_array_equal(series([0.0, 0.25, 0.5, 0.5001, 1.0, 5.0]), [10.0, 10.0, 10.0, 20.0, 20.0, 20.0])


def test_series_from_csv(tmp_path) -> None:
    path = tmp_path / "nu.csv"
    path.write_text("t,value\n0,1\n1,3\n", encoding="utf-8")
    series = MeasurementSeries.from_csv(path)
    assert series(0.5) == pytest.approx(2.0)
    assert MeasurementSeries.from_csv(path, "step")(0.5) == 3.0


def test_series_csv_errors(tmp_path) -> None:
    with pytest.raises(ProblemConfigError):
        MeasurementSeries.from_csv(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("time,v\n0,1\n", encoding="utf-8")
    with pytest.raises(ProblemConfigError):
        MeasurementSeries.from_csv(bad)


def test_series_rejects_spatial_dependence() -> None:
    with pytest.raises(ValueError):
        MeasurementSeries.from_expression("x + t")


def test_fingerprint_is_stable() -> None:
    assert make_problem(a="1 + t").fingerprint() == make_problem(a="1 + t").fingerprint()
    assert make_problem(a="1 + t").fingerprint() != make_problem(a="2 + t").fingerprint()


def test_problem_data_accepts_explicit_construction() -> None:
    p = ProblemData(T=2.0, l=3.0, s0=1.0, delta=0.1, R=5.0, measurement_mode="point")
    assert p.measurement_mode == "point"
