"""Synthetic measurements from a forward solve at a known control."""

from dataclasses import dataclass

import numpy as np

from stefan_control.config.solver_config import SolverConfig, default_config
from stefan_control.numerics.control import DiscreteControl
from stefan_control.numerics.state import DiscreteState, run_forward
from stefan_control.problem.problem_data import MeasurementSeries, ProblemData
from stefan_control.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class SyntheticData:
    """Step series nu, mu on (t_{k-1}, t_k] plus the clean traces they were built from."""

    problem: ProblemData
    state: DiscreteState
    times: np.ndarray
    nu_clean: np.ndarray
    mu_clean: np.ndarray
    nu_values: np.ndarray
    mu_values: np.ndarray
    noise: float
    seed: int

    @property
    def nu(self) -> MeasurementSeries:
        return self.problem.nu

    @property
    def mu(self) -> MeasurementSeries:
        return self.problem.mu


def add_noise(values: np.ndarray, level: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian noise with standard deviation level * max|values|."""
    if level <= 0:
        return values.copy()
    sigma = level * float(np.max(np.abs(values)))
    return values + rng.normal(0.0, sigma, size=values.shape)


def make_synthetic(
    problem: ProblemData,
    control: DiscreteControl,
    noise: float = 0.0,
    seed: int = 0,
    config: SolverConfig = default_config,
) -> SyntheticData:
    """Replace the problem's measurements with u_0(k) and u_front(k) from a forward solve at ``control``.

    Values are stored as step series, so their averages over each time cell reproduce the traces exactly.
    """
    if noise < 0:
        raise ValueError("noise level must be non-negative")
    state = run_forward(problem, control, config=config)
    times = state.time_grid.nodes
    nu_clean = np.array(state.layers[1:, 0])
    mu_clean = np.array(state.front_values()[1:])

    rng = np.random.default_rng(seed)
    nu_values = add_noise(nu_clean, noise, rng)
    mu_values = add_noise(mu_clean, noise, rng)
    synthetic = problem.with_measurements(
        MeasurementSeries.from_steps(times[1:], nu_values),
        MeasurementSeries.from_steps(times[1:], mu_values),
    )
    logger.info(f"Synthetic measurements for n={control.n}, noise={noise}, seed={seed}")
    return SyntheticData(
        problem=synthetic,
        state=state,
        times=times[1:],
        nu_clean=nu_clean,
        mu_clean=mu_clean,
        nu_values=nu_values,
        mu_values=mu_values,
        noise=noise,
        seed=seed,
    )
