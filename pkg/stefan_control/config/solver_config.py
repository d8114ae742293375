import os
from dataclasses import dataclass

from dotenv import load_dotenv

load_dotenv()


@dataclass(frozen=True)
class SolverConfig:
    """Numerical settings for grids, quadrature and linear solves"""

    c_h: float = 1.0
    lattice_points: int = 101
    residual_tol: float = 1e-10
    pivot_floor: float = 1e-300
    quad_points: int = 4
    max_workers: int = 1
    cache_size: int = 256

    def __post_init__(self):
        if self.c_h <= 0:
            raise ValueError(f"c_h must be positive, got {self.c_h}")
        if self.max_workers < 1:
            raise ValueError("max_workers must be >= 1")

    @classmethod
    def from_env(cls) -> "SolverConfig":
        """Create configuration from environment variables"""
        return cls(
            c_h=float(os.getenv("STEFAN_C_H", "1.0")),
            lattice_points=int(os.getenv("STEFAN_LATTICE_POINTS", "101")),
            residual_tol=float(os.getenv("STEFAN_RESIDUAL_TOL", "1e-10")),
            pivot_floor=float(os.getenv("STEFAN_PIVOT_FLOOR", "1e-300")),
            quad_points=int(os.getenv("STEFAN_QUAD_POINTS", "4")),
            max_workers=int(os.getenv("STEFAN_MAX_WORKERS", "1")),
            cache_size=int(os.getenv("STEFAN_CACHE_SIZE", "256")),
        )

    def with_overrides(self, **overrides) -> "SolverConfig":
        """Copy with the non-None overrides applied"""
        values = {**self.__dict__, **{k: v for k, v in overrides.items() if v is not None}}
        return SolverConfig(**values)


default_config = SolverConfig()
