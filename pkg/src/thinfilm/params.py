"""Physical and temporal parameters shared by the solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .potential import PotentialParams

__all__ = ["PhysParams", "TimeGrid"]


@dataclass(frozen=True)
class PhysParams:
    """Dimensionless film/substrate parameters.

    ``c`` is the substrate tension and ``gamma`` the film damping that couples
    the film curvature back into the substrate equation.
    """

    Ca: float = 1.0
    Bo: float = 1.0
    c: float = 0.1
    gamma: float = 0.0
    potential: PotentialParams = field(default_factory=PotentialParams)

    def __post_init__(self):
        for name in ("Ca", "Bo", "c", "gamma"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.Ca <= 0.0:
            raise ValueError(f"Ca must be > 0, got {self.Ca!r}")
        if self.c < 0.0:
            raise ValueError(f"c must be >= 0, got {self.c!r}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma!r}")


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0.0):
            raise ValueError(f"T must be positive and finite, got {self.T!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be an integer >= 1, got {self.n_steps!r}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @classmethod
    def from_dt(cls, T: float, dt: float) -> "TimeGrid":
        n = int(round(T / dt))
        if n < 1 or abs(n * dt - T) > 1e-9 * max(1.0, T):
            raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
        return cls(T=float(T), n_steps=n)

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt
