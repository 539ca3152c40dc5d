"""Regularized disjoining-pressure potential and its convex/concave split.

For ``h >= eps`` the potential is the van der Waals form ``-A / (2 h**2)``;
below ``eps`` it is replaced by the quadratic that matches value and slope at
``eps``.  The convex part ``phi_plus = A h**2 / (2 eps**4)`` is the quadratic
branch without its constant, so the concave remainder ``phi_minus`` is the
constant ``-A / eps**2`` for ``h < eps``.

All functions accept scalars or arrays and return ``numpy`` values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PotentialParams",
    "phi",
    "phi_prime",
    "phi_double_prime",
    "phi_plus",
    "phi_prime_plus",
    "phi_double_prime_plus",
    "phi_minus",
    "phi_prime_minus",
    "phi_double_prime_minus",
    "lipschitz_constant",
]


@dataclass(frozen=True)
class PotentialParams:
    A: float = 0.0
    eps: float = 0.1

    def __post_init__(self):
        if not (np.isfinite(self.A) and self.A >= 0.0):
            raise ValueError(f"Hamaker constant A must be finite and >= 0, got {self.A!r}")
        if not (np.isfinite(self.eps) and self.eps > 0.0):
            raise ValueError(f"eps must be finite and > 0, got {self.eps!r}")

    @property
    def curvature(self) -> float:
        """``A / eps**4``, the second derivative of the quadratic branch."""
        return self.A / self.eps**4


def _branches(params: PotentialParams, h):
    h = np.asarray(h, dtype=float)
    below = h < params.eps
    # Guard the power branch against h <= 0; those entries take the quadratic branch.
    safe = np.where(below, params.eps, h)
    return h, below, safe


def phi(params: PotentialParams, h):
    h, below, safe = _branches(params, h)
    A, eps = params.A, params.eps
    return np.where(below, 0.5 * params.curvature * h**2 - A / eps**2, -0.5 * A / safe**2)


def phi_prime(params: PotentialParams, h):
    h, below, safe = _branches(params, h)
    return np.where(below, params.curvature * h, params.A / safe**3)


def phi_double_prime(params: PotentialParams, h):
    h, below, safe = _branches(params, h)
    return np.where(below, params.curvature, -3.0 * params.A / safe**4)


def phi_plus(params: PotentialParams, h):
    h = np.asarray(h, dtype=float)
    return 0.5 * params.curvature * h**2


def phi_prime_plus(params: PotentialParams, h):
    return params.curvature * np.asarray(h, dtype=float)


def phi_double_prime_plus(params: PotentialParams, h):
    return np.full(np.shape(h), params.curvature)[()]


def phi_minus(params: PotentialParams, h):
    h, below, safe = _branches(params, h)
    A, eps = params.A, params.eps
    # Written branchwise so the quadratic branch cancels exactly.
    return np.where(below, -A / eps**2, -0.5 * A / safe**2 - 0.5 * params.curvature * h**2)


def phi_prime_minus(params: PotentialParams, h):
    h, below, safe = _branches(params, h)
    return np.where(below, 0.0, params.A / safe**3 - params.curvature * h)


def phi_double_prime_minus(params: PotentialParams, h):
    h, below, safe = _branches(params, h)
    return np.where(below, 0.0, -3.0 * params.A / safe**4 - params.curvature)


def lipschitz_constant(params: PotentialParams) -> float:
    """Global Lipschitz bound ``3 A / eps**4`` for ``phi_prime``."""
    return 3.0 * params.curvature
