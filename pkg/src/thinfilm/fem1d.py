"""Uniform 1D P1 finite elements on [0, L].

Nodal fields are plain ``numpy`` vectors of length ``mesh.n_nodes``.  All
integrals use 3-point Gauss-Legendre quadrature per element, which is exact
for every integrand assembled here when the weights are polynomials of
degree <= 3 in a P1 field.

Weighted assemblies accept the weight in one of two forms:

* a nodal vector of length ``n_nodes``, interpolated linearly inside each
  element, or
* an array of shape ``(n_elements, 3)`` holding the weight at the Gauss
  points of each element.  This is how nonlinear weights such as ``h**3``
  are passed: ``interpolate(mesh, h) ** 3``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.linalg import lapack

__all__ = [
    "Mesh",
    "BandedSystem",
    "BandedFactorization",
    "SingularMatrixError",
    "build_mesh",
    "interpolate",
    "element_gradient",
    "quadrature_points",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_weighted_mass",
    "assemble_weighted_stiffness",
    "assemble_weighted_convection",
    "assemble_load",
    "integrate",
    "solve_banded",
]

# Gauss-Legendre rule on the reference element [0, 1].
_GL_X, _GL_W = np.polynomial.legendre.leggauss(3)
GAUSS_XI = 0.5 * (_GL_X + 1.0)
GAUSS_W = 0.5 * _GL_W
# P1 shape functions at the Gauss points: rows are (N0, N1), columns are points.
_SHAPE = np.vstack([1.0 - GAUSS_XI, GAUSS_XI])

PIVOT_RTOL = 1e-14


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when banded LU meets a pivot below the relative threshold."""

    def __init__(self, message: str, pivot_index: int | None = None):
        super().__init__(message)
        self.pivot_index = pivot_index


@dataclass(frozen=True)
class Mesh:
    """Uniform mesh of ``n_nodes`` nodes on ``[0, length]``."""

    length: float
    n_nodes: int
    x: np.ndarray = field(repr=False, compare=False)

    @property
    def dx(self) -> float:
        return self.length / (self.n_nodes - 1)

    @property
    def n_elements(self) -> int:
        return self.n_nodes - 1


def build_mesh(length: float, n_nodes: int) -> Mesh:
    length = float(length)
    if not np.isfinite(length) or length <= 0.0:
        raise ValueError(f"mesh length must be positive and finite, got {length!r}")
    if int(n_nodes) != n_nodes or n_nodes < 3:
        raise ValueError(f"n_nodes must be an integer >= 3, got {n_nodes!r}")
    n_nodes = int(n_nodes)
    x = np.linspace(0.0, length, n_nodes)
    x.setflags(write=False)
    return Mesh(length=length, n_nodes=n_nodes, x=x)


def _check_field(mesh: Mesh, values, name: str = "field") -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.n_nodes,):
        raise ValueError(f"{name} has shape {values.shape}, expected ({mesh.n_nodes},)")
    return values


def quadrature_points(mesh: Mesh) -> np.ndarray:
    """Physical Gauss points, shape ``(n_elements, 3)``."""
    return mesh.x[:-1, None] + mesh.dx * GAUSS_XI[None, :]


def interpolate(mesh: Mesh, values) -> np.ndarray:
    """Evaluate the P1 interpolant of nodal ``values`` at the Gauss points."""
    values = _check_field(mesh, values)
    return values[:-1, None] * _SHAPE[0] + values[1:, None] * _SHAPE[1]


def element_gradient(mesh: Mesh, values) -> np.ndarray:
    """Constant x-derivative of the P1 interpolant on each element."""
    values = _check_field(mesh, values)
    return np.diff(values) / mesh.dx


def _weight_at_quadrature(mesh: Mesh, weight) -> np.ndarray:
    weight = np.asarray(weight, dtype=float)
    if weight.ndim == 0:
        return np.full((mesh.n_elements, 3), float(weight))
    if weight.shape == (mesh.n_nodes,):
        return interpolate(mesh, weight)
    if weight.shape == (mesh.n_elements, 3):
        return weight
    raise ValueError(
        f"weight of shape {weight.shape} is neither nodal ({mesh.n_nodes},) "
        f"nor per-quadrature-point ({mesh.n_elements}, 3)"
    )


class BandedFactorization:
    """LU factors of a :class:`BandedSystem` (LAPACK ``gbtrf`` layout)."""

    def __init__(self, lu: np.ndarray, ipiv: np.ndarray, kl: int, ku: int):
        self._lu = lu
        self._ipiv = ipiv
        self._kl = kl
        self._ku = ku

    def solve(self, rhs, transpose: bool = False) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        b = rhs.reshape(rhs.shape[0], -1)
        x, info = lapack.dgbtrs(
            self._lu, self._kl, self._ku, b, self._ipiv, trans=1 if transpose else 0
        )
        if info != 0:
            raise np.linalg.LinAlgError(f"dgbtrs failed with info={info}")
        return x.reshape(rhs.shape)


class BandedSystem:
    """Square banded matrix stored by rows.

    ``bands[i, half_bandwidth + j - i]`` holds entry ``(i, j)``; entries that
    fall outside the matrix are kept at zero.
    """

    def __init__(self, bands: np.ndarray):
        bands = np.asarray(bands, dtype=float)
        if bands.ndim != 2 or bands.shape[1] % 2 != 1:
            raise ValueError("bands must have shape (order, 2*half_bandwidth + 1)")
        self.bands = bands

    @classmethod
    def zeros(cls, order: int, half_bandwidth: int) -> "BandedSystem":
        return cls(np.zeros((order, 2 * half_bandwidth + 1)))

    @classmethod
    def from_tridiagonal(cls, lower, diag, upper) -> "BandedSystem":
        """Build from the three diagonals; ``lower[i]`` is entry ``(i+1, i)``."""
        diag = np.asarray(diag, dtype=float)
        out = cls.zeros(diag.size, 1)
        out.bands[:, 1] = diag
        out.bands[1:, 0] = lower
        out.bands[:-1, 2] = upper
        return out

    @classmethod
    def from_dense(cls, dense, half_bandwidth: int) -> "BandedSystem":
        dense = np.asarray(dense, dtype=float)
        n = dense.shape[0]
        out = cls.zeros(n, half_bandwidth)
        for d in range(-half_bandwidth, half_bandwidth + 1):
            rows = np.arange(max(0, -d), min(n, n - d))
            out.bands[rows, half_bandwidth + d] = dense[rows, rows + d]
        return out

    @property
    def order(self) -> int:
        return self.bands.shape[0]

    @property
    def half_bandwidth(self) -> int:
        return self.bands.shape[1] // 2

    def diagonal(self, offset: int = 0) -> np.ndarray:
        """Entries ``(i, i + offset)`` for all valid ``i``."""
        hb, n = self.half_bandwidth, self.order
        rows = np.arange(max(0, -offset), min(n, n - offset))
        return self.bands[rows, hb + offset].copy()

    def to_dense(self) -> np.ndarray:
        n, hb = self.order, self.half_bandwidth
        dense = np.zeros((n, n))
        for d in range(-hb, hb + 1):
            rows = np.arange(max(0, -d), min(n, n - d))
            dense[rows, rows + d] = self.bands[rows, hb + d]
        return dense

    def matvec(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        n, hb = self.order, self.half_bandwidth
        padded = np.zeros((n + 2 * hb,) + v.shape[1:])
        padded[hb : hb + n] = v
        out = np.zeros_like(padded[:n])
        for k in range(2 * hb + 1):
            coef = self.bands[:, k]
            if v.ndim > 1:
                coef = coef[:, None]
            out += coef * padded[k : k + n]
        return out

    __matmul__ = matvec

    def transpose(self) -> "BandedSystem":
        n, hb = self.order, self.half_bandwidth
        out = BandedSystem.zeros(n, hb)
        for d in range(-hb, hb + 1):
            rows = np.arange(max(0, -d), min(n, n - d))
            out.bands[rows + d, hb - d] = self.bands[rows, hb + d]
        return out

    @property
    def T(self) -> "BandedSystem":
        return self.transpose()

    def __add__(self, other: "BandedSystem") -> "BandedSystem":
        return BandedSystem(self.bands + _match_bands(other, self.half_bandwidth))

    def __sub__(self, other: "BandedSystem") -> "BandedSystem":
        return BandedSystem(self.bands - _match_bands(other, self.half_bandwidth))

    def __mul__(self, scalar: float) -> "BandedSystem":
        return BandedSystem(self.bands * float(scalar))

    __rmul__ = __mul__

    def factorize(self) -> BandedFactorization:
        """Partial-pivoting LU; raises :class:`SingularMatrixError` on tiny pivots."""
        n, hb = self.order, self.half_bandwidth
        ab = np.zeros((3 * hb + 1, n))
        # LAPACK band layout: ab[kl + ku + i - j, j] = a[i, j].
        dense_rows = np.arange(n)
        for d in range(-hb, hb + 1):
            rows = dense_rows[max(0, -d) : min(n, n - d)]
            ab[2 * hb - d, rows + d] = self.bands[rows, hb + d]
        scale = np.abs(self.bands).max()
        if scale == 0.0 or not np.isfinite(scale):
            raise SingularMatrixError("matrix is zero or contains non-finite entries")
        lu, ipiv, info = lapack.dgbtrf(ab, hb, hb)
        if info < 0:
            raise np.linalg.LinAlgError(f"dgbtrf argument {-info} invalid")
        pivots = np.abs(lu[2 * hb])
        small = np.flatnonzero(pivots < PIVOT_RTOL * scale)
        if info > 0 or small.size:
            idx = int(small[0]) if small.size else info - 1
            raise SingularMatrixError(
                f"singular matrix: pivot {idx} is {pivots[idx]:.3e} "
                f"(threshold {PIVOT_RTOL * scale:.3e})",
                pivot_index=idx,
            )
        return BandedFactorization(lu, ipiv, hb, hb)

    def solve(self, rhs, transpose: bool = False) -> np.ndarray:
        return self.factorize().solve(rhs, transpose=transpose)


def _match_bands(system: BandedSystem, half_bandwidth: int) -> np.ndarray:
    if system.half_bandwidth == half_bandwidth:
        return system.bands
    if system.half_bandwidth > half_bandwidth:
        raise ValueError("cannot combine into a narrower band")
    pad = half_bandwidth - system.half_bandwidth
    return np.pad(system.bands, ((0, 0), (pad, pad)))


def solve_banded(system: BandedSystem, rhs) -> np.ndarray:
    return system.solve(rhs)


def _tridiagonal(mesh: Mesh, e00, e01, e10, e11) -> BandedSystem:
    # e_ab[e] is the contribution of element e to local entry (a, b).
    n = mesh.n_nodes
    diag = np.zeros(n)
    diag[:-1] += e00
    diag[1:] += e11
    return BandedSystem.from_tridiagonal(lower=e10, diag=diag, upper=e01)


def assemble_weighted_mass(mesh: Mesh, weight) -> BandedSystem:
    """``M_ij = int w phi_i phi_j``."""
    w = _weight_at_quadrature(mesh, weight) * (GAUSS_W * mesh.dx)
    n0, n1 = _SHAPE
    e00 = w @ (n0 * n0)
    e01 = w @ (n0 * n1)
    e11 = w @ (n1 * n1)
    return _tridiagonal(mesh, e00, e01, e01, e11)


def assemble_weighted_stiffness(mesh: Mesh, weight) -> BandedSystem:
    """``K_ij = int w phi_i' phi_j'``."""
    w = _weight_at_quadrature(mesh, weight) @ GAUSS_W / mesh.dx
    return _tridiagonal(mesh, w, -w, -w, w)


def assemble_weighted_convection(mesh: Mesh, weight) -> BandedSystem:
    """``C_ij = int w phi_i' phi_j`` (not symmetric)."""
    w = _weight_at_quadrature(mesh, weight) * GAUSS_W
    n0, n1 = _SHAPE
    # phi_0' = -1/dx, phi_1' = +1/dx; the dx from the Jacobian cancels.
    e00 = -(w @ n0)
    e01 = -(w @ n1)
    e10 = w @ n0
    e11 = w @ n1
    return _tridiagonal(mesh, e00, e01, e10, e11)


def assemble_mass(mesh: Mesh) -> BandedSystem:
    return assemble_weighted_mass(mesh, 1.0)


def assemble_stiffness(mesh: Mesh) -> BandedSystem:
    return assemble_weighted_stiffness(mesh, 1.0)


def assemble_load(mesh: Mesh, g: Union[Callable[[np.ndarray], np.ndarray], np.ndarray, float]) -> np.ndarray:
    """Load vector ``b_i = int g phi_i``.

    ``g`` is a vectorized callable of ``x``, a constant, a nodal vector, or an
    array of Gauss-point values.
    """
    if callable(g):
        gq = np.asarray(g(quadrature_points(mesh)), dtype=float)
        gq = np.broadcast_to(gq, (mesh.n_elements, 3))
    else:
        gq = _weight_at_quadrature(mesh, g)
    w = gq * (GAUSS_W * mesh.dx)
    out = np.zeros(mesh.n_nodes)
    out[:-1] += w @ _SHAPE[0]
    out[1:] += w @ _SHAPE[1]
    return out


def integrate(mesh: Mesh, values) -> float:
    """Integral over the domain of a nodal or Gauss-point function."""
    return float(np.sum(_weight_at_quadrature(mesh, values) @ GAUSS_W) * mesh.dx)
