"""IMEX time stepping of the coupled film / substrate system.

Unknowns at each level are the film thickness ``h``, the chemical potential
``mu`` and the substrate height ``s``.  One step solves

    M h' + dt/3 K^(h^3) mu'                                 = M h
    M mu' - a M h' + B (h' + s')                             = (phi'_-(h), .)
    M s' + dt c^2 K s' + dt gamma/Ca (K - Bo M) h'           = M s + dt M f'

with ``a = A / eps**4`` and ``B = Bo/Ca M - 1/Ca K``.  The mobility matrix
``K^(h^3)`` and the concave potential load are lagged at the old level, so
each step is one linear solve with the nodes interleaved as (h, mu, s).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import fem1d
from .fem1d import BandedSystem, Mesh
from .params import PhysParams, TimeGrid
from .potential import phi_prime_minus

__all__ = [
    "SolverError",
    "StateTrajectory",
    "StepOperator",
    "imex_step",
    "run_forward",
    "initial_mu",
    "make_target_steady",
    "steady_rate",
    "cosine_profile",
]

log = logging.getLogger(__name__)

N_FIELDS = 3
HALF_BANDWIDTH = 5


class SolverError(RuntimeError):
    """A time step could not be completed (singular system or blow-up)."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


def interleave(blocks: dict, n: int) -> np.ndarray:
    """Place 3x3 tridiagonal blocks into node-interleaved band storage.

    ``blocks[(a, b)]`` couples field ``a`` (row) to field ``b`` (column).
    Returns bands of shape ``(3 n, 11)``.
    """
    hb = HALF_BANDWIDTH
    bands = np.zeros((N_FIELDS * n, 2 * hb + 1))
    node = np.arange(n)
    for (a, b), tri in blocks.items():
        off = b - a
        bands[N_FIELDS * node + a, hb + off] += tri.diagonal(0)
        bands[N_FIELDS * node[:-1] + a, hb + N_FIELDS + off] += tri.diagonal(1)
        bands[N_FIELDS * node[1:] + a, hb - N_FIELDS + off] += tri.diagonal(-1)
    return bands


def pack(h, mu, s) -> np.ndarray:
    return np.stack([h, mu, s], axis=1).ravel()


def unpack(x: np.ndarray):
    x = x.reshape(-1, N_FIELDS)
    return x[:, 0].copy(), x[:, 1].copy(), x[:, 2].copy()


class StepOperator:
    """Assembles the per-step block system for fixed mesh, physics and grid.

    Everything except the mobility block is assembled once.
    """

    def __init__(self, mesh: Mesh, phys: PhysParams, dt: float):
        self.mesh = mesh
        self.phys = phys
        self.dt = dt
        self.M = fem1d.assemble_mass(mesh)
        self.K = fem1d.assemble_stiffness(mesh)
        Ca, Bo, c, gamma = phys.Ca, phys.Bo, phys.c, phys.gamma
        a = phys.potential.curvature
        self.B = self.M * (Bo / Ca) - self.K * (1.0 / Ca)
        self.S = self.M + self.K * (dt * c**2)
        self.G = (self.K - self.M * Bo) * (dt * gamma / Ca)
        self._base = interleave(
            {
                (0, 0): self.M,
                (1, 0): self.B - self.M * a,
                (1, 1): self.M,
                (1, 2): self.B,
                (2, 0): self.G,
                (2, 2): self.S,
            },
            mesh.n_nodes,
        )

    def mobility(self, h) -> BandedSystem:
        """``K^(h^3)`` with ``h`` interpolated before cubing."""
        return fem1d.assemble_weighted_stiffness(self.mesh, fem1d.interpolate(self.mesh, h) ** 3)

    def matrix(self, h) -> BandedSystem:
        bands = self._base.copy()
        bands += interleave({(0, 1): self.mobility(h) * (self.dt / 3.0)}, self.mesh.n_nodes)
        return BandedSystem(bands)

    def potential_load(self, h) -> np.ndarray:
        hq = fem1d.interpolate(self.mesh, h)
        return fem1d.assemble_load(self.mesh, phi_prime_minus(self.phys.potential, hq))

    def rhs(self, h, s, f_next) -> np.ndarray:
        Mh = self.M @ h
        rhs_s = self.M @ (s + self.dt * np.asarray(f_next, dtype=float))
        return pack(Mh, self.potential_load(h), rhs_s)


def imex_step(h_k, s_k, f_k1, phys: PhysParams, grid: TimeGrid, mesh: Mesh, *, op: StepOperator | None = None, step: int | None = None):
    """Advance ``(h, s)`` by one step; returns ``(h, mu, s)`` at the new level."""
    if op is None:
        op = StepOperator(mesh, phys, grid.dt)
    h_k = np.asarray(h_k, dtype=float)
    s_k = np.asarray(s_k, dtype=float)
    try:
        lu = op.matrix(h_k).factorize()
    except fem1d.SingularMatrixError as exc:
        raise SolverError(f"singular step matrix ({exc})", step) from exc
    x = lu.solve(op.rhs(h_k, s_k, f_k1))
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite solution (blow-up)", step)
    return unpack(x)


def initial_mu(h0, s0, phys: PhysParams, mesh: Mesh, op: StepOperator | None = None) -> np.ndarray:
    """Chemical potential consistent with ``(h0, s0)`` from the mu-equation."""
    if op is None:
        op = StepOperator(mesh, phys, 1.0)
    a = phys.potential.curvature
    rhs = a * (op.M @ h0) + op.potential_load(h0) - op.B @ (np.asarray(h0) + np.asarray(s0))
    return op.M.solve(rhs)


@dataclass
class StateTrajectory:
    """States at levels ``0..N``; row ``k`` is time ``k dt``."""

    h: np.ndarray
    mu: np.ndarray
    s: np.ndarray
    grid: TimeGrid
    mass: np.ndarray = field(repr=False)
    min_h: np.ndarray = field(repr=False)
    energy: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_steps(self) -> int:
        return self.h.shape[0] - 1

    def surface(self, beta: float = 1.0) -> np.ndarray:
        """``h + beta s`` at every level."""
        return self.h + beta * self.s

    @property
    def mass_drift(self) -> float:
        return float(np.max(np.abs(self.mass - self.mass[0])) / abs(self.mass[0]))


def run_forward(h0, s0, f, phys: PhysParams, grid: TimeGrid, mesh: Mesh, *, record_energy: bool | None = None) -> StateTrajectory:
    """Integrate from ``(h0, s0)`` under control ``f`` (shape ``(N+1, n)``, row 0 unused)."""
    n, N = mesh.n_nodes, grid.n_steps
    h0 = np.asarray(h0, dtype=float)
    s0 = np.asarray(s0, dtype=float)
    if h0.shape != (n,) or s0.shape != (n,):
        raise ValueError("initial fields do not match the mesh")
    if f is None:
        f = np.zeros((N + 1, n))
    f = np.asarray(f, dtype=float)
    if f.shape != (N + 1, n):
        raise ValueError(f"control has shape {f.shape}, expected {(N + 1, n)}")

    op = StepOperator(mesh, phys, grid.dt)
    h = np.empty((N + 1, n))
    mu = np.empty((N + 1, n))
    s = np.empty((N + 1, n))
    h[0], s[0] = h0, s0
    mu[0] = initial_mu(h0, s0, phys, mesh, op)
    for k in range(N):
        h[k + 1], mu[k + 1], s[k + 1] = imex_step(h[k], s[k], f[k + 1], phys, grid, mesh, op=op, step=k + 1)

    ones_M = op.M @ np.ones(n)
    traj = StateTrajectory(h=h, mu=mu, s=s, grid=grid, mass=h @ ones_M, min_h=h.min(axis=1))
    if record_energy is None:
        record_energy = phys.gamma > 0.0
    if record_energy:
        from .energy import free_energy

        traj.energy = np.array([free_energy(h[k], s[k], phys, mesh) for k in range(N + 1)])
    return traj


def cosine_profile(mesh: Mesh, amplitude: float, mode: int = 1) -> np.ndarray:
    """``1 + amplitude cos(mode pi x / L)``."""
    return 1.0 + amplitude * np.cos(mode * np.pi * mesh.x / mesh.length)


def steady_rate(traj: StateTrajectory, beta: float = 1.0) -> float:
    """``|(h + beta s)^N - (h + beta s)^(N-1)|_inf / dt``."""
    surf = traj.surface(beta)
    return float(np.max(np.abs(surf[-1] - surf[-2])) / traj.grid.dt)


def make_target_steady(phys: PhysParams, grid: TimeGrid, mesh: Mesh, h0, s0, beta: float = 1.0, steady_tol: float = 1e-6) -> np.ndarray:
    """Run uncontrolled to ``grid.T`` and return ``(h + beta s)(T)``.

    Warns when the last step still changes ``h + beta s`` faster than
    ``steady_tol`` in the max norm.
    """
    traj = run_forward(h0, s0, None, phys, grid, mesh, record_energy=False)
    rate = steady_rate(traj, beta)
    if rate >= steady_tol:
        warnings.warn(
            f"uncontrolled run not steady at T={grid.T}: |dH/dt|_inf = {rate:.3e} >= {steady_tol:g}",
            RuntimeWarning,
            stacklevel=2,
        )
    log.info("steady target at T=%g, rate %.3e", grid.T, rate)
    return traj.surface(beta)[-1]
