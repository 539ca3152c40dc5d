"""Discrete free energy and the dissipation balance diagnostic.

The energy is only defined for ``gamma > 0`` because the elastic term
carries a ``1/gamma`` factor.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fem1d
from .fem1d import Mesh
from .params import PhysParams, TimeGrid
from .potential import phi

__all__ = ["EnergyReport", "free_energy", "dissipation_balance", "write_energy_csv"]


def _require_gamma(phys: PhysParams):
    if phys.gamma <= 0.0:
        raise ValueError("free energy is undefined for gamma = 0 (elastic term has 1/gamma)")


def free_energy(h, s, phys: PhysParams, mesh: Mesh) -> float:
    """Quadrature of the free-energy density for P1 fields ``h`` and ``s``."""
    _require_gamma(phys)
    Ca, Bo, c, gamma = phys.Ca, phys.Bo, phys.c, phys.gamma
    hq = fem1d.interpolate(mesh, h)
    sq = fem1d.interpolate(mesh, s)
    hx = fem1d.element_gradient(mesh, h)[:, None]
    sx = fem1d.element_gradient(mesh, s)[:, None]
    density = (
        phi(phys.potential, hq)
        - Bo / (2.0 * Ca) * hq**2
        + hx**2 / (2.0 * Ca)
        + c**2 / (2.0 * gamma) * sx**2
        + (hx * sx - Bo * hq * sq) / Ca
    )
    return fem1d.integrate(mesh, density)


@dataclass
class EnergyReport:
    """Per-step energy and its balance terms.

    Arrays of rate terms have length ``N`` and refer to the step ``k -> k+1``;
    ``energy`` has length ``N + 1``.
    """

    times: np.ndarray
    energy: np.ndarray
    D_fluid: np.ndarray
    D_sub: np.ndarray
    W: np.ndarray
    residual: np.ndarray

    @property
    def max_increase(self) -> float:
        """Largest per-step increase of the energy, scaled by ``1 + |E|``."""
        incr = np.diff(self.energy) / (1.0 + np.abs(self.energy[1:]))
        return float(incr.max(initial=-np.inf))

    def is_nonincreasing(self, rtol: float = 1e-8) -> bool:
        return self.max_increase <= rtol


def dissipation_balance(traj, f, phys: PhysParams, grid: TimeGrid, mesh: Mesh) -> EnergyReport:
    """Compare ``dE/dt`` with dissipation and external work step by step.

    The residual ``(E^{k+1}-E^k)/dt + D_fluid + D_sub - W`` is first order in
    ``dt``; it is reported, not asserted.
    """
    _require_gamma(phys)
    N, n = grid.n_steps, mesh.n_nodes
    f = np.zeros((N + 1, n)) if f is None else np.asarray(f, dtype=float)
    dt = grid.dt
    energy = traj.energy
    if energy is None:
        energy = np.array([free_energy(traj.h[k], traj.s[k], phys, mesh) for k in range(N + 1)])
    M = fem1d.assemble_mass(mesh)
    D_fluid = np.empty(N)
    D_sub = np.empty(N)
    W = np.empty(N)
    for k in range(N):
        h3 = fem1d.interpolate(mesh, traj.h[k]) ** 3
        mux = fem1d.element_gradient(mesh, traj.mu[k + 1])[:, None]
        D_fluid[k] = fem1d.integrate(mesh, h3 * mux**2) / 3.0
        st = (traj.s[k + 1] - traj.s[k]) / dt
        Mst = M @ st
        D_sub[k] = st @ Mst / phys.gamma
        W[k] = f[k + 1] @ Mst / phys.gamma
    residual = np.diff(energy) / dt + D_fluid + D_sub - W
    return EnergyReport(grid.times, energy, D_fluid, D_sub, W, residual)


def write_energy_csv(path, report: EnergyReport) -> Path:
    """Columns ``step,t,E,D_fluid,D_sub,W,residual``; rate terms blank at step 0."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "t", "E", "D_fluid", "D_sub", "W", "residual"])
        writer.writerow([0, _fmt(report.times[0]), _fmt(report.energy[0]), "", "", "", ""])
        for k in range(report.residual.size):
            writer.writerow(
                [
                    k + 1,
                    _fmt(report.times[k + 1]),
                    _fmt(report.energy[k + 1]),
                    _fmt(report.D_fluid[k]),
                    _fmt(report.D_sub[k]),
                    _fmt(report.W[k]),
                    _fmt(report.residual[k]),
                ]
            )
    return path


def _fmt(v: float) -> str:
    return repr(float(v))
