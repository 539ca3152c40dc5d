"""Backward sweep for the adjoint variables ``(p, q, r)``.

The adjoint is the exact transpose of the linearized forward scheme, so the
gradient it produces is the gradient of the *discrete* reduced cost.  Writing
one forward step as ``A(h^k) X^{k+1} = b(h^k, s^k, f^{k+1})`` with
``X = (h, mu, s)``, the multipliers ``L^k = (p^k, q^k, r^k)`` satisfy

    A(h^{N-1})^T L^N = (M (hbar - H^N), 0, beta M (hbar - H^N))
    A(h^{k-1})^T L^k = (M p^{k+1} + Mhat(phi''_-(h^k)) q^{k+1}
                        - dt Chat(h^2 mu_x^{k+1})^T p^{k+1},  0,  M r^{k+1})

for ``k = N-1, ..., 1``, where ``H = h + beta s``.  All bilinear-form terms
sit at level ``k`` through ``A^T``; the transport term, the concave
potential term and the ``r`` source are explicit data from level ``k+1``.
Slot 0 of the stored trajectory is unused and kept at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem1d
from .fem1d import Mesh
from .forward import SolverError, StateTrajectory, StepOperator, pack, unpack
from .params import PhysParams, TimeGrid
from .potential import phi_double_prime_minus

__all__ = ["AdjointTrajectory", "terminal_solve", "imex_back_step", "run_adjoint"]


@dataclass
class AdjointTrajectory:
    p: np.ndarray
    q: np.ndarray
    r: np.ndarray


def _solve_transposed(op: StepOperator, h_prev, rhs, step: int):
    try:
        lu = op.matrix(h_prev).factorize()
    except fem1d.SingularMatrixError as exc:
        raise SolverError(f"singular adjoint matrix ({exc})", step) from exc
    x = lu.solve(rhs, transpose=True)
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite adjoint solution", step)
    return unpack(x)


def terminal_solve(state: StateTrajectory, target, beta: float, phys: PhysParams, grid: TimeGrid, mesh: Mesh, *, op: StepOperator | None = None):
    """Multipliers at the final level from the tracking mismatch."""
    if op is None:
        op = StepOperator(mesh, phys, grid.dt)
    N = state.n_steps
    mismatch = op.M @ (np.asarray(target, dtype=float) - (state.h[N] + beta * state.s[N]))
    rhs = pack(mismatch, np.zeros(mesh.n_nodes), beta * mismatch)
    return _solve_transposed(op, state.h[N - 1], rhs, N)


def imex_back_step(p_k1, q_k1, r_k1, h_prev, h_k, mu_k1, phys: PhysParams, grid: TimeGrid, mesh: Mesh, *, op: StepOperator | None = None, step: int | None = None):
    """One backward step: from level ``k+1`` multipliers to level ``k``.

    ``h_prev`` is ``h^{k-1}`` (the level whose matrix produced ``X^k``),
    ``h_k`` and ``mu_k1`` are the state data the step ``k -> k+1`` depended on.
    """
    if op is None:
        op = StepOperator(mesh, phys, grid.dt)
    hq = fem1d.interpolate(mesh, h_k)
    mux = fem1d.element_gradient(mesh, mu_k1)[:, None]
    transport = fem1d.assemble_weighted_convection(mesh, hq**2 * mux)
    concave = fem1d.assemble_weighted_mass(mesh, phi_double_prime_minus(phys.potential, hq))
    rhs_p = op.M @ p_k1 + concave @ q_k1 - grid.dt * transport.transpose().matvec(p_k1)
    rhs = pack(rhs_p, np.zeros(mesh.n_nodes), op.M @ r_k1)
    return _solve_transposed(op, h_prev, rhs, step if step is not None else -1)


def run_adjoint(state: StateTrajectory, target, beta: float, phys: PhysParams, grid: TimeGrid, mesh: Mesh) -> AdjointTrajectory:
    N, n = grid.n_steps, mesh.n_nodes
    op = StepOperator(mesh, phys, grid.dt)
    p = np.zeros((N + 1, n))
    q = np.zeros((N + 1, n))
    r = np.zeros((N + 1, n))
    p[N], q[N], r[N] = terminal_solve(state, target, beta, phys, grid, mesh, op=op)
    for k in range(N - 1, 0, -1):
        p[k], q[k], r[k] = imex_back_step(
            p[k + 1], q[k + 1], r[k + 1], state.h[k - 1], state.h[k], state.mu[k + 1], phys, grid, mesh, op=op, step=k
        )
    return AdjointTrajectory(p=p, q=q, r=r)
