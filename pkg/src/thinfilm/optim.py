"""Reduced cost, adjoint gradient and gradient descent with backtracking."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import fem1d
from .adjoint import AdjointTrajectory, run_adjoint
from .fem1d import Mesh
from .forward import SolverError, StateTrajectory, run_forward
from .params import PhysParams, TimeGrid

__all__ = [
    "ControlProblem",
    "Evaluation",
    "OptimReport",
    "reduced_cost",
    "reduced_gradient",
    "evaluate",
    "control_norm",
    "control_inner",
    "gradient_descent",
    "mass_reachable",
]

log = logging.getLogger(__name__)

LAMBDA_MIN = 1e-12


@dataclass
class ControlProblem:
    """Everything the reduced cost depends on besides the control."""

    mesh: Mesh
    phys: PhysParams
    grid: TimeGrid
    h0: np.ndarray
    s0: np.ndarray
    target: np.ndarray
    beta: int = 1
    alpha: float = 1e-6

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be > 0, got {self.alpha!r}")
        if self.beta not in (0, 1):
            raise ValueError(f"beta must be 0 or 1, got {self.beta!r}")
        n = self.mesh.n_nodes
        for name in ("h0", "s0", "target"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
            setattr(self, name, arr)
        self._M = fem1d.assemble_mass(self.mesh)

    @property
    def M(self) -> fem1d.BandedSystem:
        return self._M

    def zero_control(self) -> np.ndarray:
        return np.zeros((self.grid.n_steps + 1, self.mesh.n_nodes))

    def observed(self, traj: StateTrajectory) -> np.ndarray:
        return traj.h + self.beta * traj.s


def control_inner(problem: ControlProblem, a, b) -> float:
    """Space-time inner product: rectangle rule over levels 1..N, M-weighted."""
    a = np.asarray(a)[1:]
    b = np.asarray(b)[1:]
    Mb = problem.M.matvec(b.T).T
    return float(problem.grid.dt * np.sum(a * Mb))


def control_norm(problem: ControlProblem, a) -> float:
    return math.sqrt(max(control_inner(problem, a, a), 0.0))


@dataclass
class Evaluation:
    """Cost (and optionally gradient) at one control."""

    f: np.ndarray
    J: float
    traj: StateTrajectory
    tracking: float
    penalty: float
    grad: np.ndarray | None = None
    adjoint: AdjointTrajectory | None = None
    grad_norm: float = float("nan")


def _cost_parts(problem: ControlProblem, f, traj: StateTrajectory):
    e = problem.observed(traj)[-1] - problem.target
    tracking = 0.5 * float(e @ problem.M.matvec(e))
    penalty = 0.5 * problem.alpha * control_inner(problem, f, f)
    return tracking, penalty


def evaluate(problem: ControlProblem, f, with_gradient: bool = False) -> Evaluation:
    f = np.asarray(f, dtype=float)
    traj = run_forward(problem.h0, problem.s0, f, problem.phys, problem.grid, problem.mesh, record_energy=False)
    tracking, penalty = _cost_parts(problem, f, traj)
    ev = Evaluation(f=f, J=tracking + penalty, traj=traj, tracking=tracking, penalty=penalty)
    if with_gradient:
        add_gradient(problem, ev)
    return ev


def add_gradient(problem: ControlProblem, ev: Evaluation) -> Evaluation:
    ev.adjoint = run_adjoint(ev.traj, problem.target, problem.beta, problem.phys, problem.grid, problem.mesh)
    grad = problem.alpha * ev.f - ev.adjoint.r
    grad[0] = 0.0
    ev.grad = grad
    ev.grad_norm = control_norm(problem, grad)
    return ev


def reduced_cost(f, problem: ControlProblem) -> float:
    return evaluate(problem, f).J


def reduced_gradient(f, problem: ControlProblem) -> np.ndarray:
    """``alpha f - r`` at levels 1..N (level 0 is zero)."""
    return evaluate(problem, f, with_gradient=True).grad


def mass_reachable(problem: ControlProblem, rtol: float = 1e-8) -> bool:
    """With ``beta = 0`` the film mass cannot change, so the target must match it."""
    if problem.beta != 0:
        return True
    ones = problem.M.matvec(np.ones(problem.mesh.n_nodes))
    m0 = float(ones @ problem.h0)
    mt = float(ones @ problem.target)
    return abs(mt - m0) <= rtol * max(abs(m0), 1e-300)


@dataclass
class OptimReport:
    J: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    step: list = field(default_factory=list)
    linf_err: list = field(default_factory=list)
    linf_err_final: list = field(default_factory=list)
    iterations: int = 0
    termination: str = ""
    message: str = ""

    def is_monotone(self) -> bool:
        return all(b <= a for a, b in zip(self.J, self.J[1:]))


def _linf_errors(problem: ControlProblem, traj: StateTrajectory):
    dev = np.abs(problem.observed(traj) - problem.target)
    return float(dev.max()), float(dev[-1].max())


def _record(report: OptimReport, problem: ControlProblem, ev: Evaluation, lam: float):
    linf, linf_T = _linf_errors(problem, ev.traj)
    report.J.append(ev.J)
    report.grad_norm.append(ev.grad_norm)
    report.step.append(lam)
    report.linf_err.append(linf)
    report.linf_err_final.append(linf_T)


def gradient_descent(problem: ControlProblem, tol: float = 1e-4, k_max: int = 100, lambda0: float = 1.0, f0=None, callback=None):
    """Steepest descent with persistent step halving.

    A trial step is accepted as soon as it does not increase the cost; the
    halved step size carries over to later iterations and is never regrown.
    A trial whose forward solve fails counts as a cost increase.

    Returns ``(f, report, evaluation)`` where ``evaluation`` holds the
    trajectory and gradient at the returned control.
    """
    if not tol > 0.0:
        raise ValueError("tol must be > 0")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if not lambda0 > 0.0:
        raise ValueError("lambda0 must be > 0")

    f = problem.zero_control() if f0 is None else np.array(f0, dtype=float)
    report = OptimReport()
    lam = float(lambda0)
    try:
        ev = evaluate(problem, f, with_gradient=True)
    except SolverError as exc:
        report.termination = "solver-failure"
        report.message = str(exc)
        return f, report, None
    _record(report, problem, ev, 0.0)

    k = 0
    while True:
        if ev.grad_norm <= tol:
            report.termination = "converged"
            break
        if k >= k_max:
            report.termination = "max-iterations"
            report.message = f"gradient norm {ev.grad_norm:.3e} > tol after {k} iterations"
            break
        trial = None
        while lam >= LAMBDA_MIN:
            f_trial = ev.f - lam * ev.grad
            try:
                trial = evaluate(problem, f_trial)
            except SolverError as exc:
                log.debug("trial step %g failed: %s", lam, exc)
                trial = None
            if trial is not None and trial.J <= ev.J:
                break
            trial = None
            lam *= 0.5
        if trial is None:
            report.termination = "line-search-stalled"
            report.message = f"step size fell below {LAMBDA_MIN:g} without decrease"
            break
        try:
            ev = add_gradient(problem, trial)
        except SolverError as exc:
            report.termination = "solver-failure"
            report.message = str(exc)
            ev = trial
            break
        k += 1
        _record(report, problem, ev, lam)
        log.info("iter %d  J=%.6e  |grad|=%.3e  lambda=%g", k, ev.J, ev.grad_norm, lam)
        if callback is not None:
            callback(k, ev)
    report.iterations = k
    return ev.f, report, ev
