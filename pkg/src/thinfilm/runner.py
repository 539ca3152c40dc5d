"""Scenario catalog, run orchestration and artifact files."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import fem1d
from .config import ConfigError, Scenario, eval_expr, parse_call, parse_config, parse_config_text
from .energy import dissipation_balance, write_energy_csv
from .forward import SolverError, StateTrajectory, cosine_profile, run_forward, steady_rate
from .optim import ControlProblem, OptimReport, control_inner, evaluate, gradient_descent, mass_reachable
from .params import TimeGrid

__all__ = [
    "SCENARIOS",
    "list_scenarios",
    "load_scenario",
    "build_problem",
    "RunSummary",
    "SUMMARY_SCHEMA",
    "run_scenario",
    "grad_check",
    "GradCheckReport",
    "write_snapshot",
    "write_field_csv",
    "read_field_csv",
    "write_optim_csv",
]

log = logging.getLogger(__name__)

SCENARIOS = (
    "hammond",
    "given-topography",
    "wave-target",
    "jensen-flatten",
    "hold-linear-state",
    "rupture-accelerate",
    "de-rupture",
)

ADJOINT_SCHEME = (
    "exact transpose of the forward step: A(h^{k-1})^T implicit, transport and concave-potential "
    "terms explicit from level k+1, convex potential part implicit inside A^T; terminal r-slot carries beta"
)


def _fmt(v) -> str:
    return repr(float(v))


def list_scenarios() -> list[str]:
    pkg = resources.files("thinfilm") / "scenarios"
    return sorted(p.name[:-4] for p in pkg.iterdir() if p.name.endswith(".cfg"))


def load_scenario(name_or_path, overrides: dict | None = None) -> Scenario:
    """Load a built-in scenario by name or a config file by path.

    ``overrides`` maps config keys to textual values, e.g. ``{"n_nodes": "128"}``.
    """
    path = Path(name_or_path)
    if path.suffix == ".cfg" or path.exists():
        scenario = parse_config(path)
    else:
        res = resources.files("thinfilm") / "scenarios" / f"{name_or_path}.cfg"
        if not res.is_file():
            raise ConfigError(f"no built-in scenario '{name_or_path}' (known: {', '.join(list_scenarios())})")
        scenario = parse_config_text(res.read_text(encoding="utf-8"), source=f"<{name_or_path}>")
    if not overrides:
        return scenario
    values = scenario.as_dict()
    if "control_horizon" not in overrides:
        values.pop("control_horizon")
    if "T" in overrides and "n_steps" not in overrides:
        dt = scenario.dt
        values["n_steps"] = max(1, int(round(eval_expr(str(overrides["T"])) / dt)))
    values.update({k: str(v) for k, v in overrides.items()})
    text = "\n".join(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}" for k, v in values.items())
    return parse_config_text(text, source=f"<{scenario.name} + overrides>", base_dir=scenario.base_dir)


# ---------------------------------------------------------------- profiles


def read_field_csv(path, mesh: fem1d.Mesh) -> np.ndarray:
    """Read a two-column ``x,value`` CSV and interpolate it onto the mesh nodes."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    cols = data.dtype.names
    x, v = np.asarray(data[cols[0]], dtype=float), np.asarray(data[cols[1]], dtype=float)
    order = np.argsort(x)
    x, v = x[order], v[order]
    tol = 1e-9 * mesh.length
    if x[0] > tol or x[-1] < mesh.length - tol:
        raise ValueError(f"{path}: x range [{x[0]}, {x[-1]}] does not cover [0, {mesh.length}]")
    return np.interp(mesh.x, x, v)


def write_field_csv(path, x, values, name: str = "value") -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", name])
        for xi, vi in zip(x, values):
            w.writerow([_fmt(xi), _fmt(vi)])
    return path


def _substrate(scenario: Scenario, mesh: fem1d.Mesh) -> np.ndarray:
    kind, args = parse_call(scenario.ic_substrate, {"L": scenario.L})
    x = mesh.x
    if kind == "flat":
        return np.zeros(mesh.n_nodes) + (args[0] if args else 0.0)
    if kind == "tanh":
        a, c1, c2, d = args
        return a * (np.tanh((x + c1) / d) - np.tanh((x - c2) / d))
    if kind == "file":
        return read_field_csv(scenario.resolve(args[0]), mesh)
    raise ConfigError(f"unknown substrate profile '{kind}'", key="ic.substrate")


def _uncontrolled(scenario: Scenario, mesh, h0, s0, T_pre: float) -> StateTrajectory:
    grid = TimeGrid.from_dt(T_pre, scenario.dt)
    return run_forward(h0, s0, None, scenario.phys, grid, mesh, record_energy=False)


def _film(scenario: Scenario, mesh, s0, info: dict) -> np.ndarray:
    kind, args = parse_call(scenario.ic_profile, {"L": scenario.L})
    x = mesh.x
    if kind == "cosine":
        return cosine_profile(mesh, scenario.h_amplitude, scenario.mode)
    if kind == "gauss":
        amp, k = args
        return 1.0 + amp * np.exp(-((k * x) ** 2))
    if kind == "steady":
        traj = _uncontrolled(scenario, mesh, cosine_profile(mesh, scenario.h_amplitude, scenario.mode), s0, args[0])
        info["ic_steady_rate"] = steady_rate(traj, beta=0.0)
        return traj.h[-1].copy()
    if kind == "file":
        return read_field_csv(scenario.resolve(args[0]), mesh)
    raise ConfigError(f"unknown film profile '{kind}'", key="ic.profile")


def _target(scenario: Scenario, mesh, h0, s0, info: dict) -> np.ndarray:
    kind, args = parse_call(scenario.target, {"L": scenario.L})
    beta = scenario.beta
    if kind == "steady":
        traj = _uncontrolled(scenario, mesh, h0, s0, args[0])
        rate = steady_rate(traj, beta)
        info["target_steady_rate"] = rate
        if rate >= 1e-6:
            warnings.warn(f"target run not steady at T={args[0]}: rate {rate:.3e}", RuntimeWarning, stacklevel=2)
        return traj.surface(beta)[-1].copy()
    if kind == "flat":
        if args and args[0] != "mean":
            return np.full(mesh.n_nodes, float(args[0]))
        M = fem1d.assemble_mass(mesh)
        return np.full(mesh.n_nodes, float(np.sum(M @ (h0 + beta * s0))) / mesh.length)
    if kind == "wave":
        a_t, m_t = (list(args) + [0.2, 2][len(args):])[:2]
        return cosine_profile(mesh, a_t, int(m_t))
    if kind == "initial":
        return h0 + beta * s0
    if kind == "file":
        return read_field_csv(scenario.resolve(args[0]), mesh)
    raise ConfigError(f"unknown target '{kind}'", key="target")


def build_problem(scenario: Scenario):
    """Mesh, initial data and target for a scenario; returns ``(problem, info)``."""
    mesh = fem1d.build_mesh(scenario.L, scenario.n_nodes)
    info: dict = {}
    s0 = _substrate(scenario, mesh)
    h0 = _film(scenario, mesh, s0, info)
    target = _target(scenario, mesh, h0, s0, info)
    problem = ControlProblem(
        mesh=mesh, phys=scenario.phys, grid=scenario.grid, h0=h0, s0=s0, target=target, beta=scenario.beta, alpha=scenario.alpha
    )
    return problem, info


# ---------------------------------------------------------------- artifacts


def write_snapshot(path, x, h, s, mu, f, mirror: bool = False) -> Path:
    """CSV with header ``x,h,s,H,mu,f``; ``mirror`` prepends the reflection onto [-L, 0)."""
    path = Path(path)
    x = np.asarray(x, dtype=float)
    cols = [np.asarray(c, dtype=float) for c in (h, s, np.asarray(h) + np.asarray(s), mu, f)]
    if mirror:
        x = np.concatenate([-x[:0:-1], x])
        cols = [np.concatenate([c[:0:-1], c]) for c in cols]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "h", "s", "H", "mu", "f"])
        for i in range(x.size):
            w.writerow([_fmt(x[i])] + [_fmt(c[i]) for c in cols])
    return path


def snapshot_steps(n_steps: int, every: int | None = None) -> list[int]:
    every = every or math.ceil(n_steps / 100)
    steps = list(range(0, n_steps + 1, every))
    if steps[-1] != n_steps:
        steps.append(n_steps)
    return steps


def write_snapshots(out_dir: Path, mesh, traj: StateTrajectory, f, every=None, mirror=False) -> list[Path]:
    snap_dir = out_dir / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in snapshot_steps(traj.n_steps, every):
        paths.append(write_snapshot(snap_dir / f"snap_{k:06d}.csv", mesh.x, traj.h[k], traj.s[k], traj.mu[k], f[k], mirror))
    return paths


def write_optim_csv(path, report: OptimReport) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "J", "grad_norm", "lambda", "linf_err", "linf_err_final"])
        for i in range(len(report.J)):
            w.writerow(
                [i, _fmt(report.J[i]), _fmt(report.grad_norm[i]), _fmt(report.step[i]), _fmt(report.linf_err[i]), _fmt(report.linf_err_final[i])]
            )
    return path


def write_linf_csv(path, times, controlled, uncontrolled) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "t", "controlled", "uncontrolled"])
        for k, t in enumerate(times):
            w.writerow([k, _fmt(t), _fmt(controlled[k]), _fmt(uncontrolled[k])])
    return path


# ---------------------------------------------------------------- summary


SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": [
        "scenario",
        "mode",
        "termination",
        "message",
        "iterations",
        "final_J",
        "final_grad_norm",
        "final_linf_err",
        "final_linf_err_T",
        "uncontrolled_linf_err_T",
        "mass_drift",
        "mass_reachable",
        "info",
        "files",
    ],
    "properties": {
        "scenario": {"type": "object"},
        "mode": {"enum": ["forward", "optimize"]},
        "termination": {"type": "string"},
        "message": {"type": "string"},
        "iterations": {"type": "integer", "minimum": 0},
        "final_J": {"type": ["number", "null"]},
        "final_grad_norm": {"type": ["number", "null"]},
        "final_linf_err": {"type": ["number", "null"]},
        "final_linf_err_T": {"type": ["number", "null"]},
        "uncontrolled_linf_err_T": {"type": ["number", "null"]},
        "mass_drift": {"type": ["number", "null"]},
        "mass_reachable": {"type": "boolean"},
        "info": {"type": "object"},
        "files": {"type": "array", "items": {"type": "string"}},
    },
    "additionalProperties": False,
}


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass
class RunSummary:
    """Outcome of one scenario run.

    ``wall_time`` is kept out of ``summary.json`` (written to ``timing.txt``)
    so repeated runs produce identical summaries.
    """

    scenario: dict
    mode: str
    termination: str = ""
    message: str = ""
    iterations: int = 0
    final_J: float | None = None
    final_grad_norm: float | None = None
    final_linf_err: float | None = None
    final_linf_err_T: float | None = None
    uncontrolled_linf_err_T: float | None = None
    mass_drift: float | None = None
    mass_reachable: bool = True
    info: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def failed(self) -> bool:
        return self.termination in ("solver-failure", "line-search-stalled")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("wall_time")
        for key in ("final_J", "final_grad_norm", "final_linf_err", "final_linf_err_T", "uncontrolled_linf_err_T", "mass_drift"):
            d[key] = _num(d[key])
        d["info"] = {k: _num(v) if isinstance(v, (float, int)) and not isinstance(v, bool) else v for k, v in d["info"].items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunSummary":
        return cls(**json.loads(text))


def _linf_series(problem: ControlProblem, traj: StateTrajectory) -> np.ndarray:
    return np.abs(problem.observed(traj) - problem.target).max(axis=1)


def run_scenario(
    scenario: Scenario,
    mode: str = "optimize",
    out_dir=None,
    snapshot_every: int | None = None,
    mirror: bool = False,
    plot: bool = False,
) -> RunSummary:
    """Run one scenario and write its artifacts into ``out_dir``.

    Solver and optimizer failures are captured in the returned summary.
    """
    if mode not in ("forward", "optimize"):
        raise ValueError(f"mode must be 'forward' or 'optimize', got {mode!r}")
    out = Path(out_dir if out_dir is not None else f"runs/{scenario.name}")
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    summary = RunSummary(scenario=scenario.as_dict(), mode=mode)
    files: list[Path] = []

    try:
        problem, info = build_problem(scenario)
    except SolverError as exc:
        summary.termination = "solver-failure"
        summary.message = f"while preparing initial data or target: {exc}"
        return _finish(summary, out, files, start)
    summary.info.update(info)
    mesh, grid = problem.mesh, problem.grid
    files.append(write_field_csv(out / "target.csv", mesh.x, problem.target, "target"))
    summary.mass_reachable = mass_reachable(problem)
    if not summary.mass_reachable:
        log.warning("target mass differs from film mass with beta=0; the target is unreachable")

    try:
        uncontrolled = run_forward(problem.h0, problem.s0, None, problem.phys, grid, mesh)
    except SolverError as exc:
        summary.termination = "solver-failure"
        summary.message = str(exc)
        return _finish(summary, out, files, start)
    unc_linf = _linf_series(problem, uncontrolled)
    summary.uncontrolled_linf_err_T = float(unc_linf[-1])

    if mode == "forward":
        traj, f = uncontrolled, problem.zero_control()
        ev = evaluate(problem, f)
        summary.termination = "completed"
        summary.final_J = ev.J
    else:
        f, report, ev = gradient_descent(problem, scenario.tol, scenario.k_max, scenario.lambda0)
        files.append(write_optim_csv(out / "optim.csv", report))
        summary.termination = report.termination
        summary.message = report.message
        summary.iterations = report.iterations
        if ev is None:
            return _finish(summary, out, files, start)
        traj = ev.traj
        summary.final_J = report.J[-1]
        summary.final_grad_norm = report.grad_norm[-1]
        summary.info["initial_J"] = report.J[0]
        summary.info["monotone"] = report.is_monotone()
        summary.info["adjoint_scheme"] = ADJOINT_SCHEME
        summary.info["penalty"] = 0.5 * problem.alpha * control_inner(problem, f, f)

    linf = _linf_series(problem, traj)
    summary.final_linf_err = float(linf.max())
    summary.final_linf_err_T = float(linf[-1])
    summary.mass_drift = traj.mass_drift
    summary.info["min_h"] = float(traj.min_h.min())
    files.append(write_linf_csv(out / "linf.csv", grid.times, linf, unc_linf))
    files.extend(write_snapshots(out, mesh, traj, f, snapshot_every, mirror))
    if problem.phys.gamma > 0.0:
        energy = dissipation_balance(traj, f, problem.phys, grid, mesh)
        files.append(write_energy_csv(out / "energy.csv", energy))
        summary.info["energy_max_increase"] = energy.max_increase
    if plot:
        from .plotting import render_run

        files.extend(render_run(out, mesh, grid, traj, f, problem.target, linf, unc_linf, report if mode == "optimize" else None, mirror, problem.beta))
    return _finish(summary, out, files, start)


def _finish(summary: RunSummary, out: Path, files: list, start: float) -> RunSummary:
    summary.wall_time = time.perf_counter() - start
    summary.files = sorted(str(p.relative_to(out)) for p in files) + ["summary.json"]
    (out / "summary.json").write_text(summary.to_json(), encoding="utf-8")
    (out / "timing.txt").write_text(f"wall_time_s {summary.wall_time:.3f}\n", encoding="utf-8")
    return summary


# ---------------------------------------------------------------- gradient check


@dataclass
class GradCheckReport:
    delta: list
    direction: list
    adjoint: list
    finite_difference: list
    rel_error: list
    threshold: float = 1e-3

    @property
    def max_error(self) -> float:
        return max(self.rel_error) if self.rel_error else 0.0

    def max_error_for(self, delta: float) -> float:
        return max(e for d, e in zip(self.delta, self.rel_error) if d == delta)

    @property
    def passed(self) -> bool:
        """Pass if every direction at the smallest-error step size is within threshold."""
        best = min(self.max_error_for(d) for d in set(self.delta))
        return best < self.threshold

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["delta", "direction", "adjoint", "finite_difference", "rel_error"])
            for row in zip(self.delta, self.direction, self.adjoint, self.finite_difference, self.rel_error):
                w.writerow([_fmt(row[0]), row[1], _fmt(row[2]), _fmt(row[3]), _fmt(row[4])])
        return path


def relative_mismatch(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0.0 else abs(a - b) / scale


def grad_check(problem: ControlProblem, n_dirs: int = 20, deltas=(1e-5,), seed: int = 0, f=None, threshold: float = 1e-3) -> GradCheckReport:
    """Compare ``<grad J, e>`` with central differences along random directions."""
    rng = np.random.default_rng(seed)
    shape = (problem.grid.n_steps + 1, problem.mesh.n_nodes)
    if f is None:
        f = 0.1 * rng.standard_normal(shape)
    f = np.array(f, dtype=float)
    f[0] = 0.0
    base = evaluate(problem, f, with_gradient=True)
    report = GradCheckReport([], [], [], [], [], threshold)
    directions = []
    for _ in range(n_dirs):
        e = rng.standard_normal(shape)
        e[0] = 0.0
        directions.append(e)
    for delta in deltas:
        for i, e in enumerate(directions):
            adj = control_inner(problem, base.grad, e)
            fd = (evaluate(problem, f + delta * e).J - evaluate(problem, f - delta * e).J) / (2.0 * delta)
            report.delta.append(float(delta))
            report.direction.append(i)
            report.adjoint.append(adj)
            report.finite_difference.append(fd)
            report.rel_error.append(relative_mismatch(adj, fd))
    return report
