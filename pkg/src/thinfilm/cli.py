"""Command-line entry point ``thinfilm``.

Exit codes: 0 success (including ``max-iterations``), 1 configuration or
input error, 2 usage error, 3 solver failure, 4 line-search stall,
5 failed diagnostic (energy increase or gradient mismatch).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError
from .energy import dissipation_balance, write_energy_csv
from .forward import SolverError, run_forward

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 3
EXIT_STALLED = 4
EXIT_DIAGNOSTIC = 5

log = logging.getLogger("thinfilm")


def _overrides(pairs):
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got '{item}'")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _load(args):
    from .runner import load_scenario

    return load_scenario(args.scenario, _overrides(args.set))


def _out_dir(args, scenario, suffix=""):
    return Path(args.out_dir) if args.out_dir else Path("runs") / f"{scenario.name}{suffix}"


def _print_block(title: str, data: dict):
    print(f"=== {title} ===")
    for key, value in data.items():
        print(f"{key}: {value}")
    print("=== end ===")


def _cmd_run(args, mode: str) -> int:
    from .runner import run_scenario

    scenario = _load(args)
    out = _out_dir(args, scenario)
    summary = run_scenario(scenario, mode, out, snapshot_every=args.snapshot_every, mirror=args.mirror, plot=args.plot)
    d = summary.to_dict()
    _print_block(
        f"{scenario.name} ({mode})",
        {
            "termination": d["termination"],
            "iterations": d["iterations"],
            "J": d["final_J"],
            "grad_norm": d["final_grad_norm"],
            "linf_err": d["final_linf_err"],
            "linf_err_T": d["final_linf_err_T"],
            "uncontrolled_linf_err_T": d["uncontrolled_linf_err_T"],
            "mass_drift": d["mass_drift"],
            "mass_reachable": d["mass_reachable"],
            "out_dir": str(out),
        },
    )
    if summary.message:
        print(summary.message, file=sys.stderr)
    if summary.termination == "solver-failure":
        return EXIT_SOLVER
    if summary.termination == "line-search-stalled":
        return EXIT_STALLED
    return EXIT_OK


def _cmd_grad_check(args) -> int:
    from .runner import build_problem, grad_check

    scenario = _load(args)
    problem, _ = build_problem(scenario)
    report = grad_check(problem, n_dirs=args.dirs, deltas=args.delta, seed=args.seed)
    out = _out_dir(args, scenario, "-gradcheck")
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "grad_check.csv")
    block = {f"max_rel_error[delta={d:g}]": report.max_error_for(d) for d in args.delta}
    block["threshold"] = report.threshold
    block["passed"] = report.passed
    _print_block(f"{scenario.name} gradient check", block)
    return EXIT_OK if report.passed else EXIT_DIAGNOSTIC


def _cmd_energy_check(args) -> int:
    from .runner import build_problem

    scenario = _load(args)
    if scenario.gamma <= 0.0:
        raise ConfigError("energy-check needs gamma > 0", key="gamma")
    problem, _ = build_problem(scenario)
    traj = run_forward(problem.h0, problem.s0, None, problem.phys, problem.grid, problem.mesh, record_energy=True)
    rep = dissipation_balance(traj, None, problem.phys, problem.grid, problem.mesh)
    out = _out_dir(args, scenario, "-energy")
    out.mkdir(parents=True, exist_ok=True)
    write_energy_csv(out / "energy.csv", rep)
    _print_block(
        f"{scenario.name} energy check",
        {
            "E0": float(rep.energy[0]),
            "E_T": float(rep.energy[-1]),
            "max_increase": rep.max_increase,
            "max_abs_residual": float(np.abs(rep.residual).max()),
            "nonincreasing": rep.is_nonincreasing(),
        },
    )
    return EXIT_OK if rep.is_nonincreasing() else EXIT_DIAGNOSTIC


def _cmd_make_target(args) -> int:
    from .runner import build_problem, write_field_csv

    scenario = _load(args)
    problem, info = build_problem(scenario)
    path = write_field_csv(args.output, problem.mesh.x, problem.target, "target")
    _print_block(f"{scenario.name} target", {"path": str(path), **info})
    return EXIT_OK


def _cmd_list(args) -> int:
    from .runner import list_scenarios

    for name in list_scenarios():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", help="output directory (default runs/<name>)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key; repeatable")
    common.add_argument("-v", "--verbose", action="count", default=0)

    run_opts = argparse.ArgumentParser(add_help=False)
    run_opts.add_argument("--snapshot-every", type=int, default=None, help="steps between snapshots (default ceil(N/100))")
    run_opts.add_argument("--mirror", action="store_true", help="reflect snapshots onto [-L, L]")
    run_opts.add_argument("--plot", action="store_true", help="also render PNG figures into <out>/figures")

    p = argparse.ArgumentParser(prog="thinfilm", description="Thin film on a deformable substrate: simulation and optimal control.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    for name, help_text in (("forward", "uncontrolled simulation"), ("optimize", "optimal control by gradient descent")):
        sp = sub.add_parser(name, parents=[common, run_opts], help=help_text)
        sp.add_argument("scenario", help="built-in scenario name or path to a .cfg file")
        sp.set_defaults(handler=lambda a, m=name: _cmd_run(a, m))

    sp = sub.add_parser("scenario", parents=[common, run_opts], help="run a scenario (optimize by default)")
    sp.add_argument("scenario")
    sp.add_argument("--mode", choices=("forward", "optimize"), default="optimize")
    sp.set_defaults(handler=lambda a: _cmd_run(a, a.mode))

    sp = sub.add_parser("grad-check", parents=[common], help="adjoint gradient against finite differences")
    sp.add_argument("scenario", nargs="?", default="gradcheck")
    sp.add_argument("--dirs", type=int, default=20)
    sp.add_argument("--delta", type=float, nargs="+", default=[1e-4, 1e-5, 1e-6])
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(handler=_cmd_grad_check)

    sp = sub.add_parser("energy-check", parents=[common], help="free energy and dissipation balance of a forward run")
    sp.add_argument("scenario")
    sp.set_defaults(handler=_cmd_energy_check)

    sp = sub.add_parser("make-target", parents=[common], help="write a scenario's target profile to CSV")
    sp.add_argument("scenario")
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(handler=_cmd_make_target)

    sp = sub.add_parser("list", help="list built-in scenarios")
    sp.set_defaults(handler=_cmd_list, verbose=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
