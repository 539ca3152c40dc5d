"""Figures for a finished run, written as PNG files under ``<out>/figures``."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["render_run"]


def _mirror(x, *cols):
    x = np.concatenate([-x[:0:-1], x])
    return (x,) + tuple(np.concatenate([c[:0:-1], c]) for c in cols)


def _profiles(path, mesh, traj, target, beta, mirror):
    fig, ax = plt.subplots(figsize=(7, 3.5))
    H = traj.h + beta * traj.s
    x, H0, HT, tgt, sT = mesh.x, H[0], H[-1], target, traj.s[-1]
    if mirror:
        x, H0, HT, tgt, sT = _mirror(x, H0, HT, tgt, sT)
    ax.plot(x, H0, color="0.6", lw=1, label="initial")
    ax.plot(x, HT, lw=1.5, label="final")
    ax.plot(x, tgt, "k--", lw=1, label="target")
    if np.any(sT):
        ax.plot(x, sT, lw=1, label="substrate")
    ax.set_xlabel("x")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _linf(path, times, linf, unc_linf):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.semilogy(times, np.maximum(unc_linf, 1e-16), color="0.5", label="uncontrolled")
    ax.semilogy(times, np.maximum(linf, 1e-16), label="controlled")
    ax.set_xlabel("t")
    ax.set_ylabel("max |H - target|")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _cost(path, report):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    it = np.arange(len(report.J))
    ax.semilogy(it, report.J, label="J")
    ax.semilogy(it, report.grad_norm, label="|grad J|")
    ax.set_xlabel("iteration")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _control(path, mesh, grid, f):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    lim = float(np.abs(f).max()) or 1.0
    im = ax.pcolormesh(mesh.x, grid.times, f, cmap="RdBu_r", vmin=-lim, vmax=lim, shading="auto")
    fig.colorbar(im, ax=ax, label="f")
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_run(out_dir, mesh, grid, traj, f, target, linf, unc_linf, report=None, mirror=False, beta=1) -> list[Path]:
    fig_dir = Path(out_dir) / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    paths = [
        _profiles(fig_dir / "profiles.png", mesh, traj, target, beta, mirror),
        _linf(fig_dir / "linf.png", grid.times, linf, unc_linf),
    ]
    if report is not None:
        paths.append(_cost(fig_dir / "cost.png", report))
        paths.append(_control(fig_dir / "control.png", mesh, grid, f))
    return paths
