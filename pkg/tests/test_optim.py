import numpy as np
import pytest

from thinfilm import fem1d
from thinfilm.forward import cosine_profile
from thinfilm.optim import (
    LAMBDA_MIN,
    ControlProblem,
    control_norm,
    evaluate,
    gradient_descent,
    mass_reachable,
    reduced_cost,
    reduced_gradient,
)
from thinfilm.params import PhysParams, TimeGrid

L = 3 * np.pi


def small_problem(beta=1, alpha=1e-3, target=None, n=24, N=10):
    mesh = fem1d.build_mesh(L, n)
    grid = TimeGrid(T=0.05 * N, n_steps=N)
    h0 = cosine_profile(mesh, 0.3)
    if target is None:
        target = cosine_profile(mesh, 0.2, 2)
    return ControlProblem(mesh, PhysParams(), grid, h0, np.zeros(n), target, beta=beta, alpha=alpha)


def test_zero_cost_when_target_reached():
    p = small_problem()
    traj = evaluate(p, p.zero_control()).traj
    p.target = traj.surface(1)[-1]
    assert reduced_cost(p.zero_control(), p) == 0.0


def test_zero_control_cost_is_half_l2_mismatch():
    p = small_problem()
    ev = evaluate(p, p.zero_control())
    e = ev.traj.surface(1)[-1] - p.target
    assert ev.penalty == 0.0
    assert ev.J == pytest.approx(0.5 * e @ (p.M @ e), rel=1e-14)


def test_penalty_quadratic():
    p = small_problem()
    f = np.random.default_rng(0).standard_normal(p.zero_control().shape)
    assert evaluate(p, 2 * f).penalty == pytest.approx(4 * evaluate(p, f).penalty, rel=1e-14)


def test_penalty_ignores_level_zero():
    p = small_problem()
    f = p.zero_control()
    f[0] = 5.0
    assert evaluate(p, f).penalty == 0.0


def test_converged_control_satisfies_alpha_f_equals_r():
    p = small_problem(alpha=1e-1, N=6)
    f, report, ev = gradient_descent(p, tol=1e-7, k_max=500)
    assert report.termination == "converged"
    r = ev.adjoint.r
    assert control_norm(p, p.alpha * f - r) <= 1e-7
    assert control_norm(p, r) > 1e-3
    np.testing.assert_array_equal(reduced_gradient(f, p)[0], 0.0)


def test_already_optimal_returns_immediately():
    p = small_problem()
    p.target = evaluate(p, p.zero_control()).traj.surface(1)[-1]
    f, report, ev = gradient_descent(p, tol=1e-4)
    assert report.iterations == 0 and report.termination == "converged"
    np.testing.assert_array_equal(f, 0.0)
    assert ev.grad_norm == 0.0


def test_flat_zero_gradient_norm_on_every_mesh():
    for n in (8, 33, 100):
        mesh = fem1d.build_mesh(L, n)
        p = ControlProblem(mesh, PhysParams(), TimeGrid(T=0.5, n_steps=5), np.ones(n), np.zeros(n), np.ones(n))
        assert evaluate(p, p.zero_control(), with_gradient=True).grad_norm < 1e-12


def test_descent_monotone_and_reduces_cost():
    p = small_problem()
    f, report, ev = gradient_descent(p, tol=1e-8, k_max=30, lambda0=1.0)
    assert report.is_monotone()
    assert report.J[-1] < 0.1 * report.J[0]
    assert report.termination == "max-iterations"
    assert "gradient norm" in report.message
    assert len(report.J) == report.iterations + 1 == len(report.step) == len(report.linf_err)
    assert ev.J == report.J[-1]
    assert ev.grad_norm == pytest.approx(control_norm(p, ev.grad))
    steps = report.step[1:]
    assert all(b <= a for a, b in zip(steps, steps[1:]))  # persistent halving


def test_stall_is_reported():
    p = small_problem()
    ev = evaluate(p, p.zero_control(), with_gradient=True)

    # A step that can never decrease: start below the floor.
    f, report, _ = gradient_descent(p, tol=1e-12, k_max=5, lambda0=LAMBDA_MIN / 4)
    assert report.termination == "line-search-stalled"
    assert report.iterations == 0
    assert report.J == [ev.J]


@pytest.mark.parametrize("kw", [dict(tol=0.0), dict(k_max=0), dict(lambda0=-1.0)])
def test_descent_rejects_bad_settings(kw):
    with pytest.raises(ValueError):
        gradient_descent(small_problem(), **kw)


@pytest.mark.parametrize("kw", [dict(alpha=0.0), dict(beta=2)])
def test_problem_rejects_bad_settings(kw):
    with pytest.raises(ValueError):
        small_problem(**kw)


def test_mass_guard():
    mesh = fem1d.build_mesh(L, 24)
    good = small_problem(beta=0, target=cosine_profile(mesh, 0.1, 2))
    bad = small_problem(beta=0, target=np.full(24, 1.2))
    assert mass_reachable(good) and not mass_reachable(bad)
    assert mass_reachable(small_problem(beta=1, target=np.full(24, 1.2)))
