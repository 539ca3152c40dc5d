"""Shared oracles: brute-force quadrature and a dense reference implementation.

The dense reference assembles the step and adjoint systems element by
element with its own Gauss rules in block ordering ``[h; mu; s]`` and
solves them with ``numpy.linalg.solve``.  It shares no code with the banded
path beyond the potential functions.
"""

from __future__ import annotations

import numpy as np
import pytest

from thinfilm.params import PhysParams, TimeGrid
from thinfilm.potential import PotentialParams, phi_double_prime_minus, phi_prime_minus

# ---------------------------------------------------------------- quadrature


def _midpoint(nodes, func, m):
    total = 0.0
    for a, b in zip(nodes[:-1], nodes[1:]):
        h = (b - a) / m
        xm = a + h * (np.arange(m) + 0.5)
        total += h * np.sum(func(xm))
    return total


def brute_integral(nodes, func, m=400):
    """Midpoint rule per element with one Richardson step (error O(h^4))."""
    coarse = _midpoint(nodes, func, m)
    fine = _midpoint(nodes, func, 2 * m)
    return (4.0 * fine - coarse) / 3.0


def hat(nodes, i):
    e = np.zeros(nodes.size)
    e[i] = 1.0
    return lambda x: np.interp(x, nodes, e)


def hat_prime(nodes, i):
    dx = nodes[1] - nodes[0]

    def d(x):
        out = np.zeros_like(x)
        if i > 0:
            out[(x > nodes[i - 1]) & (x < nodes[i])] = 1.0 / dx
        if i < nodes.size - 1:
            out[(x > nodes[i]) & (x < nodes[i + 1])] = -1.0 / dx
        return out

    return d


def p1(nodes, values):
    return lambda x: np.interp(x, nodes, values)


def p1_prime(nodes, values):
    slopes = np.diff(values) / np.diff(nodes)

    def d(x):
        idx = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, slopes.size - 1)
        return slopes[idx]

    return d


# ---------------------------------------------------------------- dense reference


def _rule(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


# Polynomial integrands use 5 points (exact either way).  The potential terms
# are not polynomial, so they use the 3-point rule that defines the discrete
# equations.
_XP, _WP = _rule(3)


def _element_loop(x, weight_fn, kind, rule=None):
    """Dense n x n matrix of int w * (phi_i or phi_i') * (phi_j or phi_j')."""
    xg, wg = rule or _rule(5)
    n = x.size
    A = np.zeros((n, n))
    for e in range(n - 1):
        dx = x[e + 1] - x[e]
        N = np.stack([1.0 - xg, xg])
        dN = np.array([-1.0, 1.0]) / dx
        w = weight_fn(e, xg) * wg * dx
        for a in range(2):
            for b in range(2):
                if kind == "mass":
                    val = np.sum(w * N[a] * N[b])
                elif kind == "stiff":
                    val = np.sum(w) * dN[a] * dN[b]
                else:  # convection: int w phi_a' phi_b
                    val = np.sum(w * N[b]) * dN[a]
                A[e + a, e + b] += val
    return A


def _field_on_element(values, e, xi):
    return values[e] * (1.0 - xi) + values[e + 1] * xi


def dense_mass(x, w=None, rule=None):
    f = (lambda e, xi: np.ones_like(xi)) if w is None else w
    return _element_loop(x, f, "mass", rule)


def dense_stiffness(x, w=None):
    f = (lambda e, xi: np.ones_like(xi)) if w is None else w
    return _element_loop(x, f, "stiff")


def dense_convection(x, w):
    return _element_loop(x, w, "conv")


def dense_load(x, g_of_field):
    n = x.size
    b = np.zeros(n)
    for e in range(n - 1):
        dx = x[e + 1] - x[e]
        g = g_of_field(e, _XP)
        b[e] += np.sum(_WP * dx * g * (1.0 - _XP))
        b[e + 1] += np.sum(_WP * dx * g * _XP)
    return b


class DenseModel:
    """Reference step and adjoint systems in block ordering."""

    def __init__(self, x, phys: PhysParams, dt: float):
        self.x, self.phys, self.dt = x, phys, dt
        n = x.size
        self.n = n
        self.M = dense_mass(x)
        self.K = dense_stiffness(x)

    def matrix(self, h):
        p, dt, n = self.phys, self.dt, self.n
        a = p.potential.A / p.potential.eps**4
        M, K = self.M, self.K
        Kh3 = dense_stiffness(self.x, lambda e, xi: _field_on_element(h, e, xi) ** 3)
        B = (p.Bo / p.Ca) * M - (1.0 / p.Ca) * K
        Z = np.zeros((n, n))
        return np.block(
            [
                [M, dt / 3.0 * Kh3, Z],
                [B - a * M, M, B],
                [dt * p.gamma / p.Ca * (K - p.Bo * M), Z, M + dt * p.c**2 * K],
            ]
        )

    def step(self, h, s, f_next):
        load = dense_load(self.x, lambda e, xi: phi_prime_minus(self.phys.potential, _field_on_element(h, e, xi)))
        rhs = np.concatenate([self.M @ h, load, self.M @ s + self.dt * self.M @ f_next])
        sol = np.linalg.solve(self.matrix(h), rhs)
        n = self.n
        return sol[:n], sol[n : 2 * n], sol[2 * n :]

    def run(self, h0, s0, f):
        hs, mus, ss = [h0], [None], [s0]
        for k in range(f.shape[0] - 1):
            h, mu, s = self.step(hs[-1], ss[-1], f[k + 1])
            hs.append(h)
            mus.append(mu)
            ss.append(s)
        return np.array(hs), mus, np.array(ss)

    def terminal(self, h_prev, H_T, target, beta):
        n = self.n
        e = self.M @ (target - H_T)
        rhs = np.concatenate([e, np.zeros(n), beta * e])
        sol = np.linalg.solve(self.matrix(h_prev).T, rhs)
        return sol[:n], sol[n : 2 * n], sol[2 * n :]

    def back(self, p1_, q1, r1, h_prev, h_k, mu_k1):
        n = self.n
        slope = np.diff(mu_k1) / np.diff(self.x)
        C = dense_convection(self.x, lambda e, xi: _field_on_element(h_k, e, xi) ** 2 * slope[e])
        Mc = dense_mass(self.x, lambda e, xi: phi_double_prime_minus(self.phys.potential, _field_on_element(h_k, e, xi)), rule=(_XP, _WP))
        rhs = np.concatenate([self.M @ p1_ + Mc @ q1 - self.dt * C.T @ p1_, np.zeros(n), self.M @ r1])
        sol = np.linalg.solve(self.matrix(h_prev).T, rhs)
        return sol[:n], sol[n : 2 * n], sol[2 * n :]


@pytest.fixture
def phys_rupture():
    return PhysParams(Ca=1.0, Bo=1.0, c=0.1, gamma=0.005, potential=PotentialParams(A=0.03, eps=0.1))


@pytest.fixture
def small_grid():
    return TimeGrid(T=0.25, n_steps=5)
