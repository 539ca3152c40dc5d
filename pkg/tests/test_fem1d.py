import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_integral, hat, hat_prime, p1
from thinfilm import fem1d
from thinfilm.fem1d import BandedSystem, SingularMatrixError, build_mesh


def brute_matrix(mesh, weight, kind):
    n = mesh.n_nodes
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(max(0, i - 1), min(n, i + 2)):
            a = hat_prime(mesh.x, i) if kind in ("stiff", "conv") else hat(mesh.x, i)
            b = hat_prime(mesh.x, j) if kind == "stiff" else hat(mesh.x, j)
            out[i, j] = brute_integral(mesh.x, lambda x: weight(x) * a(x) * b(x))
    return out


# ---------------------------------------------------------------- mesh


def test_mesh_nodes():
    m = build_mesh(2.0, 3)
    np.testing.assert_array_equal(m.x, [0.0, 1.0, 2.0])
    assert m.dx == 1.0 and m.n_elements == 2


def test_mesh_dx_hammond_domain():
    m = build_mesh(3 * np.pi, 250)
    assert m.dx == pytest.approx(3 * np.pi / 249, rel=1e-15)
    assert np.allclose(np.diff(m.x), m.dx, rtol=1e-12)
    assert m.x[0] == 0.0 and m.x[-1] == pytest.approx(3 * np.pi, rel=1e-15)


@pytest.mark.parametrize("L, n", [(1.0, 2), (0.0, 5), (-1.0, 5), (np.inf, 5), (np.nan, 5)])
def test_mesh_rejects(L, n):
    with pytest.raises(ValueError):
        build_mesh(L, n)


# ---------------------------------------------------------------- mass / stiffness


def test_mass_unit_elements():
    M = fem1d.assemble_mass(build_mesh(2.0, 3)).to_dense()
    np.testing.assert_allclose(np.diag(M), [1 / 3, 2 / 3, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(np.diag(M, 1), [1 / 6, 1 / 6], atol=1e-15)
    np.testing.assert_allclose(np.diag(M, -1), [1 / 6, 1 / 6], atol=1e-15)


def test_mass_total_is_length():
    M = fem1d.assemble_mass(build_mesh(5.0, 11))
    assert M.to_dense().sum() == pytest.approx(5.0, rel=1e-14)
    assert np.sum(fem1d.assemble_mass(build_mesh(2.0, 3)) @ np.ones(3)) == pytest.approx(2.0, rel=1e-15)


def test_stiffness_unit_elements():
    K = fem1d.assemble_stiffness(build_mesh(2.0, 3)).to_dense()
    np.testing.assert_allclose(K, [[1, -1, 0], [-1, 2, -1], [0, -1, 1]], atol=1e-15)


def test_stiffness_on_linear_field():
    m = build_mesh(1.0, 5)
    K = fem1d.assemble_stiffness(m)
    np.testing.assert_allclose(K @ np.ones(5), 0.0, atol=1e-14)
    np.testing.assert_allclose(K @ m.x, [-1, 0, 0, 0, 1], atol=1e-13)


def test_symmetry_and_definiteness():
    rng = np.random.default_rng(3)
    m = build_mesh(3.0, 17)
    w = 1.0 + rng.random(m.n_nodes)
    for A in (
        fem1d.assemble_mass(m),
        fem1d.assemble_stiffness(m),
        fem1d.assemble_weighted_mass(m, w),
        fem1d.assemble_weighted_stiffness(m, fem1d.interpolate(m, w) ** 3),
    ):
        D = A.to_dense()
        assert np.max(np.abs(D - D.T)) <= 1e-14
    M = fem1d.assemble_mass(m).to_dense()
    for _ in range(100):
        v = rng.standard_normal(m.n_nodes)
        assert v @ M @ v > 0
    ev = np.linalg.eigvalsh(fem1d.assemble_stiffness(m).to_dense())
    assert abs(ev[0]) < 1e-12 and ev[1] > 1e-6


# ---------------------------------------------------------------- weighted assemblies


def test_weighted_reduce_to_plain():
    m = build_mesh(2.0, 3)
    np.testing.assert_allclose(fem1d.assemble_weighted_mass(m, np.ones(3)).to_dense(), fem1d.assemble_mass(m).to_dense(), atol=1e-15)
    np.testing.assert_allclose(fem1d.assemble_weighted_mass(m, 3 * np.ones(3)).to_dense(), 3 * fem1d.assemble_mass(m).to_dense(), atol=1e-15)
    np.testing.assert_allclose(fem1d.assemble_weighted_stiffness(m, np.ones(3)).to_dense(), fem1d.assemble_stiffness(m).to_dense(), atol=1e-15)
    np.testing.assert_allclose(fem1d.assemble_weighted_stiffness(m, 2.5).to_dense(), 2.5 * fem1d.assemble_stiffness(m).to_dense(), atol=1e-15)


def test_weighted_mass_hat_weight_oracle():
    m = build_mesh(2.0, 3)
    w = np.array([0.0, 1.0, 0.0])
    got = fem1d.assemble_weighted_mass(m, w).to_dense()
    np.testing.assert_allclose(got, brute_matrix(m, p1(m.x, w), "mass"), rtol=1e-12, atol=1e-14)
    # Exact values: int_0^1 x^3 = 1/4, int_0^1 x^2 (1-x) = 1/12.
    np.testing.assert_allclose(got[1, 1], 0.5, rtol=1e-14)
    np.testing.assert_allclose(got[0, 1], 1 / 12, rtol=1e-14)


@pytest.mark.parametrize("kind", ["mass", "stiff", "conv"])
def test_weighted_assemblies_match_brute_force(kind):
    rng = np.random.default_rng(11)
    m = build_mesh(2.5, 9)
    h = 1.0 + 0.3 * rng.standard_normal(m.n_nodes)
    assemble = {
        "mass": fem1d.assemble_weighted_mass,
        "stiff": fem1d.assemble_weighted_stiffness,
        "conv": fem1d.assemble_weighted_convection,
    }[kind]
    # Nodal weight, and a cubic weight passed at quadrature points.
    for weight_q, weight_fn in (
        (h, p1(m.x, h)),
        (fem1d.interpolate(m, h) ** 3, lambda x: p1(m.x, h)(x) ** 3),
    ):
        got = assemble(m, weight_q).to_dense()
        ref = brute_matrix(m, weight_fn, kind)
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())


def test_convection_properties():
    m = build_mesh(2.0, 6)
    C = fem1d.assemble_weighted_convection(m, 1.0).to_dense()
    np.testing.assert_allclose(C.sum(axis=0), 0.0, atol=1e-14)
    # int phi_i' dx = phi_i(L) - phi_i(0)
    np.testing.assert_allclose(C @ np.ones(6), [-1, 0, 0, 0, 0, 1], atol=1e-14)
    ref = brute_matrix(m, lambda x: np.ones_like(x), "conv")
    np.testing.assert_allclose(C, ref, atol=1e-12)
    assert not np.allclose(C, C.T)


def test_stiffness_rows_sum_to_zero():
    rng = np.random.default_rng(0)
    m = build_mesh(1.0, 12)
    K = fem1d.assemble_weighted_stiffness(m, rng.random(m.n_nodes) + 0.1)
    np.testing.assert_allclose(K @ np.ones(m.n_nodes), 0.0, atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.integers(0, 2**31 - 1))
def test_assembly_linear_in_weight(alpha, seed):
    rng = np.random.default_rng(seed)
    m = build_mesh(1.7, 8)
    w1, w2 = rng.standard_normal((2, m.n_nodes))
    for assemble in (fem1d.assemble_weighted_mass, fem1d.assemble_weighted_stiffness, fem1d.assemble_weighted_convection):
        lhs = assemble(m, alpha * w1 + w2).to_dense()
        rhs = alpha * assemble(m, w1).to_dense() + assemble(m, w2).to_dense()
        np.testing.assert_allclose(lhs, rhs, atol=1e-13 * max(1.0, abs(alpha)) * np.abs(rhs).max(initial=1.0))


def test_weight_shape_rejected():
    m = build_mesh(1.0, 5)
    with pytest.raises(ValueError):
        fem1d.assemble_weighted_mass(m, np.ones(7))


# ---------------------------------------------------------------- loads and integrals


def test_load_constant_and_zero():
    m = build_mesh(2.0, 7)
    np.testing.assert_allclose(fem1d.assemble_load(m, 1.0), fem1d.assemble_mass(m) @ np.ones(7), atol=1e-15)
    np.testing.assert_array_equal(fem1d.assemble_load(m, lambda x: 0.0 * x), np.zeros(7))


def test_load_x_squared_oracle():
    m = build_mesh(1.0, 5)
    got = fem1d.assemble_load(m, lambda x: x**2)
    ref = [brute_integral(m.x, lambda x, i=i: x**2 * hat(m.x, i)(x)) for i in range(5)]
    np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-15)


def test_integrate_polynomial():
    m = build_mesh(2.0, 4)
    assert fem1d.integrate(m, fem1d.quadrature_points(m) ** 5) == pytest.approx(2.0**6 / 6, rel=1e-14)


# ---------------------------------------------------------------- banded solves


def test_identity_solve():
    r = np.arange(5.0)
    I = BandedSystem.from_dense(np.eye(5), 1)
    np.testing.assert_array_equal(fem1d.solve_banded(I, r), r)


def test_mass_round_trip():
    rng = np.random.default_rng(5)
    m = build_mesh(4.0, 40)
    M = fem1d.assemble_mass(m)
    v = rng.standard_normal(40)
    np.testing.assert_allclose(fem1d.solve_banded(M, M @ v), v, rtol=1e-10, atol=1e-12)


def test_random_banded_residual_and_transpose():
    rng = np.random.default_rng(7)
    n, hb = 30, 5
    D = np.zeros((n, n))
    for d in range(-hb, hb + 1):
        D += np.diag(rng.standard_normal(n - abs(d)), d)
    D += 8 * np.eye(n)
    A = BandedSystem.from_dense(D, hb)
    np.testing.assert_allclose(A.to_dense(), D)
    b = rng.standard_normal(n)
    lu = A.factorize()
    x = lu.solve(b)
    assert np.abs(D @ x - b).max() / np.abs(b).max() <= 1e-10
    y = lu.solve(b, transpose=True)
    assert np.abs(D.T @ y - b).max() / np.abs(b).max() <= 1e-10
    np.testing.assert_allclose(A.T.to_dense(), D.T)
    np.testing.assert_allclose(A @ b, D @ b, atol=1e-12)


def test_stiffness_is_singular():
    K = fem1d.assemble_stiffness(build_mesh(1.0, 9))
    with pytest.raises(SingularMatrixError):
        fem1d.solve_banded(K, np.ones(9))
