"""Mesh, quadrature, Neumann Laplacian, norms, Helmholtz solves, the
embedding-constant estimator, and field serialization."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pfsmc import grid
from pfsmc.grid import Field, Mesh, SolverError


def random_field(mesh, rng, scale=1.0):
    return scale * rng.standard_normal(mesh.counts)


# ----------------------------------------------------------------------- mesh


def test_mesh_derived_quantities():
    m = Mesh((2.0, 3.0), (5, 7))
    assert m.dim == 2
    assert m.measure == 6.0
    for h, n, L in zip(m.spacings, m.counts, m.lengths):
        assert h * (n - 1) == pytest.approx(L, rel=1e-15)
    assert m.coords[0][0] == 0.0
    assert m.coords[1][-1] == 3.0


def test_mesh_validation():
    with pytest.raises(ValueError):
        Mesh((1.0,), (2,))
    with pytest.raises(ValueError):
        Mesh((-1.0,), (9,))
    with pytest.raises(ValueError):
        Mesh((1.0, 1.0), (9,))
    with pytest.raises(ValueError):
        Mesh((1.0,) * 4, (5,) * 4)


def test_mesh_structural_equality():
    assert Mesh((1.0,), (9,)) == Mesh((1.0,), (9,))
    assert Mesh((1.0,), (9,)) != Mesh((1.0,), (17,))


def test_field_shape_check():
    m = Mesh((1.0,), (9,))
    with pytest.raises(ValueError):
        Field(m, np.zeros(8))
    f = grid.const_field(m, 2.5)
    assert f.v.shape == (9,)
    assert float(f.v[0]) == 2.5


# ----------------------------------------------------------------- quadrature


def test_integrate_constant_is_measure():
    for lengths, counts in (((1.0,), (9,)), ((2.0, 0.5), (5, 9)), ((1.0, 1.0, 1.0), (3, 4, 5))):
        m = Mesh(lengths, counts)
        assert m.integrate(np.ones(m.counts)) == pytest.approx(m.measure, rel=1e-14)


def test_integrate_quadratic_exact_trapezoid_error():
    # composite trapezoid on x^2 over [0,1] gives 1/3 + h^2/6 exactly
    for n in (9, 33, 129):
        m = Mesh((1.0,), (n,))
        h = m.spacings[0]
        x = m.coords[0]
        assert m.integrate(x**2) == pytest.approx(1.0 / 3.0 + h * h / 6.0, rel=1e-14)


def test_inner_and_norm_consistent(rng):
    m = Mesh((1.5,), (33,))
    v = random_field(m, rng)
    assert m.norm_l2(v) == pytest.approx(math.sqrt(m.inner(v, v)), rel=1e-14)


# ------------------------------------------------------------------ laplacian


def test_laplacian_constant_in_kernel():
    for m in (Mesh((1.0,), (9,)), Mesh((1.0, 2.0), (5, 7))):
        out = grid.laplacian_neumann(m, np.full(m.counts, 5.0))
        assert np.all(out == 0.0)


def test_laplacian_discrete_eigenfunction():
    m = Mesh((1.0,), (33,))
    h = m.spacings[0]
    for k in (1, 2, 5):
        v = np.cos(k * math.pi * m.coords[0])
        lam = -(4.0 / h**2) * math.sin(k * math.pi * h / 2.0) ** 2
        resid = grid.laplacian_neumann(m, v) - lam * v
        assert np.max(np.abs(resid)) < 1e-11 * abs(lam)


def test_laplacian_second_order_convergence():
    errs = []
    for n in (17, 33, 65):
        m = Mesh((1.0,), (n,))
        v = np.cos(math.pi * m.coords[0])
        exact = -(math.pi**2) * v
        errs.append(np.max(np.abs(grid.laplacian_neumann(m, v) - exact)))
    assert 3.5 < errs[0] / errs[1] < 4.5
    assert 3.5 < errs[1] / errs[2] < 4.5


def test_laplacian_mean_free(rng):
    for m in (Mesh((1.0,), (17,)), Mesh((0.7, 1.3), (9, 11))):
        for _ in range(5):
            v = random_field(m, rng)
            lap = grid.laplacian_neumann(m, v)
            assert abs(m.integrate(lap)) < 1e-12 * max(1.0, np.max(np.abs(lap)))


def test_laplacian_self_adjoint(rng):
    for m in (Mesh((1.0,), (17,)), Mesh((0.7, 1.3), (9, 11))):
        for _ in range(5):
            u = random_field(m, rng)
            v = random_field(m, rng)
            lu, lv = grid.laplacian_neumann(m, u), grid.laplacian_neumann(m, v)
            scale = max(1.0, abs(m.inner(lu, v)))
            assert abs(m.inner(lu, v) - m.inner(u, lv)) < 1e-12 * scale


# ---------------------------------------------------------------------- norms


def test_norms_constant_field():
    m = Mesh((2.0,), (17,))
    n = grid.field_norms(m, np.ones(m.counts))
    assert n.l2 == pytest.approx(math.sqrt(2.0), rel=1e-14)
    assert n.linf == 1.0
    c = 3.5
    n = grid.field_norms(m, np.full(m.counts, c))
    assert n.wnorm == pytest.approx(c * math.sqrt(2.0), rel=1e-14)
    assert n.h1 == pytest.approx(c * math.sqrt(2.0), rel=1e-14)


def test_norms_zero_field():
    m = Mesh((1.0,), (9,))
    n = grid.field_norms(m, np.zeros(9))
    assert (n.l2, n.linf, n.h1, n.wnorm) == (0.0, 0.0, 0.0, 0.0)


def test_wnorm_identity(rng):
    m = Mesh((1.3,), (21,))
    v = random_field(m, rng)
    n = grid.field_norms(m, v)
    lap = grid.laplacian_neumann(m, v)
    want = math.sqrt(n.l2**2 + m.measure ** (4.0 / 3.0) * m.inner(lap, lap))
    assert n.wnorm == pytest.approx(want, rel=1e-12)
    assert n.h1 >= n.l2


@given(st.integers(0, 2**32 - 1))
def test_l2_bounded_by_linf(seed):
    m = Mesh((1.7,), (13,))
    v = np.random.default_rng(seed).uniform(-5, 5, m.counts)
    n = grid.field_norms(m, v)
    assert n.l2 <= math.sqrt(m.measure) * n.linf + 1e-12


# ------------------------------------------------------------------ helmholtz


def test_helmholtz_manufactured_solution():
    m = Mesh((1.0,), (65,))
    x = m.coords[0]
    want = np.cos(math.pi * x) + 0.2 * np.cos(3 * math.pi * x)
    c = 0.7
    b = want - c * grid.laplacian_neumann(m, want)
    got = grid.solve_helmholtz(m, c, b)
    assert np.max(np.abs(got - want)) < 1e-9


def test_helmholtz_zero_coefficient_identity(rng):
    m = Mesh((1.0,), (17,))
    b = random_field(m, rng)
    got = grid.solve_helmholtz(m, 0.0, b)
    assert np.max(np.abs(got - b)) < 1e-12


def test_helmholtz_rejects_nonfinite():
    m = Mesh((1.0,), (9,))
    b = np.zeros(9)
    b[4] = np.nan
    with pytest.raises(SolverError):
        grid.solve_helmholtz(m, 0.1, b)
    b[4] = np.inf
    with pytest.raises(SolverError):
        grid.solve_helmholtz(m, 0.1, b)


def test_helmholtz_huge_rhs_rescales(rng):
    m = Mesh((1.0,), (33,))
    base = random_field(m, rng)
    c = 0.3
    small = grid.solve_helmholtz(m, c, base)
    big = grid.solve_helmholtz(m, c, base * 1e150)
    assert np.all(np.isfinite(big))
    assert np.max(np.abs(big * 1e-150 - small)) < 1e-10 * np.max(np.abs(small))
    resid = big - c * grid.laplacian_neumann(m, big) - base * 1e150
    assert np.max(np.abs(resid)) < 1e-8 * 1e150


# ------------------------------------------------------------------ embedding


def test_embedding_deterministic():
    m = Mesh((1.0,), (65,))
    a = grid.estimate_embedding_constant(m, samples=50, seed=3)
    b = grid.estimate_embedding_constant(m, samples=50, seed=3)
    assert a == b


def test_embedding_above_constant_field_bound():
    for L, n in ((0.25, 65), (1.0, 65), (2.0, 33)):
        m = Mesh((L,), (n,))
        est = grid.estimate_embedding_constant(m, samples=50, seed=0)
        assert est >= m.measure ** -0.5 - 1e-12


def test_embedding_refinement_stable():
    a = grid.estimate_embedding_constant(Mesh((1.0,), (65,)), samples=200, seed=0)
    b = grid.estimate_embedding_constant(Mesh((1.0,), (129,)), samples=200, seed=0)
    assert abs(a - b) / b < 0.05


def test_embedding_small_domain_saturates():
    # in a tiny box the constant field wins and the estimate hits the
    # measure^{-1/2} lower bound
    m = Mesh((0.004,), (33,))
    est = grid.estimate_embedding_constant(m, samples=200, seed=0)
    assert est == pytest.approx(0.004**-0.5, rel=1e-9)


def test_embedding_rescaling_law():
    a = grid.estimate_embedding_constant(Mesh((0.25,), (65,)), samples=200, seed=0)
    b = grid.estimate_embedding_constant(Mesh((1.0,), (65,)), samples=200, seed=0)
    assert a / b == pytest.approx(2.0, rel=0.10)


# -------------------------------------------------------------------- signing


def test_sign_eps_field_norm_branches():
    m = Mesh((2.0,), (17,))
    v = np.ones(m.counts)  # l2 norm sqrt(2)
    out = grid.sign_eps(m, v, 1.0)
    assert m.norm_l2(out) == pytest.approx(1.0, rel=1e-12)
    out = grid.sign_eps(m, 1e-3 * v, 1.0)
    np.testing.assert_allclose(out, 1e-3 * v, rtol=1e-14)
    out = grid.sign_eps(m, np.zeros(m.counts), 0.5)
    assert np.all(out == 0.0)


# ------------------------------------------------------------------------- io


def test_csv_roundtrip_and_byte_stability(tmp_path, rng):
    m = Mesh((1.0, 0.5), (5, 7))
    f = Field(m, rng.uniform(-3, 3, m.counts))
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    grid.write_field_csv(f, p1)
    grid.write_field_csv(f, p2)
    assert p1.read_bytes() == p2.read_bytes()
    back = grid.read_field_csv(p1)
    assert back.mesh == m
    np.testing.assert_array_equal(back.values, f.values)


def test_binary_roundtrip_bit_exact(tmp_path, rng):
    m = Mesh((1.0,), (33,))
    vals = rng.standard_normal(m.counts)
    vals[0] = 1e-300
    vals[1] = -1e300
    vals[2] = 0.1 + 0.2  # not representable exactly, must survive untouched
    f = Field(m, vals)
    p = tmp_path / "f.pff"
    grid.write_field_binary(f, p)
    back = grid.read_field_binary(p)
    assert back.mesh == m
    np.testing.assert_array_equal(back.values, f.values)


def test_binary_bad_magic(tmp_path):
    p = tmp_path / "junk.pff"
    p.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError):
        grid.read_field_binary(p)


def test_binary_truncated_payload(tmp_path):
    m = Mesh((1.0,), (9,))
    f = grid.const_field(m, 1.0)
    p = tmp_path / "t.pff"
    grid.write_field_binary(f, p)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(ValueError):
        grid.read_field_binary(p)
