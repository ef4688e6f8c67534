import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from haptofv import Grid
from haptofv.grid import read_snapshot, write_snapshot

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_grid_rejects_bad_boxes():
    with pytest.raises(ValueError):
        Grid.uniform(1.0, 0.0, 10)
    with pytest.raises(ValueError):
        Grid.uniform(0.0, 1.0, 1)
    with pytest.raises(ValueError):
        Grid((0, 0), (1, 1), (4,))


def test_geometry_2d():
    g = Grid((0.0, 0.0), (1.0, 2.0), (4, 8))
    assert g.spacing == (0.25, 0.25)
    assert g.cell_volume == 0.0625
    assert g.face_area(0) == 0.25
    assert g.centers[0].shape == (4, 8)
    assert g.boundary_mask().sum() == 2 * 4 + 2 * 8 - 4


def test_face_gradient_constant_and_affine():
    g = Grid.uniform(-2, 3, 17)
    (d,) = g.face_gradient(np.full(17, 3.5))
    assert np.all(d == 0.0)
    (d,) = g.face_gradient(g.axes[0])
    np.testing.assert_allclose(d, 1.0, rtol=1e-12)


def test_face_gradient_quadratic_exact():
    g = Grid.uniform(0, 1, 10)
    (d,) = g.face_gradient(g.axes[0] ** 2)
    np.testing.assert_allclose(d, 2 * g.face_coordinates(0), rtol=1e-13)


def test_face_gradient_2d_axes():
    g = Grid((0.0, 0.0), (1.0, 1.0), (5, 7))
    x, y = g.centers
    dx, dy = g.face_gradient(3 * x - 2 * y)
    assert dx.shape == (4, 7) and dy.shape == (5, 6)
    np.testing.assert_allclose(dx, 3.0)
    np.testing.assert_allclose(dy, -2.0)


@pytest.mark.parametrize("n", [2, 7, 64])
def test_integrate_constants(n):
    assert Grid.uniform(0, 1, n).integrate(np.ones(n)) == pytest.approx(1.0, rel=1e-14)
    g = Grid((0.0, 0.0), (1.0, 2.0), (n, n))
    assert g.integrate(np.full(g.shape, 2.0)) == pytest.approx(4.0, rel=1e-14)
    g = Grid((0.0, 0.0), (2.0, 2.0), (n, n))
    assert g.integrate(np.full(g.shape, 2.0)) == pytest.approx(8.0, rel=1e-14)


def test_integrate_gaussian_against_erf():
    exact = math.sqrt(math.pi) * math.erf(6.0)
    for n in (50, 200):
        g = Grid.uniform(-6, 6, n)
        assert g.integrate(np.exp(-g.axes[0] ** 2)) == pytest.approx(exact, rel=1e-12)
    g = Grid.uniform(-6, 6, 100, dim=2)
    assert g.integrate(np.exp(-g.radius_sq)) == pytest.approx(exact**2, rel=1e-12)


def test_norms_of_indicator():
    g = Grid.uniform(0, 1, 40)
    f = np.where(g.axes[0] < 0.5, 2.0, 0.0)
    assert g.lp_norm(f, 1) == pytest.approx(1.0, rel=1e-14)
    assert g.lp_norm(f, 2) == pytest.approx(math.sqrt(2), rel=1e-14)
    assert g.lp_norm(f, 3) == pytest.approx(4 ** (1 / 3), rel=1e-14)
    assert g.lp_norm(f, np.inf) == 2.0
    z = np.zeros(40)
    assert g.lp_norm(z, 1) == g.lp_norm(z, 2) == g.second_moment(z) == 0.0
    with pytest.raises(ValueError):
        g.lp_norm(f, 0.5)


def test_second_moment_converges():
    errs = []
    for n in (10, 20, 40, 80):
        g = Grid.uniform(-1, 1, n)
        errs.append(abs(g.second_moment(np.ones(n)) - 1 / 3))
    # midpoint rule on x^2/2: error exactly h^2/12
    for n, e in zip((10, 20, 40, 80), errs):
        assert e == pytest.approx((2 / n) ** 2 / 12, rel=1e-9)


def test_weighted_integral():
    g = Grid.uniform(0, 1, 8)
    w = np.linspace(0, 1, 8)
    assert g.weighted_integral(w, np.ones(8)) == pytest.approx(g.integrate(w))


@given(arrays(float, 12, elements=finite), st.floats(-50, 50), st.sampled_from([1.0, 2.0, 3.0]))
def test_lp_homogeneous(f, c, p):
    g = Grid.uniform(0, 3, 12)
    assert g.lp_norm(c * f, p) == pytest.approx(abs(c) * g.lp_norm(f, p), rel=1e-9, abs=1e-12)


@given(arrays(float, 12, elements=finite), arrays(float, 12, elements=finite), finite)
def test_integrate_linear(f, h, c):
    g = Grid.uniform(-1, 2, 12)
    lhs = g.integrate(f + c * h)
    rhs = g.integrate(f) + c * g.integrate(h)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-6)


@given(arrays(float, (6, 5), elements=st.floats(-10, 10)), arrays(float, (6, 5), elements=st.floats(-10, 10)))
def test_summation_by_parts(a, b):
    # sum_cells div(F) g = - sum_faces F grad g with no-flux boundaries
    g = Grid((0.0, -1.0), (1.0, 2.0), (6, 5))
    flux = g.face_gradient(a)
    lhs = g.integrate(g.divergence(flux) * b)
    rhs = -g.face_integral([f * d for f, d in zip(flux, g.face_gradient(b))])
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-8)


def test_divergence_conserves():
    g = Grid.uniform(0, 1, 9)
    rng = np.random.default_rng(1)
    assert abs(g.integrate(g.divergence((rng.normal(size=8),)))) < 1e-14


def test_restrict_preserves_integral():
    g = Grid((0.0, 0.0), (1.0, 1.0), (8, 4))
    f = np.random.default_rng(0).random(g.shape)
    coarse = Grid((0.0, 0.0), (1.0, 1.0), (4, 2))
    assert coarse.integrate(g.restrict(f)) == pytest.approx(g.integrate(f), rel=1e-14)
    with pytest.raises(ValueError):
        Grid.uniform(0, 1, 5).restrict(np.ones(5))


@pytest.mark.parametrize("dim", [1, 2])
def test_snapshot_round_trip(tmp_path, dim):
    g = Grid.uniform(-1, 1, 6, dim=dim)
    rng = np.random.default_rng(3)
    psi, phi = rng.random(g.shape), rng.random(g.shape) / 3
    path = tmp_path / "s.csv"
    write_snapshot(path, g, psi, phi, 0.1 + 0.2, {"seed": 7})
    g2, psi2, phi2, t = read_snapshot(path)
    assert g2 == g and t == 0.1 + 0.2
    assert np.array_equal(psi2, psi) and np.array_equal(phi2, phi)
