import numpy as np
import pytest

from phantomshape.bvp import (BVPError, SourceSpec, as_source, dtn, pullback_coefficients, read_boundary_csv,
                              solve_dirichlet, write_boundary_csv)
from phantomshape.curves import circle, ellipse, star
from phantomshape.families import Dilation, Rotation, Translation
from phantomshape.poly import Polynomial

INTERIOR = np.array([[0.0, 0.0], [0.3, -0.2], [-0.5, 0.4], [0.1, 0.7]])


def test_disk_poisson():
    sol = solve_dirichlet(circle(128), 2.0, 0.0)
    r2 = np.sum(INTERIOR**2, axis=1)
    assert np.allclose(sol(INTERIOR), (1 - r2) / 2, atol=1e-12)
    assert abs(sol(np.array([0.0, 0.0])) - 0.5) < 1e-12
    assert np.allclose(sol.normal_derivative, -1, atol=1e-12)
    assert np.allclose(sol.gradient(INTERIOR), -INTERIOR, atol=1e-11)
    assert np.allclose(sol.hessian(INTERIOR), -np.eye(2), atol=1e-9)


@pytest.mark.parametrize("curve", [circle(64), ellipse(128, 2.0, 1.0), star(128)])
def test_constants_are_harmonic(curve):
    sol = solve_dirichlet(curve, 0.0, 1.0)
    assert np.allclose(sol(INTERIOR * 0.5), 1, atol=1e-10)
    assert np.max(np.abs(sol.normal_derivative)) < 1e-8


def test_disk_harmonic_cos():
    c = circle(128)
    sol = solve_dirichlet(c, None, np.cos(c.theta))
    assert np.allclose(sol(INTERIOR), INTERIOR[:, 0], atol=1e-12)
    assert np.allclose(sol.normal_derivative, np.cos(c.theta), atol=1e-11)


def test_ellipse_poisson_closed_form():
    # u = 0.8 (1 - x^2/4 - y^2) solves -laplace u = 2, u = 0 on the ellipse
    e = ellipse(256, 2.0, 1.0)
    sol = solve_dirichlet(e, 2.0)
    x = INTERIOR * np.array([2.0, 1.0]) * 0.9
    exact = 0.8 * (1 - x[:, 0] ** 2 / 4 - x[:, 1] ** 2)
    assert np.allclose(sol(x), exact, atol=1e-10)
    grad = np.column_stack([-0.4 * e.points[:, 0], -1.6 * e.points[:, 1]])
    assert np.allclose(sol.normal_derivative, np.sum(grad * e.normal, axis=1), atol=1e-9)
    assert np.allclose(sol.boundary_gradient, grad, atol=1e-8)


def test_star_harmonic_polynomial():
    c = star(256, 1.0, 0.2, 5)
    g = c.points[:, 0] ** 2 - c.points[:, 1] ** 2
    sol = solve_dirichlet(c, None, g)
    x = INTERIOR * 0.6
    assert np.allclose(sol(x), x[:, 0] ** 2 - x[:, 1] ** 2, atol=1e-9)


def test_polynomial_source():
    # u = x (1 - r^2) / 8 has -laplace u = x, zero on the unit circle
    c = circle(128)
    sol = solve_dirichlet(c, Polynomial.from_terms({(1, 0): 1.0}))
    r2 = np.sum(INTERIOR**2, axis=1)
    assert np.allclose(sol(INTERIOR), INTERIOR[:, 0] * (1 - r2) / 8, atol=1e-12)


def test_analytic_source_checked():
    up = lambda x: -0.5 * np.sum(np.atleast_2d(x) ** 2, axis=-1)
    src = SourceSpec.analytic(lambda x: 2 * np.ones(np.atleast_2d(x).shape[0]), up)
    sol = solve_dirichlet(circle(64), src)
    assert abs(sol(np.array([0.0, 0.0])) - 0.5) < 1e-9
    bad = SourceSpec.analytic(lambda x: np.ones(np.atleast_2d(x).shape[0]), up)
    with pytest.raises(BVPError):
        solve_dirichlet(circle(64), bad)


def test_outside_point_rejected():
    sol = solve_dirichlet(circle(64), 2.0)
    with pytest.raises(BVPError):
        sol(np.array([2.0, 0.0]))


@pytest.mark.parametrize("curve", [circle(128), ellipse(128, 2.0, 1.0), star(128)])
def test_maximum_principle_and_green_identity(curve):
    sol = solve_dirichlet(curve, 2.0)
    # u > 0 inside, outward normal derivative <= 0
    assert np.all(sol.normal_derivative <= 1e-12)
    pts = curve.points * 0.5
    assert np.all(sol(pts) > 0)
    flux = np.sum(sol.normal_derivative * curve.weights)
    assert abs(flux + 2 * curve.area) < 1e-9 * curve.area


def test_dtn_disk_modes():
    c = circle(128)
    D = dtn(c)
    th = c.theta
    assert np.max(np.abs(D(np.ones(128)))) < 1e-8
    for k in range(1, 9):
        assert np.max(np.abs(D(np.cos(k * th)) - k * np.cos(k * th))) < 1e-7
    assert np.max(np.abs(D(np.sin(3 * th)) - 3 * np.sin(3 * th))) < 1e-7


def test_dtn_general_curve_properties():
    c = star(128)
    D = dtn(c).matrix
    assert np.max(np.abs(D @ np.ones(c.n))) < 1e-8
    # symmetric in the arclength-weighted inner product and positive semidefinite
    W = np.diag(c.weights)
    S = W @ D
    assert np.max(np.abs(S - S.T)) < 1e-7 * np.max(np.abs(S))
    assert np.min(np.linalg.eigvalsh(0.5 * (S + S.T))) > -1e-8


def test_pullback_coefficients():
    pts = np.array([[0.2, 0.1], [-0.4, 0.3]])
    a, b = pullback_coefficients(Translation(), 0.0, pts)
    assert np.allclose(a, np.eye(2), atol=1e-8) and np.allclose(b, 0, atol=1e-6)
    a, b = pullback_coefficients(Dilation(), 0.1, pts)
    assert np.allclose(a, np.eye(2) / 1.21, atol=1e-8) and np.allclose(b, 0, atol=1e-6)
    a, b = pullback_coefficients(Translation(), 0.3, pts)
    assert np.allclose(a, np.eye(2), atol=1e-8) and np.allclose(b, 0, atol=1e-6)
    a, b = pullback_coefficients(Rotation(), 0.4, pts)
    assert np.allclose(a, np.eye(2), atol=1e-8) and np.allclose(b, 0, atol=1e-6)


def test_as_source():
    assert as_source(None).value == 0.0
    assert as_source(3).value == 3.0
    assert as_source(Polynomial.from_terms({(1, 0): 1.0})).value is None


def test_boundary_csv_roundtrip(tmp_path):
    c = circle(16)
    p = tmp_path / "g.csv"
    write_boundary_csv(p, c.theta, np.sin(c.theta))
    theta, vals = read_boundary_csv(p)
    assert np.array_equal(vals, np.sin(c.theta)) and np.array_equal(theta, c.theta)
