import numpy as np
import pytest

from phantomshape.curves import circle, ellipse
from phantomshape.poly import Polynomial, area_integral, fit_polynomial, monomials, particular_solution


def test_evaluation_and_derivatives():
    p = Polynomial.from_terms({(2, 0): 1.0, (1, 1): 3.0, (0, 3): -2.0, (0, 0): 5.0})
    x = np.array([[0.5, -1.0], [2.0, 0.3]])
    X, Y = x[:, 0], x[:, 1]
    assert np.allclose(p(x), X**2 + 3 * X * Y - 2 * Y**3 + 5)
    assert np.allclose(p.gradient(x), np.column_stack([2 * X + 3 * Y, 3 * X - 6 * Y**2]))
    H = p.hessian(x)
    assert np.allclose(H[:, 0, 1], 3) and np.allclose(H[:, 1, 1], -12 * Y)
    assert p.degree == 3


def test_constant_and_zero():
    assert Polynomial.constant(2.5)(np.array([1.0, 7.0])) == 2.5
    assert Polynomial.zero().degree == 0 and Polynomial.from_terms({}).terms == {}


@pytest.mark.parametrize("terms", [{(0, 0): 2.0}, {(1, 0): 1.0, (0, 2): 3.0}, {(2, 1): -1.0, (0, 0): 0.5}])
def test_particular_solution(terms):
    f = Polynomial.from_terms(terms)
    u = particular_solution(f)
    x = np.random.default_rng(0).normal(size=(20, 2))
    assert np.allclose(-u.laplacian()(x), f(x), atol=1e-12)


def test_particular_solution_constant_is_radial():
    u = particular_solution(Polynomial.constant(2.0))
    t = u.terms
    assert set(t) == {(2, 0), (0, 2)} and np.allclose([t[(2, 0)], t[(0, 2)]], -0.5, atol=1e-14)


def test_fit_polynomial_exact():
    x = np.random.default_rng(1).normal(size=(40, 2))
    p = Polynomial.from_terms({(3, 0): 1.0, (1, 2): -2.0})
    q, resid = fit_polynomial(x, p(x), 4)
    assert resid < 1e-10 and np.allclose(q(x), p(x))


def test_area_integral():
    assert abs(area_integral(circle(64), Polynomial.constant(1.0)) - np.pi) < 1e-12
    assert abs(area_integral(ellipse(64, 2.0, 1.0), Polynomial.constant(2.0)) - 4 * np.pi) < 1e-12
    r2 = Polynomial.from_terms({(2, 0): 1.0, (0, 2): 1.0})
    assert abs(area_integral(circle(64), r2) - np.pi / 2) < 1e-12


def test_monomials_count():
    assert len(monomials(3)) == 10
