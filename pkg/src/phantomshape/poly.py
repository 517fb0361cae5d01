"""Bivariate polynomials in the monomial basis ``x**i * y**j``."""

from __future__ import annotations

import numpy as np


def monomials(degree):
    return [(i, d - i) for d in range(degree + 1) for i in range(d, -1, -1)]


class Polynomial:
    """``p(x, y) = sum_ij c[i, j] x**i y**j``."""

    def __init__(self, coeffs):
        c = np.atleast_2d(np.asarray(coeffs, dtype=float))
        self.c = c
        self.c.setflags(write=False)

    @classmethod
    def from_terms(cls, terms: dict):
        """From ``{(i, j): coefficient}``."""
        if not terms:
            return cls.zero()
        deg = max(i + j for i, j in terms)
        c = np.zeros((deg + 1, deg + 1))
        for (i, j), v in terms.items():
            c[i, j] += v
        return cls(c)

    @classmethod
    def constant(cls, value):
        return cls([[float(value)]])

    @classmethod
    def zero(cls):
        return cls.constant(0.0)

    @property
    def degree(self):
        nz = np.argwhere(np.abs(self.c) > 0)
        return int(nz.sum(axis=1).max()) if nz.size else 0

    @property
    def terms(self):
        return {(int(i), int(j)): float(self.c[i, j]) for i, j in np.argwhere(self.c != 0)}

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.polynomial.polynomial.polyval2d(x[..., 0], x[..., 1], self.c)

    def deriv(self, dx=0, dy=0):
        c = np.polynomial.polynomial.polyder(self.c, dx, axis=0) if dx else self.c
        c = np.polynomial.polynomial.polyder(c, dy, axis=1) if dy else c
        return Polynomial(c if c.size else [[0.0]])

    def gradient(self, x):
        return np.stack([self.deriv(1, 0)(x), self.deriv(0, 1)(x)], axis=-1)

    def hessian(self, x):
        xx, xy, yy = self.deriv(2, 0)(x), self.deriv(1, 1)(x), self.deriv(0, 2)(x)
        return np.stack([np.stack([xx, xy], -1), np.stack([xy, yy], -1)], -2)

    def laplacian(self):
        return self.deriv(2, 0) + self.deriv(0, 2)

    def _padded(self, n):
        c = np.zeros((n, n))
        c[: self.c.shape[0], : self.c.shape[1]] = self.c
        return c

    def __add__(self, other):
        n = max(self.c.shape + other.c.shape)
        return Polynomial(self._padded(n) + other._padded(n))

    def __neg__(self):
        return Polynomial(-self.c)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, k):
        return Polynomial(self.c * float(k))

    __rmul__ = __mul__

    def __repr__(self):
        return f"Polynomial({self.terms})"


def particular_solution(f: Polynomial) -> Polynomial:
    """Minimal-norm polynomial ``u`` with ``-laplace(u) = f``.

    For ``f = c`` this is ``-c (x**2 + y**2) / 4``.
    """
    d = f.degree
    out_terms = monomials(d)
    in_terms = monomials(d + 2)
    row = {t: k for k, t in enumerate(out_terms)}
    A = np.zeros((len(out_terms), len(in_terms)))
    for col, (a, b) in enumerate(in_terms):
        if a >= 2:
            A[row[(a - 2, b)], col] -= a * (a - 1)
        if b >= 2:
            A[row[(a, b - 2)], col] -= b * (b - 1)
    rhs = np.array([f.c[i, j] if i < f.c.shape[0] and j < f.c.shape[1] else 0.0 for i, j in out_terms])
    sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
    sol[np.abs(sol) < 1e-15 * max(1.0, np.abs(sol).max())] = 0.0
    return Polynomial.from_terms({t: v for t, v in zip(in_terms, sol)})


def fit_polynomial(points, values, degree=4):
    """Least-squares polynomial fit; returns ``(poly, max residual)``."""
    points = np.asarray(points, dtype=float)
    terms = monomials(degree)
    V = np.column_stack([points[:, 0] ** i * points[:, 1] ** j for i, j in terms])
    coef = np.linalg.lstsq(V, values, rcond=None)[0]
    resid = float(np.max(np.abs(V @ coef - values))) if len(values) else 0.0
    coef[np.abs(coef) < 1e-13] = 0.0
    return Polynomial.from_terms(dict(zip(terms, coef))), resid


def area_integral(curve, p: Polynomial) -> float:
    """Integral of ``p`` over the region bounded by ``curve`` (Green's theorem)."""
    # p = d/dx P with P = sum c_ij x^(i+1) y^j / (i+1); integral = closed integral of P dy
    c = p.c
    P = np.zeros((c.shape[0] + 1, c.shape[1]))
    P[1:] = c / np.arange(1, c.shape[0] + 1)[:, None]
    vals = Polynomial(P)(curve.points)
    return float(np.sum(vals * curve.d1[:, 1]) * 2 * np.pi / curve.n)
