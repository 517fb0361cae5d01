"""Dirichlet problem ``-laplace(u) = f, u = g`` inside a smooth closed curve.

The harmonic part is a double-layer potential with a Nystrom
discretization on the curve's periodic grid. Its analytic completion
``Phi`` (with ``Re Phi`` the potential) is recovered on the boundary, and
interior values come from the barycentric Cauchy formula, which stays
accurate right up to the boundary.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .curves import Curve, winding_number
from .poly import Polynomial, particular_solution
from .spectral import differentiate, differentiation_matrix


class BVPError(ValueError):
    """Raised for ill-posed or unsupported boundary value problems."""


# --- source terms -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SourceSpec:
    """Right-hand side ``f`` together with a particular solution ``u_p``.

    Build with :meth:`zero`, :meth:`constant`, :meth:`polynomial` or
    :meth:`analytic`.
    """

    kind: str
    f: Callable
    u_p: Callable
    grad_u_p: Callable
    hess_u_p: Callable
    poly: Polynomial | None = None
    particular: Polynomial | None = None

    @classmethod
    def polynomial(cls, p, kind="polynomial"):
        if not isinstance(p, Polynomial):
            p = Polynomial.from_terms(dict(p))
        if p.degree > 4:
            raise BVPError("polynomial sources are limited to degree 4")
        up = particular_solution(p)
        return cls(kind, p, up, up.gradient, up.hessian, p, up)

    @classmethod
    def zero(cls):
        return cls.polynomial(Polynomial.zero(), kind="zero")

    @classmethod
    def constant(cls, c):
        return cls.polynomial(Polynomial.constant(c), kind="constant")

    @classmethod
    def analytic(cls, f, u_p, grad_u_p=None, hess_u_p=None):
        """User-supplied pair; derivatives default to central differences."""
        grad_u_p = grad_u_p or (lambda x: _fd_gradient(u_p, x, 1e-5))
        hess_u_p = hess_u_p or (lambda x: _fd_hessian(u_p, x, 1e-4))
        return cls("analytic", f, u_p, grad_u_p, hess_u_p)

    @property
    def value(self):
        """The constant value of ``f`` if it is constant, else None."""
        if self.poly is not None and self.poly.degree == 0:
            return float(self.poly.c[0, 0])
        return None

    def check_particular(self, points, tol=1e-6, h=5e-4):
        """Verify ``-laplace(u_p) = f`` at ``points`` with a fourth-order difference stencil."""
        x = np.atleast_2d(points)
        lap = -5 * self.u_p(x)
        for e in (np.array([h, 0.0]), np.array([0.0, h])):
            lap = lap + (-(self.u_p(x + 2 * e) + self.u_p(x - 2 * e)) + 16 * (self.u_p(x + e) + self.u_p(x - e))) / 12
        lap = lap / h**2
        fx = self.f(x)
        err = float(np.max(np.abs(-lap - fx)) / (1 + np.max(np.abs(fx))))
        if err > tol:
            raise BVPError(f"particular solution does not satisfy -laplace(u_p) = f (relative error {err:.2e})")
        return err

    def __repr__(self):
        if self.poly is not None:
            return f"SourceSpec({self.kind}, {self.poly.terms})"
        return "SourceSpec(analytic)"


def _fd_gradient(u, x, h):
    x = np.atleast_2d(x)
    e0, e1 = np.array([h, 0.0]), np.array([0.0, h])
    return np.stack([(u(x + e0) - u(x - e0)) / (2 * h), (u(x + e1) - u(x - e1)) / (2 * h)], axis=-1)


def _fd_hessian(u, x, h):
    x = np.atleast_2d(x)
    e0, e1 = np.array([h, 0.0]), np.array([0.0, h])
    c = u(x)
    xx = (u(x + e0) - 2 * c + u(x - e0)) / h**2
    yy = (u(x + e1) - 2 * c + u(x - e1)) / h**2
    xy = (u(x + e0 + e1) - u(x + e0 - e1) - u(x - e0 + e1) + u(x - e0 - e1)) / (4 * h**2)
    return np.stack([np.stack([xx, xy], -1), np.stack([xy, yy], -1)], -2)


def as_source(f) -> SourceSpec:
    if isinstance(f, SourceSpec):
        return f
    if f is None:
        return SourceSpec.zero()
    if np.isscalar(f):
        return SourceSpec.constant(float(f))
    return SourceSpec.polynomial(f)


# --- discrete operators -----------------------------------------------------

class LayerOperators:
    """Nystrom matrices of a curve, cached on first use."""

    def __init__(self, curve: Curve):
        self.curve = curve

    @cached_property
    def double_layer(self):
        """Interior-limit matrix ``K - I/2`` acting on densities."""
        c = self.curve
        w = c.speed * 2 * np.pi / c.n
        diff = c.points[:, None, :] - c.points[None, :, :]
        r2 = np.sum(diff**2, axis=-1)
        np.fill_diagonal(r2, 1.0)
        K = np.sum(c.normal[None, :, :] * diff, axis=-1) / (2 * np.pi * r2) * w[None, :]
        np.fill_diagonal(K, -c.curvature / (4 * np.pi) * w)
        A = K - 0.5 * np.eye(c.n)
        if np.linalg.cond(A) > 1e10:
            raise BVPError("boundary integral system is numerically singular")
        return A

    @cached_property
    def lu(self):
        from scipy.linalg import lu_factor

        return lu_factor(self.double_layer)

    def solve_density(self, g):
        from scipy.linalg import lu_solve

        return lu_solve(self.lu, g)

    @cached_property
    def cauchy(self):
        """Complex matrix taking a density to boundary values of ``Phi``."""
        c = self.curve
        z, dz = c.z, c.dz
        with np.errstate(divide="ignore", invalid="ignore"):
            M = dz[None, :] / (z[None, :] - z[:, None])
        np.fill_diagonal(M, 0.0)
        D = differentiation_matrix(c.n)
        inner = M - np.diag(M.sum(axis=1)) + D
        return -(np.eye(c.n) + inner / (1j * c.n))

    @cached_property
    def dtn_matrix(self):
        c = self.curve
        D = differentiation_matrix(c.n)
        from scipy.linalg import lu_solve

        inv = lu_solve(self.lu, np.eye(c.n))
        return (D @ np.imag(self.cauchy) @ inv) / c.speed[:, None]




def layer_operators(curve: Curve) -> LayerOperators:
    ops = curve.__dict__.get("_layer_ops")
    if ops is None:
        ops = LayerOperators(curve)
        curve.__dict__["_layer_ops"] = ops
    return ops


# --- solution ---------------------------------------------------------------

def _cauchy_interp(curve: Curve, values, x):
    """Barycentric Cauchy interpolation of boundary values of an analytic function."""
    zq = np.atleast_1d(x[..., 0] + 1j * x[..., 1])
    d = curve.z[None, :] - zq[:, None]
    hit = np.abs(d) < 1e-14
    with np.errstate(divide="ignore", invalid="ignore"):
        w = curve.dz[None, :] / d
        out = (w @ values) / w.sum(axis=1)
    rows, cols = np.nonzero(hit)
    out[rows] = values[cols]
    return out


@dataclass(eq=False)
class DirichletSolution:
    curve: Curve
    source: SourceSpec
    g: np.ndarray
    density: np.ndarray
    phi_boundary: np.ndarray  # Phi on the boundary grid (complex)

    @cached_property
    def dphi_boundary(self):
        """``Phi'`` on the boundary grid."""
        return _complex_diff(self.phi_boundary) / self.curve.dz

    @cached_property
    def d2phi_boundary(self):
        return _complex_diff(self.dphi_boundary) / self.curve.dz

    @cached_property
    def normal_derivative(self):
        """Outward normal derivative on the boundary grid."""
        c = self.curve
        harm = differentiate(np.imag(self.phi_boundary)) / c.speed
        part = np.sum(self.source.grad_u_p(c.points) * c.normal, axis=1)
        return harm + part

    @cached_property
    def boundary_gradient(self):
        c = self.curve
        dp = self.dphi_boundary
        return np.column_stack([dp.real, -dp.imag]) + self.source.grad_u_p(c.points)

    @cached_property
    def boundary_hessian(self):
        return _hessian_from_phi2(self.d2phi_boundary) + self.source.hess_u_p(self.curve.points)

    def _check_inside(self, xs):
        wn = winding_number(self.curve, xs)
        if np.any(np.abs(wn) < 0.5):
            raise BVPError("evaluation point outside the domain")

    def __call__(self, x, check=True):
        xs = np.atleast_2d(np.asarray(x, dtype=float))
        if check:
            self._check_inside(xs)
        val = np.real(_cauchy_interp(self.curve, self.phi_boundary, xs)) + self.source.u_p(xs)
        return val[0] if np.ndim(x) == 1 else val

    def gradient(self, x, check=True):
        xs = np.atleast_2d(np.asarray(x, dtype=float))
        if check:
            self._check_inside(xs)
        dp = _cauchy_interp(self.curve, self.dphi_boundary, xs)
        val = np.column_stack([dp.real, -dp.imag]) + self.source.grad_u_p(xs)
        return val[0] if np.ndim(x) == 1 else val

    def hessian(self, x, check=True):
        xs = np.atleast_2d(np.asarray(x, dtype=float))
        if check:
            self._check_inside(xs)
        val = _hessian_from_phi2(_cauchy_interp(self.curve, self.d2phi_boundary, xs)) + self.source.hess_u_p(xs)
        return val[0] if np.ndim(x) == 1 else val

    def write_boundary_csv(self, path):
        write_boundary_csv(path, self.curve.theta, self.normal_derivative, header="normal_derivative")


def _complex_diff(v):
    return differentiate(v.real) + 1j * differentiate(v.imag)


def _hessian_from_phi2(p2):
    xx, xy = p2.real, -p2.imag
    return np.stack([np.stack([xx, xy], -1), np.stack([xy, -xx], -1)], -2)


def solve_dirichlet(curve: Curve, f=None, g=None, check_particular=True) -> DirichletSolution:
    """Solve ``-laplace(u) = f`` with ``u = g`` on the curve.

    ``f`` is a :class:`SourceSpec`, a scalar constant, a
    :class:`~phantomshape.poly.Polynomial` or ``None`` (zero). ``g`` is a
    scalar or samples on the curve grid (default 0).
    """
    src = as_source(f)
    gvals = np.zeros(curve.n) if g is None else np.broadcast_to(np.asarray(g, dtype=float), (curve.n,)).copy()
    if check_particular and src.kind == "analytic":
        rng = np.random.default_rng(0)
        lo, hi = curve.points.min(axis=0), curve.points.max(axis=0)
        cand = lo + (hi - lo) * rng.random((400, 2))
        inside = cand[np.abs(winding_number(curve, cand)) > 0.5]
        src.check_particular(inside[:20])
    ops = layer_operators(curve)
    rhs = gvals - src.u_p(curve.points)
    mu = ops.solve_density(rhs)
    phi = ops.cauchy @ mu
    return DirichletSolution(curve, src, gvals, mu, phi)


@dataclass(frozen=True, eq=False)
class BoundaryOperator:
    matrix: np.ndarray
    grid: np.ndarray

    def __call__(self, v):
        return self.matrix @ np.asarray(v, dtype=float)

    def write_csv(self, path):
        np.savetxt(path, self.matrix, delimiter=",", fmt="%.17g")


def dtn(curve: Curve) -> BoundaryOperator:
    """Dirichlet-to-Neumann matrix on the curve grid (outward normal)."""
    m = layer_operators(curve).dtn_matrix.copy()
    m.setflags(write=False)
    return BoundaryOperator(m, curve.theta)


# --- pulled-back operator ---------------------------------------------------

def pullback_coefficients(family, s, points, h1=1e-5, h2=1e-4):
    """Coefficients of the operator pulled back by ``phi_s``.

    With ``y = phi_s^{-1}(x)`` returns ``a[m, k, l] = sum_j dy^l/dx_j dy^k/dx_j``
    and ``b[m, l] = laplace(y^l)`` at each sample point ``x_m``.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    inv = lambda p: family.inverse(p, s)
    e = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    # J[m, l, j] = d y^l / d x_j
    J = np.stack([(inv(x + h1 * ej) - inv(x - h1 * ej)) / (2 * h1) for ej in e], axis=-1)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if np.any(det <= 0):
        raise BVPError("map is not an orientation-preserving diffeomorphism at some sample point")
    y0 = inv(x)
    b = sum((inv(x + h2 * ej) - 2 * y0 + inv(x - h2 * ej)) / h2**2 for ej in e)
    a = np.einsum("mlj,mkj->mkl", J, J)
    return a, b


# --- I/O --------------------------------------------------------------------

def write_boundary_csv(path, theta, values, header="value"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta", header])
        for t, v in zip(theta, values):
            w.writerow([repr(float(t)), repr(float(v))])


def read_boundary_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    return data[:, 0], data[:, 1]
