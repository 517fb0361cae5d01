"""Analytic first-order domain-variation formulas.

A variation is generated by a vector field ``nu_phi``: either an ambient
field (the velocity of a diffeomorphism family) or ``h * nu_delta`` for a
scalar ``h`` on the base curve, the tangent vector of the graph family
``rho = s*h``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .bvp import BVPError, BoundaryOperator, DirichletSolution, SourceSpec, dtn, solve_dirichlet
from .curves import Curve, winding_number
from .graph import RhoGraph, curve_from_rho
from .phantom import FlowChart, PhantomField, field_derivatives, tube_coordinates
from .poly import Polynomial, fit_polynomial
from .spectral import PeriodicInterpolant, differentiate

COEFFICIENT_VARIANTS = ("printed", "product-rule")
SECOND_NORMAL_VARIANTS = ("printed", "curvature", "full")
NORMAL_VARIATION_VARIANTS = ("derived", "printed")
NORMAL_DERIVATIVE_VARIANTS = ("printed", "corrected")

# variants certified by the finite-difference oracle (see oracle.discrepancy_report)
CERTIFIED_COEFFICIENT_VARIANT = "product-rule"
CERTIFIED_SECOND_NORMAL_VARIANT = "full"


# --- variation fields -------------------------------------------------------

@dataclass(eq=False)
class VariationField:
    """Boundary values of ``nu_phi`` on the base grid plus an optional ambient extension.

    ``value``, ``jacobian`` and ``hessian`` act on ``(M, 2)`` point arrays and
    return ``(M, 2)``, ``(M, 2, 2)`` (``J[m, l, i] = d v^l/d x_i``) and
    ``(M, 2, 2, 2)`` arrays.
    """

    base: Curve
    boundary: np.ndarray
    value: Callable | None = None
    jacobian: Callable | None = None
    hessian: Callable | None = None
    h: np.ndarray | None = None
    phantom: PhantomField | None = None
    name: str = "field"

    @property
    def has_extension(self):
        return self.value is not None and self.jacobian is not None and self.hessian is not None

    def normal_component(self):
        return np.sum(self.boundary * self.base.normal, axis=1)

    @classmethod
    def from_family(cls, family, base: Curve, name=None):
        """Velocity field of a diffeomorphism family at ``s = 0``."""
        return cls(
            base,
            family.velocity(base.points),
            family.velocity,
            family.velocity_jacobian,
            family.velocity_hessian,
            name=name or repr(family),
        )

    @classmethod
    def zero(cls, base: Curve):
        z2 = lambda x: np.zeros(np.atleast_2d(x).shape)
        return cls(
            base,
            np.zeros((base.n, 2)),
            z2,
            lambda x: np.zeros(np.atleast_2d(x).shape[:-1] + (2, 2)),
            lambda x: np.zeros(np.atleast_2d(x).shape[:-1] + (2, 2, 2)),
            h=np.zeros(base.n),
            name="zero",
        )

    @classmethod
    def from_h(cls, phantom: PhantomField, h, cutoff=None, name="h*nu_delta"):
        """``h * nu_delta`` with ``h`` extended by ``h(theta(x)) * cutoff(r(x))``.

        ``(theta, r)`` are nearest-point coordinates of the base curve.
        With ``cutoff=None`` the extension is constant along normals and is
        carried by the field's own cutoff.
        """
        h = np.asarray(h, dtype=float)
        base = phantom.base
        hi = PeriodicInterpolant(h)

        def scalar(x):
            tc = tube_coordinates(base, x)
            h0, h1, h2 = hi.derivatives(tc.theta, (0, 1, 2))
            if cutoff is None:
                e0, e1, e2 = np.ones_like(tc.r), np.zeros_like(tc.r), np.zeros_like(tc.r)
            else:
                e0, e1, e2 = cutoff(tc.r), cutoff(tc.r, 1), cutoff(tc.r, 2)
            gt, gr = tc.grad_theta, tc.grad_r
            H = h0 * e0
            dH = (h1 * e0)[:, None] * gt + (h0 * e1)[:, None] * gr
            out = lambda a, b: a[:, :, None] * b[:, None, :]
            d2H = (
                (h2 * e0)[:, None, None] * out(gt, gt)
                + (h1 * e1)[:, None, None] * (out(gt, gr) + out(gr, gt))
                + (h1 * e0)[:, None, None] * tc.hess_theta
                + (h0 * e2)[:, None, None] * out(gr, gr)
                + (h0 * e1)[:, None, None] * tc.hess_r
            )
            return H, dH, d2H

        def all_derivs(x):
            xs = np.atleast_2d(np.asarray(x, dtype=float))
            v, J, Hs = field_derivatives(phantom, xs)
            H, dH, d2H = scalar(xs)
            val = H[:, None] * v
            jac = v[:, :, None] * dH[:, None, :] + H[:, None, None] * J
            hess = (
                v[:, :, None, None] * d2H[:, None, :, :]
                + J[:, :, :, None] * dH[:, None, None, :]
                + J[:, :, None, :] * dH[:, None, :, None]
                + H[:, None, None, None] * Hs
            )
            return val, jac, hess

        return cls(
            base,
            h[:, None] * phantom.on_curve(),
            lambda x: all_derivs(x)[0],
            lambda x: all_derivs(x)[1],
            lambda x: all_derivs(x)[2],
            h=h,
            phantom=phantom,
            name=name,
        )

    @classmethod
    def from_extension(cls, chart: FlowChart, h, name="extension velocity"):
        """Velocity of ``s -> extend_diffeo(chart, s*h)`` at ``s = 0``.

        Exact closed form when the chart's flow lines are normal lines
        (``delta = 0``). Otherwise ``v = h(theta_c) eta(r_c) nu_delta`` in chart
        coordinates ``(theta_c, r_c)``, with the Jacobian from the inverse chart
        differential and the Hessian by fourth-order differences of the Jacobian.
        """
        if chart.exact_normal_lines:
            return cls.from_h(chart.field, h, cutoff=chart.ext_cutoff, name=name)
        h = np.asarray(h, dtype=float)
        hi = PeriodicInterpolant(h)
        eta = chart.ext_cutoff
        phantom = chart.field

        def value_and_jacobian(x):
            xs = np.atleast_2d(np.asarray(x, dtype=float))
            val = np.zeros_like(xs)
            jac = np.zeros(xs.shape + (2,))
            from .curves import project

            _, rn, _ = project(chart.base, xs)
            inside = np.abs(np.atleast_1d(rn)) < eta.support + 0.05 * chart.r0
            if inside.any():
                xi = xs[inside]
                th, r, Dc = chart.inverse_with_jacobian(xi)
                h0, h1 = hi.derivatives(th, (0, 1))
                H = h0 * eta(r)
                dH = (h1 * eta(r))[:, None] * Dc[:, 0, :] + (h0 * eta(r, 1))[:, None] * Dc[:, 1, :]
                F, DF, _ = field_derivatives(phantom, xi)
                val[inside] = H[:, None] * F
                jac[inside] = F[:, :, None] * dH[:, None, :] + H[:, None, None] * DF
            return val, jac

        # the cutoff transition is narrow, so the stencil must be fine; the Jacobian is
        # accurate to the chart inversion tolerance, keeping roundoff near 1e-8
        step = 1e-4

        def hessian(x):
            xs = np.atleast_2d(np.asarray(x, dtype=float))
            m = xs.shape[0]
            # one batched evaluation of the full stencil
            offs = np.array([2, 1, -1, -2], dtype=float)
            pts = np.concatenate([xs + o * step * e for e in np.eye(2) for o in offs])
            J = value_and_jacobian(pts)[1].reshape(2, 4, m, 2, 2)
            w = np.array([-1.0, 8.0, -8.0, 1.0]) / (12 * step)
            # H[m, l, i, j] = d J[m, l, i] / d x_j
            return np.stack([np.tensordot(w, J[d], axes=(0, 0)) for d in range(2)], axis=-1)

        return cls(chart.base, h[:, None] * phantom.on_curve(),
                   lambda x: value_and_jacobian(x)[0], lambda x: value_and_jacobian(x)[1], hessian,
                   h=h, phantom=phantom, name=name)


def _fd4(fun, x, e, h):
    return (-fun(x + 2 * h * e) + 8 * fun(x + h * e) - 8 * fun(x - h * e) + fun(x - 2 * h * e)) / (12 * h)


# --- Example (a): restriction of an ambient function -------------------------

def restriction_variation(grad_f: Callable, field: VariationField) -> np.ndarray:
    """``grad f . nu_phi`` on the base grid."""
    return np.sum(np.asarray(grad_f(field.base.points)) * field.boundary, axis=1)


# --- coefficients of the pulled-back operator -------------------------------

@dataclass(frozen=True, eq=False)
class CoefficientVariation:
    a_dot: Callable
    b_dot: Callable
    variant: str


def coefficient_variation(field: VariationField, variant: str = CERTIFIED_COEFFICIENT_VARIANT) -> CoefficientVariation:
    """``d/ds`` at 0 of the coefficients ``a`` and ``b`` of the pulled-back Laplacian.

    ``"product-rule"``: ``a_dot = -(D nu + D nu^T)``; ``"printed"``:
    ``a_dot = -(D nu)^T (D nu)``. Both use ``b_dot^l = -laplace(nu^l)``.
    """
    if variant not in COEFFICIENT_VARIANTS:
        raise ValueError(f"unknown coefficient variant {variant!r}")
    if not field.has_extension:
        raise BVPError("coefficient variation needs an ambient extension with Jacobian and Hessians")

    def a_dot(x):
        J = field.jacobian(np.atleast_2d(x))
        if variant == "product-rule":
            return -(J + np.swapaxes(J, -1, -2))
        return -np.einsum("mji,mjk->mik", J, J)

    def b_dot(x):
        H = field.hessian(np.atleast_2d(x))
        return -np.trace(H, axis1=-2, axis2=-1)

    return CoefficientVariation(a_dot, b_dot, variant)


# --- variation of the pulled-back solution ----------------------------------

def _grad_source(src: SourceSpec, x):
    if src.poly is not None:
        return src.poly.gradient(x)
    h = 1e-5
    return np.stack([(src.f(x + h * e) - src.f(x - h * e)) / (2 * h) for e in np.eye(2)], axis=-1)


def variation_data(base_solution: DirichletSolution, field: VariationField, variant=CERTIFIED_COEFFICIENT_VARIANT):
    """Interior right-hand side ``nu.grad f + a_dot : D^2 u0 + b_dot . grad u0``."""
    cv = coefficient_variation(field, variant)

    def data(x):
        xs = np.atleast_2d(np.asarray(x, dtype=float))
        grad_u = base_solution.gradient(xs, check=False)
        hess_u = base_solution.hessian(xs, check=False)
        term_f = np.sum(field.value(xs) * _grad_source(base_solution.source, xs), axis=-1)
        term_a = np.einsum("mkl,mkl->m", cv.a_dot(xs), hess_u)
        term_b = np.sum(cv.b_dot(xs) * grad_u, axis=-1)
        return term_f + term_a + term_b

    return data


def _interior_samples(curve: Curve, n=24, margin_spacings=0.5):
    """Background grid inside the curve plus bands of points along inward normals."""
    lo, hi = curve.points.min(axis=0), curve.points.max(axis=0)
    gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n))
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    pts = pts[np.abs(winding_number(curve, pts)) > 0.5]
    spacing = curve.length / curve.n
    d = np.min(np.linalg.norm(pts[:, None, :] - curve.points[None, :, :], axis=-1), axis=1)
    pts = pts[d > margin_spacings * spacing]
    reach = 0.5 / max(np.max(np.abs(curve.curvature)), 1e-12)
    bands = [curve.points[::2] - t * curve.normal[::2] for t in reach * np.array([0.05, 0.2, 0.4, 0.6, 0.8])]
    return np.vstack([pts] + bands)


def solution_variation(base_solution: DirichletSolution, field: VariationField,
                       variant: str = CERTIFIED_COEFFICIENT_VARIANT, poly_tol=1e-9) -> DirichletSolution:
    """Solve the homogeneous Dirichlet problem whose data is :func:`variation_data`.

    The data is first fitted by a polynomial of degree at most 4. If that
    fails, the pair ``(data, nu . grad u0)`` is tried as an analytic
    source with particular solution; it is exact precisely when the
    coefficient variation follows the product rule.
    """
    curve = base_solution.curve
    if np.max(np.abs(base_solution.g)) > 0:
        raise BVPError("solution variation is implemented for homogeneous Dirichlet data")
    if not field.has_extension:
        raise BVPError("solution variation needs an ambient extension of the field")
    data = variation_data(base_solution, field, variant)
    pts = _interior_samples(curve)
    vals = data(pts)
    poly, resid = fit_polynomial(pts, vals, degree=4)
    if resid <= poly_tol * (1 + np.max(np.abs(vals))):
        return solve_dirichlet(curve, SourceSpec.polynomial(poly), 0.0)

    def u_p(x):
        xs = np.atleast_2d(np.asarray(x, dtype=float))
        return np.sum(field.value(xs) * base_solution.gradient(xs, check=False), axis=-1)

    src = SourceSpec.analytic(data, u_p)
    try:
        src.check_particular(pts[:: max(1, len(pts) // 20)][:20], tol=1e-6)
    except BVPError as exc:
        raise BVPError(
            "variation data is neither polynomial nor matched by the particular solution nu.grad(u0); "
            "use the finite-difference oracle path instead"
        ) from exc
    return solve_dirichlet(curve, src, 0.0, check_particular=False)


# --- second normal derivative on the boundary -------------------------------

@dataclass(frozen=True, eq=False)
class SecondNormalIdentity:
    """Candidate values of ``d_nu0 d_nu_delta u0`` on the base grid."""

    printed: np.ndarray
    curvature: np.ndarray
    full: np.ndarray
    fd: np.ndarray | None
    matched: tuple
    tol: float

    def variant(self, name):
        return getattr(self, name)

    @property
    def certified(self):
        return getattr(self, CERTIFIED_SECOND_NORMAL_VARIANT)


def _boundary_field_terms(base_solution, phantom):
    curve = base_solution.curve
    nd = phantom.on_curve()
    _, J, _ = field_derivatives(phantom, curve.points)
    dnu_normal = np.einsum("mli,mi->ml", J, curve.normal)
    A = np.sum(nd * curve.normal, axis=1)
    B = np.sum(nd * curve.tangent, axis=1)
    return A, B, np.sum(dnu_normal * curve.normal, axis=1)


def second_normal_identity(base_solution: DirichletSolution, phantom: PhantomField, fd_check=True,
                           tol=1e-6) -> SecondNormalIdentity:
    """``d_nu0 (nu_delta . grad u0)`` on the boundary for ``u0 = 0`` there.

    * ``printed``: ``(d_nu0 nu_delta . nu0) u_nu - A f``
    * ``curvature``: additionally ``- A kappa u_nu``
    * ``full``: additionally ``+ B d_s u_nu``

    with ``A = nu_delta . nu0`` and ``B = nu_delta . tau0``. These follow
    from ``u_nunu = -f - kappa u_nu`` and ``u_taunu = d_s u_nu``.
    """
    curve = base_solution.curve
    if np.max(np.abs(base_solution.g)) > 0:
        raise BVPError("second normal identity assumes homogeneous Dirichlet data")
    A, B, c = _boundary_field_terms(base_solution, phantom)
    un = base_solution.normal_derivative
    fvals = base_solution.source.f(curve.points)
    printed = c * un - A * fvals
    curv = printed - A * curve.curvature * un
    full = curv + B * curve.arclength_derivative(un)
    fd = None
    matched = ()
    if fd_check:
        fd = _fd_second_normal(base_solution, phantom)
        scale = 1 + np.max(np.abs(fd))
        matched = tuple(
            name for name, v in zip(SECOND_NORMAL_VARIANTS, (printed, curv, full))
            if np.max(np.abs(v - fd)) <= tol * scale
        )
    return SecondNormalIdentity(printed, curv, full, fd, matched, tol)


def _fd_second_normal(base_solution, phantom, step=None):
    """One-sided fourth-order difference of ``nu_delta . grad u0`` along ``-nu0``."""
    curve = base_solution.curve
    step = step if step is not None else 0.05 * curve.length / curve.n
    vals = []
    for k in range(5):
        x = curve.points - k * step * curve.normal
        vals.append(np.sum(phantom(x) * base_solution.gradient(x, check=False), axis=1))
    g0, g1, g2, g3, g4 = vals
    deriv_inward = (-25 * g0 + 48 * g1 - 36 * g2 + 16 * g3 - 3 * g4) / (12 * step)
    return -deriv_inward


# --- variation of the normal derivative -------------------------------------

def normal_derivative_variation(base_solution: DirichletSolution, field: VariationField,
                                dtn_op: BoundaryOperator | None = None, method: str | None = None,
                                variant: str = "corrected") -> np.ndarray:
    """``d_nu0 d_nu_phi u0 - DtN(d_nu_phi u0)`` on the base grid.

    ``method="identity"`` (default for ``h * nu_delta`` fields) evaluates
    the first term by :func:`second_normal_identity`; ``method="ambient"``
    uses the field's Jacobian and the boundary Hessian of ``u0``.
    ``variant="corrected"`` (the other choice is ``"printed"``) removes the term ``u_nu (D nu_phi nu0) . nu0``,
    which the pulled-back normal derivative does not contain; the two
    variants coincide for phantom-field extensions.
    """
    if variant not in NORMAL_DERIVATIVE_VARIANTS:
        raise ValueError(f"unknown normal derivative variant {variant!r}")
    curve = base_solution.curve
    if np.max(np.abs(base_solution.g)) > 0:
        raise BVPError("normal derivative variation requires g = 0")
    dtn_op = dtn_op or dtn(curve)
    un = base_solution.normal_derivative
    dnu_u = field.normal_component() * un
    if method is None:
        method = "identity" if field.h is not None and field.phantom is not None else "ambient"
    if method == "identity":
        if field.h is None or field.phantom is None:
            raise BVPError("identity method needs a field of the form h * nu_delta")
        term = field.h * second_normal_identity(base_solution, field.phantom, fd_check=False).certified
        if variant == "corrected":
            _, _, c = _boundary_field_terms(base_solution, field.phantom)
            term = term - field.h * c * un
    elif method == "ambient":
        if field.jacobian is None:
            raise BVPError("ambient method needs the field's Jacobian")
        J = field.jacobian(curve.points)
        grad_u = base_solution.boundary_gradient
        hess_u = base_solution.boundary_hessian
        dnu_phi = np.einsum("mli,mi->ml", J, curve.normal)
        term = np.sum(dnu_phi * grad_u, axis=1) + np.einsum("ml,mlk,mk->m", field.boundary, hess_u, curve.normal)
        if variant == "corrected":
            term = term - un * np.sum(dnu_phi * curve.normal, axis=1)
    else:
        raise ValueError(f"unknown method {method!r}")
    return term - dtn_op(dnu_u)


# --- normal variation and the transversality factor -------------------------

def _tangential_derivative_of_field(phantom: PhantomField):
    """``d_s nu_delta`` along the base curve."""
    return differentiate(phantom.on_curve()) / phantom.base.speed[:, None]


def normal_variation(phantom: PhantomField, h, variant: str = "derived") -> np.ndarray:
    """Variation of the outward unit normal along the graph family ``rho = s*h``.

    ``derived``: ``-[h (d_s nu_delta . nu0) + (nu_delta . nu0) d_s h] tau0``;
    ``printed`` flips the sign of the first term.
    """
    if variant not in NORMAL_VARIATION_VARIANTS:
        raise ValueError(f"unknown normal variation variant {variant!r}")
    base = phantom.base
    h = np.asarray(h, dtype=float)
    dnu = _tangential_derivative_of_field(phantom)
    c = np.sum(dnu * base.normal, axis=1)
    A = np.sum(phantom.on_curve() * base.normal, axis=1)
    sign = -1.0 if variant == "derived" else 1.0
    coeff = sign * h * c - A * base.arclength_derivative(h)
    return coeff[:, None] * base.tangent


def transversality_variation(phantom: PhantomField, h, variant: str = "derived") -> np.ndarray:
    """``d/ds`` of ``(nu_delta o phi) . nu_s`` along the graph family ``rho = s*h``.

    Written as ``h (d_{nu_delta} nu_delta) . nu0 + nu_delta . n_dot`` with
    ``n_dot`` from :func:`normal_variation` of the same variant.
    """
    base = phantom.base
    h = np.asarray(h, dtype=float)
    nd = phantom.on_curve()
    _, J, _ = field_derivatives(phantom, base.points)
    along = np.einsum("mli,mi->ml", J, nd)
    first = h * np.sum(along * base.normal, axis=1)
    return first + np.sum(nd * normal_variation(phantom, h, variant), axis=1)


# --- normal velocity --------------------------------------------------------

def normal_velocity(graph: RhoGraph, rho_t) -> np.ndarray:
    """``V = (nu_delta(phi(y, rho)) . nu_rho) rho_t`` on the graph curve."""
    curve = curve_from_rho(graph)
    nu = graph.chart.field(curve.points)
    return np.sum(nu * curve.normal, axis=1) * np.asarray(rho_t, dtype=float)


def transversality_factor(graph: RhoGraph, curve: Curve | None = None) -> np.ndarray:
    curve = curve or curve_from_rho(graph)
    return np.sum(graph.chart.field(curve.points) * curve.normal, axis=1)
