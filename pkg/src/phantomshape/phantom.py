"""Regularized transversal field on a base curve, its flow, and flow charts.

The field is ``nu_delta(x) = eta(r(x)) * N_delta(theta(x))`` where
``(theta, r)`` are nearest-point coordinates of the base curve, ``N_delta``
is the base normal mollified in the curve parameter and ``eta`` is a smooth
cutoff in the normal distance.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import expit

from .curves import Curve, CurveError, injectivity_scan, project, rotate_cw, tubular_radius
from .spectral import PeriodicInterpolant, differentiate, wavenumbers


class ChartError(ValueError):
    """Raised when a point or displacement leaves the region a chart covers."""


# --- smooth cutoff ----------------------------------------------------------

def smooth_step(t, order=0):
    """C-infinity step: 1 for t <= 0, 0 for t >= 1, with derivatives.

    Written as ``expit(-u(t))`` with ``u = 1/(1-t) - 1/t``, which is the
    classical ``f(1-t) / (f(1-t) + f(t))``, ``f(t) = exp(-1/t)``.
    """
    t = np.asarray(t, dtype=float)
    inner = (t > 0) & (t < 1)
    tc = np.clip(t, 1e-300, 1 - 1e-16)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        u = 1 / (1 - tc) - 1 / tc
        L = expit(-u)
        if order == 0:
            return np.where(t <= 0, 1.0, np.where(t >= 1, 0.0, L))
        du = 1 / (1 - tc) ** 2 + 1 / tc**2
        dL = -L * (1 - L)
        if order == 1:
            val = dL * du
        elif order == 2:
            ddu = 2 / (1 - tc) ** 3 - 2 / tc**3
            ddL = dL * (2 * L - 1)
            val = ddL * du**2 + dL * ddu
        else:
            raise ValueError("order must be 0, 1 or 2")
    return np.where(inner, np.nan_to_num(val), 0.0)


@dataclass(frozen=True)
class Cutoff:
    """Even cutoff equal to 1 on [-plateau, plateau], 0 outside (-support, support)."""

    plateau: float
    support: float

    def __call__(self, r, order=0):
        r = np.asarray(r, dtype=float)
        w = self.support - self.plateau
        t = (np.abs(r) - self.plateau) / w
        val = smooth_step(t, order) / w**order
        if order == 1:
            val = val * np.sign(r)
        return val

    @cached_property
    def max_slope(self):
        t = np.linspace(0, 1, 20001)
        return float(np.max(np.abs(smooth_step(t, 1))) / (self.support - self.plateau))


# --- nearest-point coordinates and their derivatives ------------------------

@dataclass
class TubeCoordinates:
    """Nearest-point coordinates of points and their first/second derivatives."""

    theta: np.ndarray
    r: np.ndarray
    grad_theta: np.ndarray  # (M, 2)
    grad_r: np.ndarray  # (M, 2)
    hess_theta: np.ndarray  # (M, 2, 2)
    hess_r: np.ndarray  # (M, 2, 2)


def tube_coordinates(base: Curve, x, theta0=None) -> TubeCoordinates:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    theta, r, _ = project(base, x, theta0=theta0)
    theta = np.atleast_1d(theta)
    r = np.atleast_1d(r)
    p, d1, d2, d3 = base.frame(theta)
    s = np.linalg.norm(d1, axis=1)
    tau = d1 / s[:, None]
    nu = rotate_cw(tau)
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    dcross = d1[:, 0] * d3[:, 1] - d1[:, 1] * d3[:, 0]
    kappa = cross / s**3
    s_t = np.sum(d1 * d2, axis=1) / s
    kappa_t = dcross / s**3 - 3 * cross * s_t / s**4
    q = s * (1 + r * kappa)
    grad_theta = tau / q[:, None]
    grad_r = nu
    tau_t = -(kappa * s)[:, None] * nu
    nu_t = (kappa * s)[:, None] * tau
    q_t = s_t * (1 + r * kappa) + s * r * kappa_t
    q_r = s * kappa
    # d_j (tau_i / q) = tau_t,i/q theta_j - tau_i/q^2 (q_t theta_j + q_r r_j)
    hess_theta = (
        (tau_t / q[:, None])[:, :, None] * grad_theta[:, None, :]
        - (tau / q[:, None] ** 2)[:, :, None]
        * (q_t[:, None, None] * grad_theta[:, None, :] + q_r[:, None, None] * grad_r[:, None, :])
    )
    hess_r = nu_t[:, :, None] * grad_theta[:, None, :]
    return TubeCoordinates(theta, r, grad_theta, grad_r, hess_theta, hess_r)


# --- phantom field ----------------------------------------------------------

def bump_fourier(k, width, n_quad=4097):
    """Fourier coefficients of the unit-mass bump exp(-1/(1-(t/w)^2)) on |t| < w."""
    if width == 0:
        return np.ones_like(k, dtype=float)
    t = np.linspace(-width, width, n_quad)
    u = t / width
    with np.errstate(divide="ignore", over="ignore"):
        psi = np.where(np.abs(u) < 1, np.exp(-1 / np.maximum(1 - u**2, 1e-300)), 0.0)
    wts = np.full(n_quad, t[1] - t[0])
    wts[[0, -1]] *= 0.5
    mass = np.sum(wts * psi)
    return (np.cos(np.outer(k, t)) @ (wts * psi)) / mass


class PhantomField:
    """The mollified transversal field ``nu_delta`` around a base curve.

    Use :func:`build_phantom` to construct one.
    """

    def __init__(self, base: Curve, delta: float, r_tilde: float, smoothed_normal: np.ndarray,
                 renormalize: bool = True, tubular=None):
        self.base = base
        self.delta = float(delta)
        self.r_tilde = float(r_tilde)
        self.cutoff = Cutoff(self.r_tilde / 2, 3 * self.r_tilde / 4)
        self.renormalize = renormalize
        self.tubular = tubular
        sn = np.array(smoothed_normal, dtype=float)
        sn.setflags(write=False)
        self.smoothed_normal = sn
        self.normal_interp = PeriodicInterpolant(sn)

    @cached_property
    def smoothed_normal_modes(self):
        return np.fft.fft(self.smoothed_normal, axis=0) / self.base.n

    def on_curve(self):
        """Values of the field at the base grid points (eta = 1 there)."""
        return self.smoothed_normal

    def __call__(self, x, theta0=None):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xs = np.atleast_2d(x)
        theta, r, _ = project(self.base, xs, theta0=theta0)
        val = self.cutoff(np.atleast_1d(r))[:, None] * self.normal_interp(np.atleast_1d(theta))
        return val[0] if single else val

    def evaluate_with_coords(self, x, theta0=None):
        xs = np.atleast_2d(np.asarray(x, dtype=float))
        theta, r, _ = project(self.base, xs, theta0=theta0)
        theta = np.atleast_1d(theta)
        r = np.atleast_1d(r)
        return self.cutoff(r)[:, None] * self.normal_interp(theta), theta, r

    def __repr__(self):
        return f"PhantomField(delta={self.delta}, r_tilde={self.r_tilde:.4g}, base={self.base!r})"


def _mollified_normal(base: Curve, delta: float, renormalize: bool):
    width = 2 * np.pi * delta / base.length
    if width >= np.pi:
        raise ChartError("mollification width exceeds half the period")
    k = wavenumbers(base.n)
    modes = np.fft.fft(base.normal, axis=0) * bump_fourier(np.abs(k), width)[:, None]
    nd = np.real(np.fft.ifft(modes, axis=0))
    if delta == 0:
        nd = base.normal.copy()
    if renormalize:
        nd = nd / np.linalg.norm(nd, axis=1, keepdims=True)
    return nd


def build_phantom(base: Curve, delta: float, renormalize: bool = True, r_tilde: float | None = None,
                  tubular=None) -> PhantomField:
    """Construct ``nu_delta`` for a base curve.

    ``r_tilde`` defaults to twice the certified tubular radius when the
    nearest-point projection is verified unique out to the cutoff support
    ``3*r_tilde/4``; otherwise it falls back to the tubular radius itself.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    tub = tubular or tubular_radius(base)
    if r_tilde is None:
        r_tilde = 2 * tub.r0
        if not injectivity_scan(base, 0.75 * r_tilde, n_r=7, stride=max(1, base.n // 64)):
            r_tilde = tub.r0
    nd = _mollified_normal(base, delta, renormalize)
    field = PhantomField(base, delta, r_tilde, nd, renormalize=renormalize, tubular=tub)
    defect = transversality_defect(field)
    if defect >= 0.5:
        raise ChartError(f"delta={delta} too large: transversality defect {defect:.3f} >= 1/2")
    return field


def transversality_defect(field: PhantomField) -> float:
    """max over the base grid of |nu_delta . tau_0|."""
    return float(np.max(np.abs(np.sum(field.on_curve() * field.base.tangent, axis=1))))


def defect_table(base: Curve, deltas, path=None):
    rows = [(float(d), transversality_defect(build_phantom(base, d))) for d in deltas]
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["delta", "defect"])
            w.writerows([(f"{d:.10g}", f"{c:.10e}") for d, c in rows])
    return rows


def field_derivatives(field: PhantomField, x):
    """Value, Jacobian ``J[m, l, i] = d nu^l / d x_i`` and Hessians ``H[m, l, i, j]``.

    Points where the cutoff vanishes get exact zeros.
    """
    xs = np.atleast_2d(np.asarray(x, dtype=float))
    m = xs.shape[0]
    val = np.zeros((m, 2))
    jac = np.zeros((m, 2, 2))
    hess = np.zeros((m, 2, 2, 2))
    _, r_all, _ = project(field.base, xs)
    inside = np.abs(np.atleast_1d(r_all)) < field.cutoff.support
    if not inside.any():
        return val, jac, hess
    tc = tube_coordinates(field.base, xs[inside])
    eta = field.cutoff(tc.r)
    eta1 = field.cutoff(tc.r, 1)
    eta2 = field.cutoff(tc.r, 2)
    N, Nt, Ntt = field.normal_interp.derivatives(tc.theta, (0, 1, 2))
    gt, gr = tc.grad_theta, tc.grad_r
    val[inside] = eta[:, None] * N
    jac[inside] = (
        eta1[:, None, None] * N[:, :, None] * gr[:, None, :]
        + eta[:, None, None] * Nt[:, :, None] * gt[:, None, :]
    )
    outer = lambda a, b: a[:, :, None] * b[:, None, :]
    rr = outer(gr, gr)
    tr = outer(gt, gr) + outer(gr, gt)
    tt = outer(gt, gt)
    hess[inside] = (
        eta2[:, None, None, None] * N[:, :, None, None] * rr[:, None]
        + eta1[:, None, None, None] * Nt[:, :, None, None] * tr[:, None]
        + eta1[:, None, None, None] * N[:, :, None, None] * tc.hess_r[:, None]
        + eta[:, None, None, None] * Ntt[:, :, None, None] * tt[:, None]
        + eta[:, None, None, None] * Nt[:, :, None, None] * tc.hess_theta[:, None]
    )
    return val, jac, hess


def wrap_angle(theta):
    """Map parameters into [0, 2*pi), sending values a rounding error below 2*pi to 0."""
    theta = np.mod(theta, 2 * np.pi)
    return np.where(theta > 2 * np.pi - 1e-13, 0.0, theta)


# --- flow chart -------------------------------------------------------------

class FlowChart:
    """Coordinates ``x = phi_delta(theta, r)`` from the flow of the phantom field.

    ``r0`` defaults to the cutoff plateau ``r_tilde/2``, on which the field
    has unit length along the base and trajectories stay in the plateau.
    The flow uses ``nsteps`` classical RK4 steps of size ``r/nsteps``,
    integrated in nearest-point coordinates of the base curve, which are
    valid throughout the cutoff support.
    """

    def __init__(self, field: PhantomField, r0: float | None = None, nsteps: int = 64):
        self.field = field
        self.base = field.base
        self.r0 = float(r0 if r0 is not None else field.r_tilde / 2)
        self.nsteps = int(nsteps)
        self.ext_cutoff = Cutoff(self.r0 / 4, 3 * self.r0 / 4)

    @property
    def step(self):
        return self.r0 / self.nsteps

    @property
    def exact_normal_lines(self):
        # with delta = 0 the field is nu_0(y) along each normal segment
        return self.field.delta == 0

    @cached_property
    def _tube_velocity(self):
        # in nearest-point coordinates x = gamma(theta) + r nu_0(theta) the field reads
        # theta' = eta(r) a(theta) / (1 + r kappa(theta)), r' = eta(r) b(theta)
        base = self.base
        nd = self.field.smoothed_normal
        a = np.sum(nd * base.tangent, axis=1) / base.speed
        b = np.sum(nd * base.normal, axis=1)
        return PeriodicInterpolant(np.column_stack([a, b, base.curvature]))

    def _rhs(self, th, r, with_jac=False):
        """Tube-coordinate velocity and, optionally, its Jacobian in (theta, r)."""
        if with_jac:
            (a, b, k), (a1, b1, k1) = (v.T for v in self._tube_velocity.derivatives(th, (0, 1)))
        else:
            a, b, k = self._tube_velocity(th).T
        cut = self.field.cutoff
        eta = cut(r)
        q = 1 + r * k
        vel = (eta * a / q, eta * b)
        if not with_jac:
            return vel
        eta1 = cut(r, 1)
        jac = (
            (eta * (a1 * q - a * r * k1) / q**2, eta1 * a / q - eta * a * k / q**2),
            (eta * b1, eta1 * b),
        )
        return vel, jac

    def flow_coordinates(self, theta, r, with_derivative=False, r_start=None):
        """Integrate the field in tube coordinates; returns ``(theta, r[, dtheta, dr])``.

        The optional outputs are derivatives of the end point with respect to
        the starting parameter, from the variational equation.
        """
        h = r / self.nsteps
        th = theta.copy()
        rr = np.zeros_like(r) if r_start is None else np.array(r_start, dtype=float)
        if not with_derivative:
            for _ in range(self.nsteps):
                k1 = self._rhs(th, rr)
                k2 = self._rhs(th + 0.5 * h * k1[0], rr + 0.5 * h * k1[1])
                k3 = self._rhs(th + 0.5 * h * k2[0], rr + 0.5 * h * k2[1])
                k4 = self._rhs(th + h * k3[0], rr + h * k3[1])
                th = th + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
                rr = rr + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            return th, rr
        y = np.stack([th, rr, np.ones_like(th), np.zeros_like(th)])

        def rhs(y):
            (vt, vr), ((jtt, jtr), (jrt, jrr)) = self._rhs(y[0], y[1], with_jac=True)
            return np.stack([vt, vr, jtt * y[2] + jtr * y[3], jrt * y[2] + jrr * y[3]])

        for _ in range(self.nsteps):
            k1 = rhs(y)
            k2 = rhs(y + 0.5 * h * k1)
            k3 = rhs(y + 0.5 * h * k2)
            k4 = rhs(y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return tuple(y)

    def _to_plane(self, th, rr):
        return self.base.eval(th) + rr[:, None] * self.base.normal_at(th)

    def flow(self, theta, r, check=True):
        """Flow the base point at parameter ``theta`` for time ``r``."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        r = np.broadcast_to(np.asarray(r, dtype=float), theta.shape).copy()
        if check and np.any(np.abs(r) > self.r0 * (1 + 1e-12)):
            raise ChartError(f"|r| = {np.abs(r).max():.4g} exceeds chart half-width {self.r0:.4g}")
        if self.exact_normal_lines:
            return self._to_plane(theta, r)
        return self._to_plane(*self.flow_coordinates(theta, r))

    def flow_point(self, x, t):
        """Flow an arbitrary point of the tube for time ``t`` (negative runs backward)."""
        xs = np.atleast_2d(np.asarray(x, dtype=float))
        theta, r, _ = project(self.base, xs)
        theta, r = np.atleast_1d(theta), np.atleast_1d(r)
        t = np.broadcast_to(np.asarray(t, dtype=float), theta.shape).copy()
        if self.exact_normal_lines:
            out = self._to_plane(theta, r + t)
        else:
            out = self._to_plane(*self.flow_coordinates(theta, t, r_start=r))
        return out[0] if np.ndim(x) == 1 else out

    def flow_theta_derivative(self, theta, r):
        """d/dtheta of the flow at fixed r."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        r = np.broadcast_to(np.asarray(r, dtype=float), theta.shape).copy()
        if self.exact_normal_lines:
            th, rr, dth, drr = theta, r, np.ones_like(r), np.zeros_like(r)
        else:
            th, rr, dth, drr = self.flow_coordinates(theta, r, with_derivative=True)
        _, d1, d2, _ = self.base.frame(th)
        s = np.linalg.norm(d1, axis=1)
        kappa = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / s**3
        nu = rotate_cw(d1 / s[:, None])
        return d1 * ((1 + rr * kappa) * dth)[:, None] + nu * drr[:, None]

    def inverse(self, x, tol=1e-12, maxiter=30):
        """Chart coordinates ``(theta, r)`` of points in the r0-tube."""
        theta, r, _ = self._invert(x, tol, maxiter, False)
        return theta, r

    def inverse_with_jacobian(self, x, tol=1e-12, maxiter=30):
        """``(theta, r, Dc)`` with ``Dc[m] = d(theta, r)/dx``, the inverse of ``[d_theta phi, d_r phi]``."""
        return self._invert(x, tol, maxiter, True)

    def _invert(self, x, tol, maxiter, want_jacobian):
        xs = np.atleast_2d(np.asarray(x, dtype=float))
        theta, r, _ = project(self.base, xs)
        theta = np.atleast_1d(theta)
        r = np.atleast_1d(r)
        if np.any(np.abs(r) > 1.5 * self.r0):
            raise ChartError("point lies outside the flow chart")
        j_t = j_r = None
        if not self.exact_normal_lines:
            r = np.clip(r, -self.r0, self.r0)
            for _ in range(maxiter):
                p = self.flow(theta, r, check=False)
                res = p - xs
                j_t = self.flow_theta_derivative(theta, r)
                j_r = self.field(p)
                if np.max(np.linalg.norm(res, axis=1)) < tol:
                    break
                det = j_t[:, 0] * j_r[:, 1] - j_t[:, 1] * j_r[:, 0]
                dth = (res[:, 0] * j_r[:, 1] - res[:, 1] * j_r[:, 0]) / det
                dr = (j_t[:, 0] * res[:, 1] - j_t[:, 1] * res[:, 0]) / det
                theta = theta - dth
                r = r - dr
            else:
                raise ChartError("chart inversion did not converge")
        elif want_jacobian:
            j_t = self.flow_theta_derivative(theta, r)
            j_r = self.base.normal_at(theta)
        theta = wrap_angle(theta)
        if np.any(np.abs(r) > self.r0 * (1 + 1e-9)):
            raise ChartError(f"point outside the chart: |r| = {np.abs(r).max():.4g} > r0 = {self.r0:.4g}")
        if not want_jacobian:
            return theta, r, None
        Dphi = np.stack([j_t, j_r], axis=-1)
        return theta, r, np.linalg.inv(Dphi)


def flow(chart: FlowChart, y_index, r):
    """Flow from the base grid point(s) ``y_index`` for time ``r``."""
    idx = np.atleast_1d(y_index)
    theta = chart.base.theta[idx]
    out = chart.flow(theta, r)
    # time zero returns the grid samples themselves, not their interpolant values
    zero = np.broadcast_to(np.asarray(r) == 0, theta.shape)
    out[zero] = chart.base.points[idx[zero]]
    return out[0] if np.ndim(y_index) == 0 else out


def chart_inverse(chart: FlowChart, x):
    """Return ``(base_point, r)`` with ``x`` the flow of the base point for time ``r``.

    Use :meth:`FlowChart.inverse` for the curve parameter itself.
    """
    single = np.ndim(x) == 1
    theta, r = chart.inverse(x)
    y = chart.base.eval(theta)
    if single:
        return y[0], float(r[0])
    return y, r


# --- global extension of a graph displacement -------------------------------

class ExtendedDiffeo:
    """Global map equal to ``(theta, r) -> (theta, r + rho(theta)*eta(r))`` in the chart.

    Identity outside the chart's tube; ``eta`` has plateau ``r0/4`` and
    support ``3*r0/4``.
    """

    def __init__(self, chart: FlowChart, rho):
        rho = np.asarray(getattr(rho, "rho", rho), dtype=float)
        if rho.shape != (chart.base.n,):
            raise ValueError("rho must be sampled on the base grid")
        self.chart = chart
        self.rho = rho
        self.rho_interp = PeriodicInterpolant(rho)
        self.eta = chart.ext_cutoff
        if np.max(np.abs(rho)) * self.eta.max_slope >= 1:
            raise ChartError("extension not monotone: ||rho||_inf * max|eta'| >= 1")

    def _coords(self, xs):
        theta, r, _ = project(self.chart.base, xs)
        theta, r = np.atleast_1d(theta), np.atleast_1d(r)
        inside = np.abs(r) < self.eta.support * (1 + 1e-3) + 0.5 * np.max(np.abs(self.rho))
        if self.chart.exact_normal_lines or not inside.any():
            return theta, r, inside
        t_in, r_in = self.chart.inverse(xs[inside])
        theta = theta.copy()
        r = r.copy()
        theta[inside], r[inside] = t_in, r_in
        return theta, r, inside

    def forward(self, x):
        xs = np.atleast_2d(np.asarray(x, dtype=float))
        out = xs.copy()
        theta, r, inside = self._coords(xs)
        move = inside & (np.abs(r) < self.eta.support)
        if move.any():
            rn = r[move] + self.rho_interp(theta[move]) * self.eta(r[move])
            out[move] = self.chart.flow(theta[move], rn, check=False)
        return out[0] if np.ndim(x) == 1 else out

    __call__ = forward

    def inverse(self, x, tol=1e-14):
        xs = np.atleast_2d(np.asarray(x, dtype=float))
        out = xs.copy()
        theta, rn, inside = self._coords(xs)
        rho = self.rho_interp(theta)
        # image of the support band is the same band shifted by at most |rho| near 0
        move = inside & (np.abs(rn) < self.eta.support)
        if move.any():
            a, rr, target = rho[move], rn[move].copy(), rn[move]
            for _ in range(60):
                g = rr + a * self.eta(rr) - target
                gp = 1 + a * self.eta(rr, 1)
                step = g / gp
                rr -= step
                if np.max(np.abs(step)) < tol:
                    break
            out[move] = self.chart.flow(theta[move], rr, check=False)
        return out[0] if np.ndim(x) == 1 else out

    def jacobian(self, x, h=1e-6):
        xs = np.atleast_2d(np.asarray(x, dtype=float))
        jac = np.empty((xs.shape[0], 2, 2))
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            jac[:, :, i] = (self.forward(xs + e) - self.forward(xs - e)) / (2 * h)
        return jac[0] if np.ndim(x) == 1 else jac


def extend_diffeo(chart: FlowChart, rho) -> ExtendedDiffeo:
    return ExtendedDiffeo(chart, rho)
