"""Closed planar curves on uniform periodic grids.

A :class:`Curve` is a counterclockwise, simple, regular closed curve given
by ``N`` samples at ``theta_i = 2*pi*i/N``. All geometry is computed from
the trigonometric interpolant of the samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree

from .spectral import PeriodicInterpolant, differentiate, periodic_grid, upsample


class CurveError(ValueError):
    """Raised when samples do not describe an admissible curve."""


SELF_INTERSECTION_FACTOR = 0.25


def rotate_cw(v):
    """Rotate vectors by -pi/2: the outward normal of a CCW tangent."""
    v = np.asarray(v)
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


class Curve:
    """Closed, simple, counterclockwise curve sampled on a periodic grid.

    Parameters
    ----------
    points : array_like, shape (N, 2)
        Samples at ``theta_i = 2*pi*i/N``; ``N`` must be a power of two.
    reorient : bool
        Reverse clockwise input instead of rejecting it.
    check_simple : bool
        Run the O(N^2) self-intersection test.
    """

    def __init__(self, points, reorient=False, check_simple=True):
        pts = np.array(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise CurveError("curve samples must have shape (N, 2)")
        n = pts.shape[0]
        if n < 8 or n & (n - 1):
            raise CurveError(f"N must be a power of two >= 8, got {n}")
        area = 0.5 * np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1])
        if area <= 0:
            if not reorient:
                raise CurveError("curve is not counterclockwise (signed area <= 0)")
            pts = np.roll(pts[::-1], 1, axis=0)
        pts.setflags(write=False)
        self.points = pts
        self.n = n
        speed = self.speed
        if speed.min() < 1e-8 * max(speed.mean(), 1e-300):
            raise CurveError(f"degenerate parametrization: min |gamma'| = {speed.min():.3e}")
        if check_simple:
            self._check_simple()

    @classmethod
    def from_function(cls, func, n):
        """Sample ``func(theta) -> (N, 2)`` on the N-point grid."""
        return cls(func(periodic_grid(n)))

    def _check_simple(self):
        n = self.n
        d = np.linalg.norm(self.points[:, None, :] - self.points[None, :, :], axis=-1)
        idx = np.arange(n)
        sep = np.abs(idx[:, None] - idx[None, :])
        sep = np.minimum(sep, n - sep)
        d[sep < 2] = np.inf
        threshold = SELF_INTERSECTION_FACTOR * self.length / n
        if d.min() <= threshold:
            raise CurveError(
                f"self-intersection: non-adjacent samples {d.min():.3e} apart "
                f"(threshold {threshold:.3e})"
            )
        # proper crossings of non-adjacent polygon edges
        a = self.points
        b = np.roll(a, -1, axis=0)
        e = b - a

        def orient(p, q):
            # orient[i, j]: side of point q[j] relative to edge i
            rel = q[None, :, :] - a[:, None, :]
            return e[:, None, 0] * rel[..., 1] - e[:, None, 1] * rel[..., 0]

        o1, o2 = orient(a, a), orient(a, b)
        cross = (o1 * o2 < 0) & (o1.T * o2.T < 0)
        cross &= sep >= 2
        if cross.any():
            i, j = np.argwhere(cross)[0]
            raise CurveError(f"self-intersection: polygon edges {i} and {j} cross")

    @property
    def theta(self):
        return periodic_grid(self.n)

    @cached_property
    def interp(self):
        return PeriodicInterpolant(self.points)

    @cached_property
    def d1(self):
        return differentiate(self.points, 1)

    @cached_property
    def d2(self):
        return differentiate(self.points, 2)

    @cached_property
    def d3(self):
        return differentiate(self.points, 3)

    @cached_property
    def speed(self):
        return np.linalg.norm(self.d1, axis=1)

    @cached_property
    def tangent(self):
        return self.d1 / self.speed[:, None]

    @cached_property
    def normal(self):
        return rotate_cw(self.tangent)

    @cached_property
    def curvature(self):
        cross = self.d1[:, 0] * self.d2[:, 1] - self.d1[:, 1] * self.d2[:, 0]
        return cross / self.speed**3

    @cached_property
    def length(self):
        return float(np.sum(self.speed) * 2 * np.pi / self.n)

    @cached_property
    def area(self):
        x, y = self.points.T
        return float(0.5 * np.sum(x * self.d1[:, 1] - y * self.d1[:, 0]) * 2 * np.pi / self.n)

    @property
    def weights(self):
        """Arclength quadrature weights ``|gamma'| * 2*pi/N``."""
        return self.speed * (2 * np.pi / self.n)

    @cached_property
    def z(self):
        return self.points[:, 0] + 1j * self.points[:, 1]

    @cached_property
    def dz(self):
        return self.d1[:, 0] + 1j * self.d1[:, 1]

    def arclength_derivative(self, values):
        """d/ds of grid samples, realized as spectral d/dtheta over |gamma'|."""
        values = np.asarray(values, dtype=float)
        scale = self.speed if values.ndim == 1 else self.speed[:, None]
        return differentiate(values) / scale

    def eval(self, theta, order=0):
        return self.interp(np.mod(theta, 2 * np.pi), order)

    def frame(self, theta):
        """Point, derivatives up to third order at arbitrary parameters."""
        return self.interp.derivatives(np.mod(theta, 2 * np.pi), (0, 1, 2, 3))

    def normal_at(self, theta):
        d1 = self.eval(theta, 1)
        return rotate_cw(d1 / np.linalg.norm(d1, axis=-1, keepdims=True))

    def resampled(self, m):
        return Curve(upsample(self.points, m), check_simple=False)

    def __repr__(self):
        return f"Curve(N={self.n}, length={self.length:.6g}, area={self.area:.6g})"


@dataclass(frozen=True)
class CurvePair:
    gamma: Curve
    gamma_bar: Curve


@dataclass(frozen=True)
class TubularData:
    r0: float
    Lambda: float
    sigma: float
    r_tilde_candidate: float = float("nan")

    def __post_init__(self):
        if not self.r0 > 0:
            raise CurveError("tubular radius must be positive")


# --- builtin families -------------------------------------------------------

def circle(n, radius=1.0, center=(0.0, 0.0)):
    t = periodic_grid(n)
    return Curve(np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)]))


def ellipse(n, a=2.0, b=1.0, center=(0.0, 0.0)):
    t = periodic_grid(n)
    return Curve(np.column_stack([center[0] + a * np.cos(t), center[1] + b * np.sin(t)]))


def star(n, radius=1.0, amplitude=0.2, lobes=5):
    t = periodic_grid(n)
    r = radius * (1 + amplitude * np.cos(lobes * t))
    return Curve(np.column_stack([r * np.cos(t), r * np.sin(t)]))


# --- pointwise geometry -----------------------------------------------------

def outward_normal(curve: Curve) -> np.ndarray:
    return curve.normal


def curvature(curve: Curve) -> np.ndarray:
    """Signed curvature, positive on counterclockwise circles."""
    return curve.curvature


def _nearest_parameter(interp, q, theta0, n_grid, maxiter=40):
    """Newton minimization of |P(theta) - q|^2 started at ``theta0``.

    Returns the refined parameters and a convergence mask. Steps are
    clamped to two grid spacings so the iteration stays local.
    """
    theta = np.array(theta0, dtype=float)
    clamp = 4 * np.pi / n_grid
    converged = np.zeros(theta.shape, dtype=bool)
    for _ in range(maxiter):
        p, dp, ddp = interp.derivatives(theta, (0, 1, 2))
        diff = p - q
        g = np.sum(diff * dp, axis=-1)
        gp = np.sum(dp * dp, axis=-1) + np.sum(diff * ddp, axis=-1)
        bad = gp <= 0
        step = np.where(bad, -np.sign(g) * clamp, -g / np.where(bad, 1.0, gp))
        step = np.clip(step, -clamp, clamp)
        theta = theta + np.where(converged, 0.0, step)
        converged |= np.abs(step) < 1e-14
        if converged.all():
            break
    p, dp, ddp = interp.derivatives(theta, (0, 1, 2))
    diff = p - q
    gp = np.sum(dp * dp, axis=-1) + np.sum(diff * ddp, axis=-1)
    g = np.sum(diff * dp, axis=-1)
    ok = (gp > 0) & (np.abs(g) <= 1e-9 * np.maximum(1.0, np.sqrt(np.sum(dp * dp, axis=-1))))
    return np.mod(theta, 2 * np.pi), ok


def winding_number(curve: Curve, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    dense = upsample(curve.points, 8 * curve.n)
    zc = dense[:, 0] + 1j * dense[:, 1]
    zx = x[:, 0] + 1j * x[:, 1]
    rel = zc[None, :] - zx[:, None]
    ang = np.angle(np.roll(rel, -1, axis=1) / rel)
    return np.rint(ang.sum(axis=1) / (2 * np.pi)).astype(int)


def project(curve: Curve, x, theta0=None):
    """Nearest-point projection of planar points onto the curve.

    Returns ``(theta, signed_distance, ok)``. ``ok`` is False where the
    local Newton projection failed; callers needing robustness outside
    the tube should use :func:`signed_distance`.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    if theta0 is None:
        tree = cKDTree(curve.points)
        _, idx = tree.query(xs)
        theta0 = curve.theta[idx]
    theta, ok = _nearest_parameter(curve.interp, xs, np.asarray(theta0, dtype=float), curve.n)
    p = curve.eval(theta)
    nrm = curve.normal_at(theta)
    diff = xs - p
    dist = np.linalg.norm(diff, axis=1)
    sign = np.where(np.sum(diff * nrm, axis=1) < 0, -1.0, 1.0)
    sd = sign * dist
    if single:
        return theta[0], sd[0], bool(ok[0])
    return theta, sd, ok


def signed_distance(curve: Curve, x):
    """Signed distance, negative inside the bounded region.

    Points whose Newton projection fails fall back to the unsigned
    distance to a dense resampling, signed by the winding number.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    _, sd, ok = project(curve, xs)
    sd = np.atleast_1d(sd)
    ok = np.atleast_1d(ok)
    if not ok.all():
        bad = ~ok
        dense = upsample(curve.points, 16 * curve.n)
        d, _ = cKDTree(dense).query(xs[bad])
        inside = winding_number(curve, xs[bad]) != 0
        sd = sd.copy()
        sd[bad] = np.where(inside, -d, d)
    return float(sd[0]) if single else sd


# --- distances between curves -----------------------------------------------

def _lifted(curve: Curve, lift: bool):
    if lift:
        return np.hstack([curve.points, curve.normal])
    return curve.points


def _directed_hausdorff(a: Curve, b: Curve, lift: bool, m: int):
    pa = PeriodicInterpolant(_lifted(a, lift))
    pb = PeriodicInterpolant(_lifted(b, lift))
    dense_b = upsample(_lifted(b, lift), m)
    tree = cKDTree(dense_b)
    theta_b_dense = periodic_grid(m)

    def dist_to_b(q):
        q = np.atleast_2d(q)
        _, idx = tree.query(q)
        tb, _ = _nearest_parameter(pb, q, theta_b_dense[idx], b.n)
        # a failed refinement can only be worse than the dense seed
        dref = np.linalg.norm(pb(tb) - q, axis=-1)
        dseed = np.linalg.norm(dense_b[idx] - q, axis=-1)
        return np.minimum(dref, dseed)

    theta_a = periodic_grid(m)
    qa = pa(theta_a)
    da = dist_to_b(qa)
    i = int(np.argmax(da))
    h = 2 * np.pi / m
    res = minimize_scalar(
        lambda t: -dist_to_b(pa(np.array([t])))[0],
        bounds=(theta_a[i] - h, theta_a[i] + h),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return max(float(da[i]), float(-res.fun))


def hausdorff_c0(pair, lift: bool = False, m: int | None = None) -> float:
    """Symmetric Hausdorff distance, optionally between lifted sets (y, nu(y)).

    ``pair`` is a :class:`CurvePair` or a 2-tuple of curves. With ``lift``
    the result is the C^1 distance between the curves.
    """
    a, b = (pair.gamma, pair.gamma_bar) if isinstance(pair, CurvePair) else pair
    m = m or max(8 * max(a.n, b.n), 2048)
    return max(_directed_hausdorff(a, b, lift, m), _directed_hausdorff(b, a, lift, m))


# --- tubular neighbourhood --------------------------------------------------

def injectivity_scan(curve: Curve, radius: float, n_r: int = 9, stride: int = 1, tol: float = 1e-8):
    """Check that y + r*nu(y) projects back to (y, r) for |r| <= radius."""
    idx = np.arange(0, curve.n, stride)
    rs = np.linspace(-radius, radius, n_r)
    pts = (curve.points[idx, None, :] + rs[None, :, None] * curve.normal[idx, None, :]).reshape(-1, 2)
    theta0 = np.repeat(curve.theta[idx], n_r)
    theta, sd, ok = project(curve, pts, theta0=theta0)
    # the seed is the true foot point; compare against a global seed too
    theta_g, sd_g, _ = project(curve, pts)
    dtheta = np.angle(np.exp(1j * (theta - theta0)))
    dtheta_g = np.angle(np.exp(1j * (theta_g - theta0)))
    r_expected = np.tile(rs, idx.size)
    return bool(
        ok.all()
        and np.max(np.abs(sd - r_expected)) < tol
        and np.max(np.abs(dtheta)) < tol
        and np.max(np.abs(sd_g - r_expected)) < tol
        and np.max(np.abs(dtheta_g)) < tol
    )


def tubular_radius(curve: Curve, verify: bool = True) -> TubularData:
    """Radius of a tube on which (y, r) -> y + r*nu(y) is a diffeomorphism.

    ``r0 = min(1/(2*Lambda), sigma/2)`` with ``Lambda = max|kappa|`` and
    ``sigma`` the smallest chord between samples at least ``pi/(2*Lambda)``
    apart in arclength. With ``verify`` an injectivity scan confirms the
    result, shrinking it if necessary.
    """
    kappa = curve.curvature
    lam = float(np.max(np.abs(kappa)))
    r_tilde = 0.5 / lam if lam > 0 else np.inf
    s = np.concatenate([[0.0], np.cumsum(0.5 * (curve.weights + np.roll(curve.weights, -1)))[:-1]])
    L = curve.length
    ds = np.abs(s[:, None] - s[None, :])
    ds = np.minimum(ds, L - ds)
    chords = np.linalg.norm(curve.points[:, None, :] - curve.points[None, :, :], axis=-1)
    far = ds >= np.pi * r_tilde
    sigma = float(chords[far].min()) if far.any() else np.inf
    r0 = min(r_tilde, 0.5 * sigma)
    if not np.isfinite(r0):
        raise CurveError("could not determine a finite tubular radius")
    if verify:
        for _ in range(20):
            if injectivity_scan(curve, 0.95 * r0, stride=max(1, curve.n // 64)):
                break
            r0 *= 0.8
        else:
            raise CurveError("no injective tubular neighbourhood found")
    return TubularData(r0=r0, Lambda=lam, sigma=sigma, r_tilde_candidate=r_tilde)


# --- I/O --------------------------------------------------------------------

def write_curve_text(curve: Curve, path):
    lines = [f"# curve N={curve.n}"] + [f"{x:.17g} {y:.17g}" for x, y in curve.points]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_curve_text(path, **kwargs) -> Curve:
    pts = []
    declared = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "N=" in line:
                    declared = int(line.split("N=")[1].split()[0])
                continue
            x, y = line.split()[:2]
            pts.append((float(x), float(y)))
    if declared is not None and declared != len(pts):
        raise CurveError(f"header declares N={declared} but file has {len(pts)} points")
    return Curve(pts, **kwargs)


def curve_to_json(curve: Curve) -> str:
    return json.dumps(curve.points.tolist())


def curve_from_json(text: str, **kwargs) -> Curve:
    return Curve(json.loads(text), **kwargs)


def load_curve(path, **kwargs) -> Curve:
    path = str(path)
    if path.endswith(".json"):
        with open(path) as fh:
            return curve_from_json(fh.read(), **kwargs)
    return read_curve_text(path, **kwargs)
