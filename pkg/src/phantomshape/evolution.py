"""Linearized and nonlinear Hele-Shaw fronts and the linearized Stefan system on the disk."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg as sla

from .bvp import SourceSpec, as_source, dtn, solve_dirichlet
from .curves import Curve, CurveError, CurvePair, circle, hausdorff_c0, write_curve_text
from .graph import SMALLNESS, GraphError, RhoGraph, curve_from_rho, rho_from_curve
from .phantom import ChartError, FlowChart, PhantomField, build_phantom
from .poly import area_integral
from .shape import second_normal_identity

log = logging.getLogger(__name__)


class EvolutionError(RuntimeError):
    """Raised when a time integration cannot proceed (solver failure, invalid front)."""


# --- boundary coefficients shared by Hele-Shaw and Stefan --------------------

@dataclass(frozen=True, eq=False)
class BoundaryCoefficients:
    """``a = d_nu_delta u0``, ``b = d_nu0 d_nu_delta u0`` and ``A = nu_delta . nu0`` on the base grid."""

    a: np.ndarray
    b: np.ndarray
    factor: np.ndarray


def boundary_coefficients(base: Curve, f, phantom: PhantomField) -> BoundaryCoefficients:
    src = as_source(f)
    sol = solve_dirichlet(base, src)
    nd = phantom.on_curve()
    factor = np.sum(nd * base.normal, axis=1)
    # grad u0 = u_nu nu0 on the boundary since u0 vanishes there
    a = factor * sol.normal_derivative
    b = second_normal_identity(sol, phantom, fd_check=False).certified
    return BoundaryCoefficients(a, b, factor)


# --- linearized Hele-Shaw -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearizedHSOperator:
    """``h -> (nu_delta . nu0)^{-1} [DtN(a h) - b h]`` as a dense matrix on the base grid."""

    matrix: np.ndarray
    a: np.ndarray
    b: np.ndarray
    factor: np.ndarray
    base: Curve

    def __call__(self, h):
        return self.matrix @ np.asarray(h, dtype=float)


def assemble_linearized_hs(base: Curve, f, phantom: PhantomField) -> LinearizedHSOperator:
    """Assemble the reduced linearized Hele-Shaw generator.

    The variation ``h nu_delta`` of the front obeys
    ``(nu_delta . nu0) h' = DtN(a h) - b h`` with ``a = d_nu_delta u0`` and
    ``b = d_nu0 d_nu_delta u0``; the factor is frozen at the base curve.
    """
    if phantom.base is not base:
        raise ValueError("phantom field must be built on the same base curve")
    co = boundary_coefficients(base, f, phantom)
    if np.min(co.factor) <= 0:
        raise ChartError("phantom field is not transversal to the base")
    D = dtn(base).matrix
    M = (D * co.a[None, :] - np.diag(co.b)) / co.factor[:, None]
    # the Nyquist mode has no resolved derivative (DtN maps it to zero), so it is projected out
    P = nyquist_filter(base.n)
    M = P @ M @ P
    return LinearizedHSOperator(M, co.a, co.b, co.factor, base)


def nyquist_filter(n):
    """Projector removing the ``cos(n theta / 2)`` grid mode (identity for odd ``n``)."""
    P = np.eye(n)
    if n % 2 == 0:
        v = (-1.0) ** np.arange(n)
        P -= np.outer(v, v) / n
    return P


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray
    threshold: float
    count_above: int


def spectrum(op, threshold=0.5) -> Spectrum:
    """Dense eigenvalues sorted by decreasing real part, then imaginary part.

    ``count_above`` counts eigenvalues with real part above ``threshold``.
    """
    M = op.matrix if hasattr(op, "matrix") else np.asarray(op, dtype=float)
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise EvolutionError(f"eigensolver failed: {exc}") from exc
    if not np.all(np.isfinite(ev)):
        raise EvolutionError("eigensolver returned non-finite values")
    # round before sorting so that conjugate pairs and near-ties order reproducibly
    key = np.lexsort((np.round(ev.imag, 9), -np.round(ev.real, 9)))
    ev = ev[key]
    return Spectrum(ev, float(threshold), int(np.sum(ev.real > threshold)))


def write_spectrum_csv(spec: Spectrum, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["real", "imag"])
        for z in spec.values:
            w.writerow([f"{z.real:.10e}", f"{z.imag:.10e}"])


class TRBDF2:
    """TR-BDF2 for ``u' = G u`` with a constant matrix: L-stable, second order."""

    gamma = 2 - np.sqrt(2)

    def __init__(self, G, dt):
        G = np.asarray(G, dtype=float)
        I = np.eye(G.shape[0])
        g = self.gamma
        self.dt = float(dt)
        self.explicit_half = I + 0.5 * g * dt * G
        # with gamma = 2 - sqrt(2) both stages share the implicit matrix I - (gamma/2) dt G
        try:
            self.lu = sla.lu_factor(I - 0.5 * g * dt * G, check_finite=True)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise EvolutionError(f"implicit step matrix is singular: {exc}") from exc
        if np.min(np.abs(np.diag(self.lu[0]))) == 0:
            raise EvolutionError("implicit step matrix is singular")

    def step(self, u):
        g = self.gamma
        u_g = sla.lu_solve(self.lu, self.explicit_half @ u)
        rhs = (u_g - (1 - g) ** 2 * u) / (g * (2 - g))
        return sla.lu_solve(self.lu, rhs)


def integrate_linear(G, u0, T, dt, times=None):
    """Integrate ``u' = G u`` with TR-BDF2, returning ``(times, U)`` at the requested times.

    ``dt`` is reduced so that every sample time lies on the step grid.
    """
    u = np.array(u0, dtype=float)
    T = float(T)
    times = np.array([0.0, T] if times is None else times, dtype=float)
    if np.any(np.diff(times) < 0) or times[0] < 0 or times[-1] > T + 1e-12:
        raise ValueError("sample times must be sorted within [0, T]")
    nsteps = max(1, int(np.ceil(T / dt - 1e-9)))
    step_dt = T / nsteps
    idx = np.rint(times / step_dt).astype(int)
    if np.max(np.abs(idx * step_dt - times)) > 1e-9 * max(1.0, T):
        raise ValueError(f"sample times are not multiples of the step {step_dt:.6g}")
    stepper = TRBDF2(G, step_dt)
    out = np.empty((times.size,) + u.shape)
    j = 0
    for n in range(nsteps + 1):
        while j < times.size and idx[j] == n:
            out[j] = u
            j += 1
        if n < nsteps:
            u = stepper.step(u)
            if not np.all(np.isfinite(u)):
                raise EvolutionError(f"non-finite state at t = {(n + 1) * step_dt:.6g}")
    return times, out


def evolve_linearized_hs(op: LinearizedHSOperator, h0, T, dt, times=None):
    """Samples of ``h(t)`` with ``h' = op h`` (TR-BDF2); returns ``(times, H)`` with ``H`` of shape (n_t, N)."""
    h0 = np.asarray(h0, dtype=float)
    if h0.shape != (op.matrix.shape[0],):
        raise ValueError(f"h0 has shape {h0.shape}, expected ({op.matrix.shape[0]},)")
    return integrate_linear(op.matrix, h0, T, dt, times)


def write_trajectory_csv(path, times, values, prefix="v"):
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[0] != len(times):
        values = values.reshape(len(times), -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"{prefix}{j}" for j in range(values.shape[1])])
        for t, row in zip(times, values):
            w.writerow([f"{t:.10g}"] + [f"{v:.10e}" for v in row])


# --- nonlinear Hele-Shaw ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FrontState:
    """Front ``Gamma(t) = curve_from_rho(graph)`` at time ``t``."""

    t: float
    graph: RhoGraph

    @property
    def curve(self) -> Curve:
        return curve_from_rho(self.graph)


@dataclass(eq=False)
class FrontTrajectory:
    states: list
    recharters: list = dc_field(default_factory=list)
    # per-step records, closed by the final state: time, area, oint V ds, iint f
    step_times: list = dc_field(default_factory=list)
    areas: list = dc_field(default_factory=list)
    area_rates: list = dc_field(default_factory=list)
    source_integrals: list = dc_field(default_factory=list)

    def record(self, t, curve, V, src):
        self.step_times.append(float(t))
        self.areas.append(float(curve.area))
        self.area_rates.append(float(np.sum(V * curve.speed) * 2 * np.pi / curve.n))
        self.source_integrals.append(_source_integral(curve, src))

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    @property
    def final(self) -> FrontState:
        return self.states[-1]

    def curves(self):
        return [s.curve for s in self.states]


def front_velocity(graph: RhoGraph, src: SourceSpec, curve: Curve | None = None):
    """``(rho_t, V, curve)`` with ``V = -d_nu u`` on the graph curve and ``rho_t = V / (nu_delta . nu_rho)``."""
    try:
        curve = curve if curve is not None else curve_from_rho(graph)
        sol = solve_dirichlet(curve, src, check_particular=False)
    except (CurveError, GraphError) as exc:
        raise EvolutionError(f"invalid front: {exc}") from exc
    V = -sol.normal_derivative
    trans = np.sum(graph.chart.field(curve.points) * curve.normal, axis=1)
    if np.min(trans) <= 0.5:
        raise EvolutionError(f"front lost transversality to the chart field (min {np.min(trans):.3g})")
    return V / trans, V, curve


def _rk4_stable_dt(curve: Curve, V):
    # the linearized generator has rates up to ~ max|d_nu u| * pi N / L on the grid;
    # the real-axis stability interval of classical RK4 is about 2.78
    rate = np.max(np.abs(V)) * np.pi * curve.n / curve.length
    return 2.5 / rate if rate > 0 else np.inf


def _new_chart(curve: Curve, delta: float, nsteps: int) -> FlowChart:
    try:
        return FlowChart(build_phantom(curve, delta), nsteps=nsteps)
    except (ChartError, CurveError) as exc:
        raise EvolutionError(f"re-chartering failed: {exc}") from exc


def _rk4_step(graph: RhoGraph, k1, h, src):
    rho = graph.rho
    k2 = front_velocity(RhoGraph(graph.chart, rho + 0.5 * h * k1), src)[0]
    k3 = front_velocity(RhoGraph(graph.chart, rho + 0.5 * h * k2), src)[0]
    k4 = front_velocity(RhoGraph(graph.chart, rho + h * k3), src)[0]
    return RhoGraph(graph.chart, rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4))


def _recharter(traj, graph: RhoGraph, t, reason) -> RhoGraph:
    front = curve_from_rho(graph)
    chart = _new_chart(front, graph.chart.field.delta, graph.chart.nsteps)
    traj.recharters.append((float(t), reason))
    log.info("re-chartering at t=%.6g (%s)", t, reason)
    return RhoGraph(chart, np.zeros(front.n))


def evolve_nonlinear_hs(chart: FlowChart, rho0, f, T, dt, recharter_every: int | None = None,
                        snapshot_times=None, smallness_limit: float = 0.8 * SMALLNESS) -> FrontTrajectory:
    """Explicit RK4 evolution of ``rho_t = V / (nu_delta . nu_rho)`` with ``V = -d_nu u``.

    ``dt`` is an upper bound; each step is limited by ``dt ||V||_inf <= 0.1 r0`` and by
    the RK4 stability bound of the front operator, and is shortened to hit ``T`` and
    every snapshot time. When the graph smallness exceeds ``smallness_limit`` (or
    every ``recharter_every`` steps) a new chart is built around the current front
    and ``rho`` is reset to zero. Snapshots are recorded at ``snapshot_times``
    (default: every step).
    """
    src = as_source(f)
    graph = rho0 if isinstance(rho0, RhoGraph) else RhoGraph(chart, rho0)
    t = 0.0
    T = float(T)
    marks = None if snapshot_times is None else sorted(set(float(s) for s in snapshot_times) | {T})
    traj = FrontTrajectory([FrontState(0.0, graph)])
    steps = 0
    while t < T - 1e-14:
        k1, V, curve = front_velocity(graph, src)
        traj.record(t, curve, V, src)
        h = min(float(dt), 0.1 * graph.chart.r0 / max(np.max(np.abs(V)), 1e-300), _rk4_stable_dt(curve, V), T - t)
        if marks is not None:
            nxt = min(m for m in marks if m > t + 1e-14)
            h = min(h, nxt - t)
        try:
            graph = _rk4_step(graph, k1, h, src)
        except GraphError as exc:
            if not np.any(graph.rho):
                raise EvolutionError(f"front left a fresh chart during the step from t = {t:.6g}: {exc}") from exc
            # the step left the current chart: re-charter at t and retry once
            graph = _recharter(traj, graph, t, f"step rejected ({exc})")
            k1, V, curve = front_velocity(graph, src)
            try:
                graph = _rk4_step(graph, k1, h, src)
            except GraphError as exc2:
                raise EvolutionError(f"front left the chart during the step from t = {t:.6g}: {exc2}; "
                                     "reduce dt") from exc2
        t = T if abs(T - (t + h)) < 1e-13 else t + h
        steps += 1
        forced = recharter_every is not None and steps % recharter_every == 0
        if (forced or graph.smallness > smallness_limit) and t < T - 1e-14:
            graph = _recharter(traj, graph, t, "forced" if forced else f"smallness {graph.smallness:.3g}")
        if marks is None or any(abs(t - m) < 1e-12 for m in marks):
            traj.states.append(FrontState(t, graph))
    _, V, curve = front_velocity(graph, src)
    traj.record(t, curve, V, src)
    return traj


def _source_integral(curve: Curve, src: SourceSpec) -> float:
    if src.poly is not None:
        return area_integral(curve, src.poly)
    # smooth non-polynomial sources: Gauss-Legendre in the radial direction towards the centroid
    x, w = np.polynomial.legendre.leggauss(24)
    t = 0.5 * (x + 1)
    c = np.mean(curve.points, axis=0)
    rel = curve.points - c
    jac = rel[:, 0] * curve.d1[:, 1] - rel[:, 1] * curve.d1[:, 0]
    pts = c + t[:, None, None] * rel[None]
    vals = src.f(pts.reshape(-1, 2)).reshape(t.size, -1)
    return float(np.sum(0.5 * w[:, None] * t[:, None] * vals * jac[None]) * 2 * np.pi / curve.n)


def area_balance(traj: FrontTrajectory) -> dict:
    """Compare the discrete area growth with the source integral ``iint f``.

    ``rate_error``: max relative gap between ``oint V ds`` and ``iint f`` over the steps.
    ``increment_error``: max relative gap between ``Area(t) - Area(0)`` and the cumulative
    Simpson integral in time of ``iint f``.
    """
    from scipy.integrate import cumulative_simpson

    t = np.array(traj.step_times)
    areas = np.array(traj.areas)
    rates = np.array(traj.area_rates)
    src = np.array(traj.source_integrals)
    rate_err = float(np.max(np.abs(rates - src) / np.abs(src))) if np.all(src != 0) else float(np.max(np.abs(rates)))
    inc_err = 0.0
    if t.size >= 3:
        integral = cumulative_simpson(src, x=t, initial=0.0)
        growth = areas - areas[0]
        scale = np.maximum(np.abs(integral), 1e-300)
        inc_err = float(np.max(np.abs(growth[1:] - integral[1:]) / scale[1:]))
    return {"rate_error": rate_err, "increment_error": inc_err,
            "times": t, "areas": areas, "rates": rates, "source": src}


def mode_amplitude(values, theta, k):
    """``(2/N) sum v cos(k theta)`` (plain mean for ``k = 0``)."""
    w = np.cos(k * np.asarray(theta))
    return float(np.mean(values * w) * (1 if k == 0 else 2))


def write_front_snapshots(traj: FrontTrajectory, directory, prefix="front"):
    import os

    paths = []
    for j, s in enumerate(traj.states):
        path = os.path.join(directory, f"{prefix}_{j:03d}.txt")
        write_curve_text(s.curve, path)
        paths.append(path)
    return paths


def rho_in_chart(state: FrontState, chart: FlowChart) -> np.ndarray:
    """``rho`` of a front state expressed in ``chart`` (re-projected after re-chartering)."""
    if state.graph.chart is chart:
        return np.array(state.graph.rho)
    return np.array(rho_from_curve(chart, state.curve).rho)


# --- linearized Stefan on the unit disk ----------------------------------------

@dataclass(frozen=True)
class StefanCoefficients:
    """Constant boundary coefficients of a radial base state on the unit disk."""

    a: float
    b: float
    factor: float = 1.0


def stefan_coefficients(f, delta=0.0, n=128, tol=1e-8) -> StefanCoefficients:
    """``a``, ``b`` and ``nu_delta . nu0`` from the shared boundary assembly on the unit circle."""
    base = circle(n)
    co = boundary_coefficients(base, f, build_phantom(base, delta))
    vals = []
    for v in (co.a, co.b, co.factor):
        spread = np.max(v) - np.min(v)
        if spread > tol * (1 + np.max(np.abs(v))):
            raise ValueError(f"source is not radial: boundary coefficient varies by {spread:.3g}")
        vals.append(float(np.mean(v)))
    return StefanCoefficients(*vals)


@dataclass(frozen=True, eq=False)
class StefanModeState:
    """Mode ``k`` of the linearized Stefan system: ``w[j] = w_k(j / M)`` and boundary height ``h``."""

    k: int
    w: np.ndarray
    h: float
    t: float = 0.0

    @classmethod
    def initial(cls, k, h0=0.0, M=200, coefficients: StefanCoefficients | None = None):
        """State with ``w = 0`` inside and the boundary value ``w(1) = -a h0`` enforced."""
        w = np.zeros(M + 1)
        if coefficients is not None:
            w[-1] = -coefficients.a * h0
        return cls(int(k), w, float(h0))

    @property
    def M(self):
        return self.w.size - 1


def stefan_generator(k, co: StefanCoefficients, M=200):
    """Matrix of the semi-discrete system for ``(w_free, h)``.

    Vertex grid ``r_j = j / M``. The free unknowns are ``w_0 .. w_{M-1}`` for
    ``k = 0`` (symmetry at the origin) and ``w_1 .. w_{M-1}`` otherwise
    (``w_0 = 0``); ``w_M = -a h`` is eliminated. The last row is
    ``A h' = -b h - d_r w(1)`` with a second-order one-sided derivative.
    """
    k = abs(int(k))
    dr = 1.0 / M
    r = np.arange(M + 1) * dr
    first = 0 if k == 0 else 1
    idx = np.arange(first, M)
    n = idx.size
    G = np.zeros((n + 1, n + 1))
    col = {j: c for c, j in enumerate(idx)}

    def add(row, j, coef):
        if j == M:
            G[row, n] += coef * (-co.a)
        elif j in col:
            G[row, col[j]] += coef

    for row, j in enumerate(idx):
        if j == 0:
            # Laplacian of a radial function at the origin: 2 w_rr = 4 (w_1 - w_0) / dr^2
            add(row, 0, -4 / dr**2)
            add(row, 1, 4 / dr**2)
            continue
        add(row, j - 1, 1 / dr**2 - 1 / (2 * r[j] * dr))
        add(row, j, -2 / dr**2 - k**2 / r[j] ** 2)
        add(row, j + 1, 1 / dr**2 + 1 / (2 * r[j] * dr))
    # boundary flux: d_r w(1) = (3 w_M - 4 w_{M-1} + w_{M-2}) / (2 dr)
    for j, coef in ((M, 3.0), (M - 1, -4.0), (M - 2, 1.0)):
        add(n, j, -coef / (2 * dr * co.factor))
    G[n, n] += -co.b / co.factor
    return G


@dataclass(eq=False)
class StefanTrajectory:
    k: int
    times: np.ndarray
    h: np.ndarray
    states: list


def evolve_linearized_stefan(states, f, T, dt, coefficients: StefanCoefficients | None = None,
                             times=None, delta=0.0):
    """Evolve independent Fourier modes of the linearized Stefan system on the unit disk.

    Each mode is integrated with TR-BDF2 on its own radial grid (the grid size is
    taken from the state). ``coefficients`` default to the boundary values of the
    radial base state with ``-laplace u0 = f``, ``u0 = 0`` on the unit circle.
    Returns one :class:`StefanTrajectory` per state.
    """
    co = coefficients or stefan_coefficients(f, delta)
    out = []
    for st in states:
        M = st.M
        G = stefan_generator(st.k, co, M)
        first = 0 if st.k == 0 else 1
        u0 = np.r_[st.w[first:M], st.h]
        ts, U = integrate_linear(G, u0, T, dt, times)
        snaps = []
        for t, u in zip(ts, U):
            w = np.zeros(M + 1)
            w[first:M] = u[:-1]
            w[M] = -co.a * u[-1]
            snaps.append(StefanModeState(st.k, w, float(u[-1]), float(t)))
        out.append(StefanTrajectory(st.k, ts, U[:, -1].copy(), snaps))
    return out


def stefan_leading_eigenvalue(k, co: StefanCoefficients, M=400) -> complex:
    """Dense eigensolve of the coupled radial discretization; eigenvalue of largest real part."""
    return spectrum(stefan_generator(k, co, M)).values[0]


def stefan_bessel_rate(k, co: StefanCoefficients, bracket=(1e-12, 50.0)):
    """Positive real growth rate of the continuous mode-k system, if one exists.

    Separation ``w = c I_k(sqrt(lam) r)`` gives
    ``A lam = -b + a sqrt(lam) I_k'(sqrt(lam)) / I_k(sqrt(lam))``.
    """
    from scipy.optimize import brentq
    from scipy.special import ive

    k = abs(int(k))

    def g(lam):
        s = np.sqrt(lam)
        # I_k' = (I_{k-1} + I_{k+1}) / 2; exponential scaling cancels in the ratio
        ratio = 0.5 * (ive(k - 1, s) + ive(k + 1, s)) / ive(k, s)
        return co.factor * lam + co.b - co.a * s * ratio

    lo, hi = bracket
    if np.sign(g(lo)) == np.sign(g(hi)):
        return None
    return brentq(g, lo, hi, xtol=1e-14)
