"""Curves near a base curve written as graphs ``r = rho(theta)`` in a flow chart."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .curves import Curve, CurveError, CurvePair, hausdorff_c0, project, signed_distance
from .phantom import ChartError, FlowChart
from .spectral import differentiate

SMALLNESS = 0.5


class GraphError(ValueError):
    """Raised when a curve is not a small graph over the base in a chart."""


@dataclass(frozen=True, eq=False)
class RhoGraph:
    """Displacement ``rho`` sampled on the base grid of ``chart``."""

    chart: FlowChart
    rho: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float)
        if rho.shape != (self.chart.base.n,):
            raise GraphError(f"rho has shape {rho.shape}, expected ({self.chart.base.n},)")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        if np.max(np.abs(rho)) >= self.chart.r0:
            raise GraphError(f"||rho||_inf = {np.max(np.abs(rho)):.4g} >= r0 = {self.chart.r0:.4g}")
        if self.smallness >= SMALLNESS:
            raise GraphError(f"rho not C1-small: measure {self.smallness:.4g} >= {SMALLNESS}")

    @cached_property
    def rho_theta(self):
        return differentiate(self.rho)

    @property
    def smallness(self):
        scale = self.chart.base.length / (2 * np.pi)
        return max(np.max(np.abs(self.rho)) / self.chart.r0, np.max(np.abs(self.rho_theta)) / scale)

    def __repr__(self):
        return f"RhoGraph(N={self.rho.size}, max|rho|={np.max(np.abs(self.rho)):.4g})"


def curve_from_rho(graph: RhoGraph) -> Curve:
    """The curve ``theta -> phi_delta(gamma_0(theta), rho(theta))``."""
    chart = graph.chart
    pts = chart.flow(chart.base.theta, graph.rho)
    try:
        return Curve(pts)
    except CurveError as exc:
        raise GraphError(f"graph curve is invalid: {exc}") from exc


def rho_from_curve(chart: FlowChart, target: Curve, tol=1e-12, maxiter=60, check=True) -> RhoGraph:
    """Recover ``rho`` with ``curve_from_rho(rho)`` tracing ``target``.

    Each base point is pushed along the flow until the signed distance to
    the target vanishes. Newton steps that leave the current bracket are
    replaced by bisection.
    """
    base = chart.base
    if check:
        pair = CurvePair(base, target)
        d0 = hausdorff_c0(pair)
        d1 = hausdorff_c0(pair, lift=True)
        if d0 >= 0.5 * chart.r0 or d1 >= 0.5:
            raise GraphError(
                f"target too far from base (C0 {d0:.4g} vs {0.5 * chart.r0:.4g}, lifted {d1:.4g} vs 0.5)"
            )
    theta = base.theta
    lo = np.full(base.n, -chart.r0)
    hi = np.full(base.n, chart.r0)
    f_lo = signed_distance(target, chart.flow(theta, lo))
    f_hi = signed_distance(target, chart.flow(theta, hi))
    if np.any(np.sign(f_lo) == np.sign(f_hi)):
        raise GraphError("target not a graph over base in this chart: no sign change on [-r0, r0]")
    r = np.zeros(base.n)
    t_target = None
    for _ in range(maxiter):
        x = chart.flow(theta, r, check=False)
        t_target, d, ok = project(target, x, theta0=t_target)
        if not np.all(ok):
            d = signed_distance(target, x)
        neg = np.sign(d) == np.sign(f_lo)
        lo = np.where(neg, r, lo)
        hi = np.where(neg, hi, r)
        if np.max(np.abs(d)) < tol:
            break
        # d/dr of the signed distance along the flow is nu_target . nu_delta
        slope = np.sum(target.normal_at(t_target) * chart.field(x), axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            r_new = r - d / slope
        slack = 1e-14 * chart.r0
        bad = ~np.isfinite(r_new) | (r_new < np.minimum(lo, hi) - slack) | (r_new > np.maximum(lo, hi) + slack)
        r_next = np.where(bad, 0.5 * (lo + hi), r_new)
        step = np.max(np.abs(r_next - r))
        r = r_next
        if step < 1e-15:
            break
    else:
        raise GraphError("Newton iteration for rho did not converge")
    if np.any(np.abs(r) >= chart.r0):
        raise GraphError("target not a graph over base in this chart: |rho| >= r0")
    return RhoGraph(chart, r)


def tangent_vectors(graph: RhoGraph) -> np.ndarray:
    """``d/dtheta`` of the graph curve from chart differentials and spectral ``rho'``."""
    chart = graph.chart
    theta = chart.base.theta
    x = chart.flow(theta, graph.rho)
    tv = chart.flow_theta_derivative(theta, graph.rho) + chart.field(x) * graph.rho_theta[:, None]
    if np.min(np.linalg.norm(tv, axis=1)) == 0:
        raise GraphError("degenerate graph tangent")
    return tv


def tangent_basis_angle(graph: RhoGraph) -> float:
    """Smallest angle (degrees) between the graph tangent and the field on the graph."""
    tv = tangent_vectors(graph)
    nu = graph.chart.field(curve_from_rho(graph).points)
    cosang = np.abs(np.sum(tv * nu, axis=1)) / (np.linalg.norm(tv, axis=1) * np.linalg.norm(nu, axis=1))
    return float(np.degrees(np.min(np.arccos(np.clip(cosang, 0, 1)))))


def identify_tangent(field, h) -> np.ndarray:
    """Boundary vector field ``h * nu_delta`` on the base grid."""
    h = np.asarray(h, dtype=float)
    return h[:, None] * field.on_curve()


def recover_scalar(field, v) -> np.ndarray:
    """Inverse of :func:`identify_tangent`."""
    nd = field.on_curve()
    return np.sum(np.asarray(v) * nd, axis=1) / np.sum(nd * nd, axis=1)


# --- I/O --------------------------------------------------------------------

def write_rho_csv(graph: RhoGraph, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta", "rho"])
        for t, r in zip(graph.chart.base.theta, graph.rho):
            w.writerow([repr(float(t)), repr(float(r))])


def read_rho_csv(chart: FlowChart, path) -> RhoGraph:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return RhoGraph(chart, np.array([float(row["rho"]) for row in rows]))


def rho_to_json(graph: RhoGraph) -> str:
    return json.dumps({"theta": graph.chart.base.theta.tolist(), "rho": graph.rho.tolist()})


def rho_from_json(chart: FlowChart, text: str) -> RhoGraph:
    return RhoGraph(chart, np.asarray(json.loads(text)["rho"], dtype=float))
