"""Acceptance suite: one recorded pass/fail line per criterion.

Run ``pytest tests/test_acceptance.py -v`` (the lines are collected in the
"acceptance criteria" section of the terminal summary) or
``python tests/test_acceptance.py``.
"""

import hashlib
import os
import shutil
import time

import numpy as np
import pytest

from phantomshape.bvp import dtn, solve_dirichlet
from phantomshape.curves import circle, ellipse, signed_distance
from phantomshape.evolution import (StefanModeState, area_balance, assemble_linearized_hs, evolve_linearized_stefan,
                                    evolve_nonlinear_hs, mode_amplitude, spectrum, stefan_coefficients,
                                    stefan_leading_eigenvalue)
from phantomshape.families import Dilation, Rotation
from phantomshape.graph import RhoGraph, curve_from_rho, rho_from_curve
from phantomshape.oracle import (AmbientFamily, PerturbationFamily, _probes, fd_coefficient_variation,
                                 fd_normal_derivative_variation, fd_normal_variation, fd_solution_variation,
                                 parse_h)
from phantomshape.phantom import FlowChart, build_phantom
from phantomshape import cli, shape


def test_criterion_01_geometry_identities(acceptance):
    t0 = time.perf_counter()
    base = ellipse(256, 2.0, 1.0)
    h = 1e-4 * base.length / (2 * np.pi)
    x = base.points
    grads, lap = [], 0.0
    for e in np.eye(2):
        p, m = signed_distance(base, x + h * e), signed_distance(base, x - h * e)
        grads.append((p - m) / (2 * h))
        lap = lap + (p + m) / h**2
    grad_err = np.max(np.linalg.norm(np.stack(grads, axis=1) - base.normal, axis=1))
    lap_err = np.max(np.abs(lap - base.curvature))
    acceptance(1, "signed-distance gradient and Laplacian on ellipse N=256",
               grad_err <= 1e-5 and lap_err <= 1e-3,
               f"grad err {grad_err:.2e} (tol 1e-5), laplacian err {lap_err:.2e} (tol 1e-3)",
               time.perf_counter() - t0, 5)


def test_criterion_02_dtn_exactness(acceptance):
    t0 = time.perf_counter()
    base = circle(128)
    D = dtn(base).matrix
    th = base.theta
    err = 0.0
    for k in range(1, 9):
        for g in (np.cos(k * th), np.sin(k * th)):
            err = max(err, np.max(np.abs(D @ g - k * g)))
    const_err = np.max(np.abs(D @ np.ones_like(th)))
    acceptance(2, "DtN on unit disk N=128", err <= 1e-7 and const_err <= 1e-8,
               f"modes k<=8 err {err:.2e} (tol 1e-7), constant err {const_err:.2e} (tol 1e-8)",
               time.perf_counter() - t0, 10)


def test_criterion_03_graph_roundtrip(acceptance):
    t0 = time.perf_counter()
    worst = 0.0
    cases = 0
    for base in (circle(128), ellipse(128, 2.0, 1.0)):
        th = base.theta
        for delta in (0.0, 0.02):
            chart = FlowChart(build_phantom(base, delta))
            for k in (1, 2, 3, 4):
                for amp in (0.02, 0.08):
                    rho = amp * chart.r0 * np.cos(k * th)
                    rec = rho_from_curve(chart, curve_from_rho(RhoGraph(chart, rho)))
                    worst = max(worst, np.max(np.abs(rec.rho - rho)))
                    cases += 1
    # bases x modes x amplitudes x delta = 2 x 4 x 2 x 2 combinations
    acceptance(3, f"graph roundtrip over {cases} cases", cases == 32 and worst <= 1e-8,
               f"max err {worst:.2e} (tol 1e-8)", time.perf_counter() - t0, 30)


def test_criterion_04_normal_derivative_oracle(acceptance):
    t0 = time.perf_counter()
    worst, disk_one = 0.0, np.inf
    for name, base in (("disk", circle(128)), ("ellipse", ellipse(128, 2.0, 1.0))):
        phantom = build_phantom(base, 0.0)
        chart = FlowChart(phantom)
        sol = solve_dirichlet(base, 2.0, 0.0)
        D = dtn(base)
        for hname in ("1", "cos", "sin2"):
            h = parse_h(hname, base.theta)
            fd = fd_normal_derivative_variation(PerturbationFamily(chart, h, 1e-3), 2.0)
            an = shape.normal_derivative_variation(sol, shape.VariationField.from_h(phantom, h), D)
            worst = max(worst, np.max(np.abs(an - fd.value)))
            if name == "disk" and hname == "1":
                disk_one = np.max(np.abs(an + 1.0))
    acceptance(4, "normal-derivative variation vs FD oracle", worst <= 1e-4 and disk_one <= 1e-6,
               f"max err {worst:.2e} (tol 1e-4), disk h=1 vs -1 err {disk_one:.2e} (tol 1e-6)",
               time.perf_counter() - t0, 120)


def test_criterion_05_coefficient_adjudication(acceptance):
    t0 = time.perf_counter()
    pts = np.array([[0.3, 0.1], [-0.2, 0.4], [0.5, -0.5]])
    base = circle(128)
    matching = {}
    for fam in (Dilation(), Rotation()):
        fa, _ = fd_coefficient_variation(fam, pts, 1e-3)
        vf = shape.VariationField.from_family(fam, base)
        matching[repr(fam)] = [v for v in shape.COEFFICIENT_VARIANTS
                               if np.max(np.abs(shape.coefficient_variation(vf, v).a_dot(pts) - fa.value)) <= 1e-6]
    unique = {v[0] for v in matching.values() if len(v) == 1}
    adjudicated = len(unique) == 1 and all(len(v) == 1 for v in matching.values())
    recorded = adjudicated and unique == {shape.CERTIFIED_COEFFICIENT_VARIANT}

    # solution variation at 10 interior probes on the disk graph family
    phantom = build_phantom(base, 0.0)
    chart = FlowChart(phantom)
    sol = solve_dirichlet(base, 2.0, 0.0)
    probes = _probes(base, 10)
    sol_err = 0.0
    for hname in ("1", "cos", "sin2"):
        h = parse_h(hname, base.theta)
        fds = fd_solution_variation(PerturbationFamily(chart, h, 1e-3), 2.0, probes)
        an = shape.solution_variation(sol, shape.VariationField.from_extension(chart, h))(probes)
        sol_err = max(sol_err, np.max(np.abs(an - fds.value)))
    fam = Dilation()
    fds = fd_solution_variation(AmbientFamily(fam, base, 1e-3), 2.0, probes)
    an = shape.solution_variation(sol, shape.VariationField.from_family(fam, base))(probes)
    sol_err = max(sol_err, np.max(np.abs(an - fds.value)))
    acceptance(5, "coefficient variant adjudication and solution variation",
               recorded and probes.shape[0] == 10 and sol_err <= 1e-4,
               f"matching variants {matching}, library variant {shape.CERTIFIED_COEFFICIENT_VARIANT}, "
               f"solution variation err {sol_err:.2e} (tol 1e-4)",
               time.perf_counter() - t0, 60)


def test_criterion_06_normal_variation(acceptance):
    t0 = time.perf_counter()
    base = circle(128)
    worst, trans = 0.0, 0.0
    for delta in (0.0, 0.02):
        phantom = build_phantom(base, delta)
        chart = FlowChart(phantom)
        for hname in ("1", "cos"):
            h = parse_h(hname, base.theta)
            fd = fd_normal_variation(PerturbationFamily(chart, h, 1e-3))
            worst = max(worst, np.max(np.abs(shape.normal_variation(phantom, h) - fd.value)))
            if delta == 0.0:
                trans = max(trans, np.max(np.abs(shape.transversality_variation(phantom, h))))
    acceptance(6, "normal variation vs FD normals on unit circle", worst <= 1e-6 and trans <= 1e-10,
               f"max err {worst:.2e} (tol 1e-6), transversality variation at delta=0 {trans:.2e} (tol 1e-10)",
               time.perf_counter() - t0, 30)


def test_criterion_07_linearized_hs_spectrum(acceptance):
    t0 = time.perf_counter()
    base = circle(128)
    op = assemble_linearized_hs(base, 2.0, build_phantom(base, 0.0))
    th = base.theta
    err = 0.0
    for k in range(0, 9):
        for g in ((np.cos(k * th), np.sin(k * th)) if k else (np.ones_like(th),)):
            err = max(err, np.max(np.abs(op.matrix @ g - (1 - k) * g)))
    spec = spectrum(op)
    # the projected Nyquist mode contributes one extra zero eigenvalue
    eig_err = max(np.min(np.abs(spec.values - (1 - k))) for k in range(0, 9))
    acceptance(7, "linearized Hele-Shaw spectrum 1-|k| on unit disk N=128",
               max(err, eig_err) <= 1e-6 and spec.count_above == 1,
               f"mode action err {err:.2e}, eigenvalue err {eig_err:.2e} (tol 1e-6), "
               f"{spec.count_above} eigenvalue above 0.5",
               time.perf_counter() - t0, 30)


def test_criterion_08_nonlinear_consistency(acceptance):
    t0 = time.perf_counter()
    base = circle(128)
    chart = FlowChart(build_phantom(base, 0.0))
    th = base.theta
    T = 0.1
    linear = np.exp((1 - 2) * T)
    eps = np.array([1e-2, 5e-3, 2.5e-3])
    errs = []
    for e in eps:
        traj = evolve_nonlinear_hs(chart, e * np.cos(2 * th), 2.0, T, 0.01)
        errs.append(abs(mode_amplitude(traj.final.graph.rho, th, 2) / e - linear))
    errs = np.array(errs)
    orders = np.log(errs[:-1] / errs[1:]) / np.log(eps[:-1] / eps[1:])
    radial = evolve_nonlinear_hs(chart, np.zeros_like(th), 2.0, 0.2, 0.01)
    radius = np.linalg.norm(radial.final.curve.points, axis=1)
    radial_err = np.max(np.abs(radius - np.exp(0.2)))
    ok = np.all(np.diff(errs) < 0) and np.all(orders >= 0.9) and radial_err <= 1e-3
    acceptance(8, "nonlinear front vs linearized mode rate, radial front",
               ok, f"errors {', '.join(f'{x:.2e}' for x in errs)}, observed orders "
                   f"{', '.join(f'{o:.2f}' for o in orders)} (need >= 0.9), radial err {radial_err:.2e} (tol 1e-3)",
               time.perf_counter() - t0, 180)


def test_criterion_09_area_balance(acceptance):
    t0 = time.perf_counter()
    worst = 0.0
    for base in (circle(128), ellipse(128, 2.0, 1.0)):
        traj = evolve_nonlinear_hs(FlowChart(build_phantom(base, 0.0)), np.zeros(base.n), 2.0, 0.1, 0.01)
        bal = area_balance(traj)
        worst = max(worst, bal["rate_error"], bal["increment_error"])
    acceptance(9, "Hele-Shaw area growth vs source integral on [0, 0.1]", worst <= 1e-4,
               f"max relative err {worst:.2e} (tol 1e-4)", time.perf_counter() - t0, 60)


def test_criterion_10_linearized_stefan(acceptance):
    t0 = time.perf_counter()
    co = stefan_coefficients(2.0)
    T = 0.5
    change = 0.0
    for k in range(4):
        coarse = evolve_linearized_stefan([StefanModeState.initial(k, 1.0, 200, co)], 2.0, T, 2e-3, co)[0]
        fine = evolve_linearized_stefan([StefanModeState.initial(k, 1.0, 400, co)], 2.0, T, 1e-3, co)[0]
        change = max(change, abs(coarse.h[-1] - fine.h[-1]))
    M = 200
    times = np.array([2.9, 3.0])
    tr = evolve_linearized_stefan([StefanModeState.initial(0, 1e-3, M, co)], 2.0, 3.0, 1e-3, co, times=times)[0]
    rate = np.log(tr.h[-1] / tr.h[-2]) / (times[1] - times[0])
    lam = stefan_leading_eigenvalue(0, co, 2 * M)
    rate_err = abs(rate - lam.real)
    acceptance(10, "linearized Stefan refinement and k=0 rate",
               change <= 1e-4 and rate_err <= 1e-3 and abs(lam.imag) < 1e-12,
               f"refinement change {change:.2e} (tol 1e-4), rate {rate:.6f} vs dense eigen {lam.real:.6f} "
               f"err {rate_err:.2e} (tol 1e-3)", time.perf_counter() - t0, 60)


def _digest(directory):
    out = {}
    for root, _, files in os.walk(directory):
        for name in sorted(files):
            path = os.path.join(root, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, directory)] = hashlib.sha256(fh.read()).hexdigest()
    return out


def test_criterion_11_determinism(acceptance, tmp_path):
    t0 = time.perf_counter()
    runs = {
        "oracle": ["oracle", "--curve", "disk", "--f", "const:2", "--h", "cos:1", "--n", "64"],
        "hs-linear": ["hs-linear", "--curve", "disk", "--f", "const:2", "--delta", "0", "--T", "0.2"],
    }
    same, codes, nfiles = True, [], 0
    for name, args in runs.items():
        out = tmp_path / name
        digests = []
        for _ in range(2):
            shutil.rmtree(out, ignore_errors=True)
            codes.append(cli.main(args + ["--out", str(out)]))
            digests.append(_digest(out))
        nfiles += len(digests[0])
        same = same and digests[0] == digests[1] and len(digests[0]) > 0
    acceptance(11, "repeated oracle and hs-linear runs are byte-identical", same and codes == [0, 0, 0, 0],
               f"{nfiles} files compared, exit codes {codes}", time.perf_counter() - t0, 600)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
