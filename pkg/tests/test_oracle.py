import json

import numpy as np
import pytest

from phantomshape import shape
from phantomshape.bvp import solve_dirichlet
from phantomshape.curves import circle
from phantomshape.families import Dilation
from phantomshape.oracle import (AmbientFamily, PerturbationFamily, discrepancy_report, fd_normal_derivative_variation,
                                 fd_normal_variation, fd_solution_variation, fd_transversality_variation, parse_h,
                                 richardson)
from phantomshape.phantom import FlowChart, build_phantom
from phantomshape.spectral import PeriodicInterpolant


@pytest.fixture(scope="module")
def disk_chart():
    return FlowChart(build_phantom(circle(128), 0.0))


def test_richardson_removes_second_order_term():
    res = richardson(lambda s: np.array([2.0 + 3 * s**2]), 0.1)
    assert abs(res.value[0] - 2.0) < 1e-14
    assert res.error > 0


def test_fd_normal_derivative_disk(disk_chart):
    th = disk_chart.base.theta
    fd = fd_normal_derivative_variation(PerturbationFamily(disk_chart, np.ones(128)), 2.0)
    assert np.max(np.abs(fd.value + 1)) < 1e-6 and fd.error < 1e-6
    fd0 = fd_normal_derivative_variation(PerturbationFamily(disk_chart, np.zeros(128)), 2.0)
    assert np.max(np.abs(fd0.value)) < 1e-12


def test_fd_normal_derivative_step_halving(disk_chart):
    h = np.cos(disk_chart.base.theta)
    a = fd_normal_derivative_variation(PerturbationFamily(disk_chart, h, 1e-3), 2.0).value
    b = fd_normal_derivative_variation(PerturbationFamily(disk_chart, h, 5e-4), 2.0).value
    assert np.max(np.abs(a - b)) < 1e-7


def test_fd_solution_variation_center_and_zero(disk_chart):
    probes = np.array([[0.0, 0.0], [0.1, -0.2]])
    # u_s at the fixed centre is (1 + s)^2 / 2
    fd = fd_solution_variation(PerturbationFamily(disk_chart, np.ones(128)), 2.0, probes)
    assert abs(fd.value[0] - 1) < 1e-7
    fd0 = fd_solution_variation(PerturbationFamily(disk_chart, np.zeros(128)), 2.0, probes)
    assert np.max(np.abs(fd0.value)) < 1e-12
    half = fd_solution_variation(PerturbationFamily(disk_chart, np.ones(128), 5e-4), 2.0, probes)
    assert np.max(np.abs(fd.value - half.value)) < 1e-7


def test_fd_normal_variation(disk_chart):
    base = disk_chart.base
    th = base.theta
    fd = fd_normal_variation(PerturbationFamily(disk_chart, np.cos(th))).value
    assert np.allclose(fd, np.sin(th)[:, None] * base.tangent, atol=1e-8)
    assert np.max(np.abs(np.sum(fd * base.normal, axis=1))) < 1e-8
    fdc = fd_normal_variation(PerturbationFamily(disk_chart, np.full(128, 0.5))).value
    assert np.max(np.abs(fdc)) < 1e-10


def test_fd_transversality_at_delta_zero(disk_chart):
    fd = fd_transversality_variation(PerturbationFamily(disk_chart, np.cos(disk_chart.base.theta)))
    assert np.max(np.abs(fd.value)) < 1e-8


def test_ambient_family_matches_dilation(disk_chart):
    base = disk_chart.base
    fd = fd_normal_derivative_variation(AmbientFamily(Dilation(), base), 2.0)
    assert np.allclose(fd.value, -1, atol=1e-6)


def test_reparametrization_insensitivity(disk_chart):
    base = disk_chart.base
    th = base.theta
    h = np.cos(2 * th) + 0.5 * np.sin(th)
    psi = lambda t: t + 0.2 * np.sin(t)
    plain = fd_normal_derivative_variation(PerturbationFamily(disk_chart, h), 2.0).value
    rep = fd_normal_derivative_variation(PerturbationFamily(disk_chart, h, reparam=psi), 2.0).value
    assert np.max(np.abs(rep - PeriodicInterpolant(plain)(psi(th)))) < 1e-6


def test_oracle_order(disk_chart):
    # central differences: quotient error shrinks by ~4 per halving
    h = np.cos(3 * disk_chart.base.theta)
    r = fd_normal_derivative_variation(PerturbationFamily(disk_chart, h, 4e-2), 2.0)
    exact = fd_normal_derivative_variation(PerturbationFamily(disk_chart, h, 1e-3), 2.0).value
    e1, e2 = np.max(np.abs(r.coarse - exact)), np.max(np.abs(r.fine - exact))
    assert np.log2(e1 / e2) >= 1.8


def test_parse_h():
    th = np.linspace(0, 1, 5)
    assert np.allclose(parse_h("1", th), 1) and np.allclose(parse_h("cos:2", th), np.cos(2 * th))
    assert np.allclose(parse_h("sin2", th), np.sin(2 * th)) and np.allclose(parse_h("const:3", th), 3)
    with pytest.raises(ValueError):
        parse_h("tan", th)


@pytest.fixture(scope="module")
def disk_report():
    return discrepancy_report({"disk": circle(64)}, f=2.0, hs=("1", "cos"))


def test_report_certified_pass(disk_report):
    assert disk_report.passed
    d = disk_report.as_dict()
    assert d["certified"]["coefficient_variation_a"] == "product-rule"
    assert d["certified"]["normal_derivative_variation"] == "corrected"
    # on a circle the curvature-only and full identities coincide, so neither is singled out
    assert d["certified"]["second_normal_identity"] is None
    sni = {r.variant: r.passed for r in disk_report.rows if r.formula == "second_normal_identity"}
    assert sni == {"printed": False, "curvature": True, "full": True}


def test_report_family_rows(disk_report):
    rows = [r for r in disk_report.rows if r.formula == "coefficient_variation_a"]
    by = {(r.case, r.variant): r.passed for r in rows}
    assert by[("Rotation()", "product-rule")] and not by[("Rotation()", "printed")]
    assert by[("Translation([1.0, 0.0])", "product-rule")] and by[("Translation([1.0, 0.0])", "printed")]
    disk_one = [r for r in disk_report.rows if r.formula == "normal_derivative_variation"
                and r.case == "disk h=1" and r.variant == "corrected"]
    assert disk_one and disk_one[0].passed


def test_report_serialization(disk_report):
    d = json.loads(disk_report.to_json())
    assert d["pass"] is True and len(d["rows"]) == len(disk_report.rows)
    assert "FAIL" in disk_report.to_text() and "pass" in disk_report.to_text()
    assert all(not r.passed for r in disk_report.discrepancies)



def test_report_ellipse_delta_zero_ties():
    from phantomshape.curves import ellipse

    rep = discrepancy_report({"ellipse": ellipse(128, 2.0, 1.0)}, f=2.0, hs=("cos",), families=False)
    assert rep.passed
    # at delta = 0 the curvature-only and full identities agree; the printed one does not
    rows = {r.variant: r.passed for r in rep.rows if r.formula == "second_normal_identity"}
    assert rows == {"printed": False, "curvature": True, "full": True}
