import numpy as np
import pytest

from phantomshape.curves import circle, ellipse, hausdorff_c0
from phantomshape.graph import (GraphError, RhoGraph, curve_from_rho, identify_tangent, read_rho_csv,
                                recover_scalar, rho_from_curve, rho_from_json, rho_to_json, tangent_basis_angle,
                                tangent_vectors, write_rho_csv)
from phantomshape.phantom import FlowChart, build_phantom


@pytest.fixture(scope="module")
def disk_chart():
    return FlowChart(build_phantom(circle(128), 0.0))


@pytest.fixture(scope="module")
def ellipse_chart():
    return FlowChart(build_phantom(ellipse(128, 2.0, 1.0), 0.02))


def test_zero_graph_is_base(disk_chart):
    c = curve_from_rho(RhoGraph(disk_chart, np.zeros(128)))
    assert np.allclose(c.points, disk_chart.base.points, atol=1e-15)


def test_constant_graph_is_scaled_circle(disk_chart):
    c = curve_from_rho(RhoGraph(disk_chart, np.full(128, 0.2)))
    assert np.allclose(np.linalg.norm(c.points, axis=1), 1.2, atol=1e-12)


def test_radial_graph_formula(disk_chart):
    th = disk_chart.base.theta
    c = curve_from_rho(RhoGraph(disk_chart, 0.1 * np.cos(th)))
    exact = (1 + 0.1 * np.cos(th))[:, None] * np.column_stack([np.cos(th), np.sin(th)])
    assert np.allclose(c.points, exact, atol=1e-12)


def test_rho_from_curve_examples(disk_chart):
    assert np.max(np.abs(rho_from_curve(disk_chart, disk_chart.base).rho)) < 1e-13
    rec = rho_from_curve(disk_chart, circle(128, 1.15))
    assert np.allclose(rec.rho, 0.15, atol=1e-12)


@pytest.mark.parametrize("which", ["disk", "ellipse"])
def test_roundtrip_sin2(which, disk_chart, ellipse_chart):
    chart = disk_chart if which == "disk" else ellipse_chart
    rho = 0.05 * chart.r0 / 0.5 * np.sin(2 * chart.base.theta)
    rec = rho_from_curve(chart, curve_from_rho(RhoGraph(chart, rho)))
    assert np.max(np.abs(rec.rho - rho)) < 1e-8


def test_rho_from_curve_resampled_target(ellipse_chart):
    # the target's own parametrization is irrelevant: only the point set matters
    rho = 0.02 * np.cos(3 * ellipse_chart.base.theta)
    target = curve_from_rho(RhoGraph(ellipse_chart, rho)).resampled(256)
    rec = rho_from_curve(ellipse_chart, target)
    assert np.max(np.abs(rec.rho - rho)) < 1e-8


def test_smallness_checks(disk_chart):
    with pytest.raises(GraphError):
        RhoGraph(disk_chart, np.full(128, 0.6))
    with pytest.raises(GraphError):
        RhoGraph(disk_chart, 0.1 * np.cos(8 * disk_chart.base.theta))
    with pytest.raises(GraphError):
        RhoGraph(disk_chart, np.zeros(64))


def test_tangent_vectors(disk_chart):
    th = disk_chart.base.theta
    g0 = RhoGraph(disk_chart, np.zeros(128))
    assert np.allclose(tangent_vectors(g0), disk_chart.base.d1, atol=1e-12)
    eps = 0.05
    tv = tangent_vectors(RhoGraph(disk_chart, np.full(128, eps)))
    assert np.allclose(tv, (1 + eps) * np.column_stack([-np.sin(th), np.cos(th)]), atol=1e-12)
    rho = 0.1 * np.cos(th)
    tv = tangent_vectors(RhoGraph(disk_chart, rho))
    r, dr = 1 + rho, -0.1 * np.sin(th)
    exact = np.column_stack([dr * np.cos(th) - r * np.sin(th), dr * np.sin(th) + r * np.cos(th)])
    assert np.allclose(tv, exact, atol=1e-12)


def test_tangent_vectors_match_curve_derivative(ellipse_chart):
    g = RhoGraph(ellipse_chart, 0.03 * np.sin(2 * ellipse_chart.base.theta))
    assert np.allclose(tangent_vectors(g), curve_from_rho(g).d1, atol=1e-8)
    assert tangent_basis_angle(g) > 45


def test_identify_and_recover(ellipse_chart):
    field = ellipse_chart.field
    th = ellipse_chart.base.theta
    assert not identify_tangent(field, np.zeros(128)).any()
    disk_field = build_phantom(circle(128), 0.0)
    assert np.allclose(identify_tangent(disk_field, np.ones(128)), disk_field.base.normal, atol=1e-15)
    h = np.cos(th) + 0.3 * np.sin(5 * th)
    assert np.max(np.abs(recover_scalar(field, identify_tangent(field, h)) - h)) < 1e-15


def test_io_roundtrip(tmp_path, ellipse_chart):
    g = RhoGraph(ellipse_chart, 0.01 * np.cos(ellipse_chart.base.theta))
    p = tmp_path / "rho.csv"
    write_rho_csv(g, p)
    assert np.array_equal(read_rho_csv(ellipse_chart, p).rho, g.rho)
    assert np.array_equal(rho_from_json(ellipse_chart, rho_to_json(g)).rho, g.rho)


def test_small_rho_gives_nearby_curve(ellipse_chart):
    g = RhoGraph(ellipse_chart, np.full(128, 0.01))
    assert hausdorff_c0((curve_from_rho(g), ellipse_chart.base)) < 0.011
