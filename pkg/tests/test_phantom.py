import numpy as np
import pytest

from phantomshape.curves import circle, ellipse, star
from phantomshape.phantom import (ChartError, Cutoff, FlowChart, build_phantom, chart_inverse, defect_table,
                                  extend_diffeo, field_derivatives, flow, smooth_step, transversality_defect)


@pytest.fixture(scope="module")
def disk():
    base = circle(128)
    return base, build_phantom(base, 0.0)


def test_smooth_step_and_cutoff():
    t = np.linspace(-0.5, 1.5, 201)
    s = smooth_step(t)
    assert np.all(s[t <= 0] == 1) and np.all(s[t >= 1] == 0)
    eta = Cutoff(0.2, 0.5)
    assert eta(0.1) == 1 and eta(-0.19) == 1 and eta(0.6) == 0
    r = np.linspace(0.21, 0.49, 50)
    h = 1e-6
    assert np.allclose(eta(r, 1), (eta(r + h) - eta(r - h)) / (2 * h), atol=1e-5)


def test_radial_field_on_plateau(disk):
    base, ph = disk
    x = np.array([[1.1, 0.0], [0.0, 0.9], [0.7, 0.7]])
    assert np.allclose(ph(x), x / np.linalg.norm(x, axis=1, keepdims=True), atol=1e-12)


def test_mollified_circle_normal_close():
    base = circle(128)
    ph = build_phantom(base, 0.01)
    assert np.max(np.linalg.norm(ph.on_curve() - base.normal, axis=1)) < 1e-3


def test_field_vanishes_outside_support():
    for base in (circle(128), ellipse(128, 2.0, 1.0)):
        ph = build_phantom(base, 0.02)
        r = 0.76 * ph.r_tilde
        pts = base.points[::8] + r * base.normal[::8]
        assert np.all(ph(pts) == 0)


def test_transversality_defect_examples():
    base = circle(128)
    assert transversality_defect(build_phantom(base, 0.0)) < 1e-14
    assert transversality_defect(build_phantom(base, 0.05)) < 0.05


def test_defects_decrease_with_delta():
    base = star(128, 1.0, 0.2, 5)
    rows = defect_table(base, [0.1, 0.05, 0.025])
    d = [c for _, c in rows]
    assert d[0] > d[1] > d[2] > 0


def test_transversality_positive():
    base = ellipse(128, 2.0, 1.0)
    ph = build_phantom(base, 0.05)
    assert np.min(np.sum(ph.on_curve() * base.normal, axis=1)) > 0


def test_too_large_delta_rejected():
    with pytest.raises((ChartError, ValueError)):
        build_phantom(star(64, 1.0, 0.3, 5), 3.0)


def test_flow_examples(disk):
    base, ph = disk
    chart = FlowChart(ph)
    assert np.allclose(flow(chart, 0, 0.2), [1.2, 0.0], atol=1e-12)
    assert np.array_equal(flow(chart, 5, 0.0), base.points[5])


@pytest.mark.parametrize("delta", [0.0, 0.02])
def test_flow_roundtrip(delta):
    base = ellipse(128, 2.0, 1.0)
    chart = FlowChart(build_phantom(base, delta))
    th = np.linspace(0, 2 * np.pi, 32, endpoint=False)
    r = np.linspace(-0.9, 0.9, 9) * chart.r0
    T, R = np.meshgrid(th, r)
    x = chart.flow(T.ravel(), R.ravel())
    back = chart.flow_point(x, -R.ravel())
    assert np.max(np.linalg.norm(back - chart.base.eval(T.ravel()), axis=1)) < 1e-9
    t2, r2 = chart.inverse(x)
    dth = np.angle(np.exp(1j * (t2 - T.ravel())))
    assert np.max(np.abs(dth)) < 1e-9 and np.max(np.abs(r2 - R.ravel())) < 1e-9


def test_chart_inverse_examples(disk):
    _, ph = disk
    chart = FlowChart(ph)
    y, r = chart_inverse(chart, np.array([1.3, 0.0]))
    assert np.allclose(y, [1, 0], atol=1e-12) and abs(r - 0.3) < 1e-12
    base = chart.base
    _, r = chart_inverse(chart, base.points[::16])
    assert np.max(np.abs(r)) < 1e-12


def test_inverse_jacobian_matches_fd():
    base = ellipse(128, 2.0, 1.0)
    chart = FlowChart(build_phantom(base, 0.02))
    x = chart.flow(np.array([0.3, 2.0]), np.array([0.05, -0.08]))
    th, r, Dc = chart.inverse_with_jacobian(x)
    h = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        tp, rp = chart.inverse(x + e)
        tm, rm = chart.inverse(x - e)
        assert np.allclose(Dc[:, 0, i], np.angle(np.exp(1j * (tp - tm))) / (2 * h), atol=1e-6)
        assert np.allclose(Dc[:, 1, i], (rp - rm) / (2 * h), atol=1e-6)


def test_extend_diffeo_examples(disk):
    base, ph = disk
    chart = FlowChart(ph)
    ident = extend_diffeo(chart, np.zeros(base.n))
    pts = np.array([[1.05, 0.1], [0.3, 0.2], [3.0, 0.0]])
    assert np.allclose(ident(pts), pts, atol=1e-13)
    ext = extend_diffeo(chart, np.full(base.n, 0.1))
    assert np.allclose(ext(np.array([1.0, 0.0])), [1.1, 0.0], atol=1e-12)
    far = np.array([[3.0, 0.0], [0.0, 0.0], [0.1, -0.2]])
    assert np.array_equal(ext(far), far)
    y = ext(pts[:2])
    assert np.allclose(ext.inverse(y), pts[:2], atol=1e-10)


def test_field_derivatives_disk(disk):
    _, ph = disk
    val, jac, hess = field_derivatives(ph, np.array([[1.0, 0.0]]))
    assert np.allclose(val[0], [1, 0], atol=1e-13)
    assert np.allclose(jac[0], np.diag([0.0, 1.0]), atol=1e-10)


@pytest.mark.parametrize("delta", [0.0, 0.02])
def test_field_derivatives_fd(delta):
    base = ellipse(128, 2.0, 1.0)
    ph = build_phantom(base, delta)
    x = base.points[::16] + 0.3 * ph.r_tilde * base.normal[::16]
    # include points in the cutoff transition band
    x = np.vstack([x, base.points[::32] + 0.6 * ph.r_tilde * base.normal[::32]])
    val, jac, hess = field_derivatives(ph, x)
    h = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (ph(x + e) - ph(x - e)) / (2 * h)
        assert np.max(np.abs(jac[:, :, i] - fd)) < 1e-5
        fdj = (field_derivatives(ph, x + e)[1] - field_derivatives(ph, x - e)[1]) / (2 * h)
        assert np.max(np.abs(hess[:, :, :, i] - fdj)) < 1e-3


def test_field_derivatives_zero_outside():
    base = circle(64)
    ph = build_phantom(base, 0.0)
    val, jac, hess = field_derivatives(ph, np.array([[3.0, 0.0], [0.0, 0.0]]))
    assert not val.any() and not jac.any() and not hess.any()
