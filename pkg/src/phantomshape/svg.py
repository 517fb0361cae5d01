"""Deterministic static SVG rendering of curves, trajectories and spectra."""

from __future__ import annotations

from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 800, 600
MARGIN = 60
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


@dataclass(frozen=True)
class Series:
    """One polyline or marker set in data coordinates."""

    x: np.ndarray
    y: np.ndarray
    label: str = ""
    closed: bool = False
    markers: bool = False

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if x.shape != y.shape or x.size == 0:
            raise ValueError("series needs nonempty x and y of equal length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


def _fmt(v):
    return f"{v:.2f}"


def _bounds(series, equal_aspect):
    xs = np.concatenate([s.x for s in series])
    ys = np.concatenate([s.y for s in series])
    x0, x1, y0, y1 = xs.min(), xs.max(), ys.min(), ys.max()
    if x1 - x0 <= 0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 - y0 <= 0:
        y0, y1 = y0 - 1, y1 + 1
    pad_x, pad_y = 0.05 * (x1 - x0), 0.05 * (y1 - y0)
    x0, x1, y0, y1 = x0 - pad_x, x1 + pad_x, y0 - pad_y, y1 + pad_y
    sx = (WIDTH - 2 * MARGIN) / (x1 - x0)
    sy = (HEIGHT - 2 * MARGIN) / (y1 - y0)
    if equal_aspect:
        sx = sy = min(sx, sy)
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)

    def to_px(x, y):
        return WIDTH / 2 + sx * (x - cx), HEIGHT / 2 - sy * (y - cy)

    return to_px, (x0, x1, y0, y1)


def render_svg(series, title="", xlabel="", ylabel="", equal_aspect=False, path=None) -> str:
    """SVG text for the given series; also written to ``path`` when given.

    Output depends only on the input data, so identical input gives identical bytes.
    """
    series = list(series)
    if not series:
        raise ValueError("nothing to render")
    to_px, (x0, x1, y0, y1) = _bounds(series, equal_aspect)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" height="{HEIGHT - 2 * MARGIN}" '
        'fill="none" stroke="#888888" stroke-width="1"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH // 2}" y="{MARGIN // 2}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="16">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{WIDTH // 2}" y="{HEIGHT - 15}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="12">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="15" y="{HEIGHT // 2}" text-anchor="middle" font-family="sans-serif" font-size="12" '
                   f'transform="rotate(-90 15 {HEIGHT // 2})">{escape(ylabel)}</text>')
    for label, (px, py), anchor in (
        (f"{x0:.3g}", (MARGIN, HEIGHT - MARGIN + 15), "start"),
        (f"{x1:.3g}", (WIDTH - MARGIN, HEIGHT - MARGIN + 15), "end"),
        (f"{y0:.3g}", (MARGIN - 5, HEIGHT - MARGIN), "end"),
        (f"{y1:.3g}", (MARGIN - 5, MARGIN + 10), "end"),
    ):
        out.append(f'<text x="{px}" y="{py}" text-anchor="{anchor}" font-family="sans-serif" '
                   f'font-size="10">{escape(label)}</text>')
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        px, py = to_px(s.x, s.y)
        if s.markers:
            for a, b in zip(px, py):
                out.append(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="3" fill="{color}"/>')
        else:
            pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px, py))
            tag = "polygon" if s.closed else "polyline"
            out.append(f'<{tag} points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
    labelled = [(i, s) for i, s in enumerate(series) if s.label]
    for row, (i, s) in enumerate(labelled):
        y = MARGIN + 15 + 16 * row
        color = PALETTE[i % len(PALETTE)]
        x = WIDTH - MARGIN - 140
        out.append(f'<line x1="{x}" y1="{y - 4}" x2="{x + 20}" y2="{y - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{x + 26}" y="{y}" font-family="sans-serif" font-size="11">{escape(s.label)}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    return text


def curves_svg(curves, labels=None, title="", path=None) -> str:
    """Closed polylines for curve snapshots, with a legend when labels are given."""
    labels = labels or [""] * len(curves)
    series = [Series(c.points[:, 0], c.points[:, 1], label=lab, closed=True) for c, lab in zip(curves, labels)]
    return render_svg(series, title=title, xlabel="x", ylabel="y", equal_aspect=True, path=path)


def spectrum_svg(values, title="spectrum", path=None) -> str:
    """One marker per eigenvalue in the complex plane."""
    v = np.asarray(values, dtype=complex)
    return render_svg([Series(v.real, v.imag, markers=True)], title=title, xlabel="Re", ylabel="Im", path=path)
