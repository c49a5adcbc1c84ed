"""SVG scatter plots with covariance ellipses, and plain-text ELBO diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .trace import ElboTrace

PALETTE = ("#1170AA", "#55AD89", "#EF6F6A", "#D3A333", "#5FEFE8", "#11F444")


def chi2_2dof_quantile(level: float) -> float:
    """Quantile of the chi-square distribution with 2 degrees of freedom."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    return -2.0 * math.log1p(-level)


@dataclass(frozen=True)
class EllipseSpec:
    center: np.ndarray
    cov: np.ndarray
    level: float = 0.95
    points: int = 100

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(2)
        cov = np.asarray(self.cov, dtype=float).reshape(2, 2)
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if self.points < 3:
            raise ValueError("an ellipse polygon needs at least 3 points")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "cov", cov)


def ellipse_points(spec: EllipseSpec) -> np.ndarray:
    """Vertices ``center + sqrt(q) L [cos t, sin t]`` of the ``level`` contour,
    with ``L`` the Cholesky factor of the covariance."""
    cov = spec.cov
    if not np.allclose(cov, cov.T):
        raise ValueError("covariance must be symmetric")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("covariance must be positive definite") from None
    t = 2 * np.pi * np.arange(spec.points) / spec.points
    circle = np.column_stack([np.cos(t), np.sin(t)])
    return spec.center + math.sqrt(chi2_2dof_quantile(spec.level)) * circle @ chol.T


@dataclass(frozen=True)
class Frame:
    """Linear map from data coordinates to SVG pixels (y axis flipped)."""

    xlim: tuple[float, float]
    ylim: tuple[float, float]
    width: int = 480
    height: int = 480
    margin: int = 48

    def to_px(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        sx = (self.width - 2 * self.margin) / (self.xlim[1] - self.xlim[0])
        sy = (self.height - 2 * self.margin) / (self.ylim[1] - self.ylim[0])
        px = self.margin + (pts[:, 0] - self.xlim[0]) * sx
        py = self.height - self.margin - (pts[:, 1] - self.ylim[0]) * sy
        return np.column_stack([px, py])

    def from_px(self, px) -> np.ndarray:
        px = np.atleast_2d(np.asarray(px, dtype=float))
        sx = (self.width - 2 * self.margin) / (self.xlim[1] - self.xlim[0])
        sy = (self.height - 2 * self.margin) / (self.ylim[1] - self.ylim[0])
        x = self.xlim[0] + (px[:, 0] - self.margin) / sx
        y = self.ylim[0] + (self.height - self.margin - px[:, 1]) / sy
        return np.column_stack([x, y])


def _limits(values: np.ndarray) -> tuple[float, float]:
    if values.size == 0:
        return 0.0, 1.0
    lo, hi = float(values.min()), float(values.max())
    pad = 0.05 * (hi - lo) if hi > lo else 0.5
    return lo - pad, hi + pad


def plot_frame(data, means=None, covs=None, level: float = 0.95, width: int = 480, height: int = 480) -> Frame:
    pts = [np.asarray(data, dtype=float).reshape(-1, 2)]
    if means is not None:
        means = np.asarray(means, dtype=float).reshape(-1, 2)
        pts.append(means)
        if covs is not None:
            for mu, cov in zip(means, np.asarray(covs, dtype=float).reshape(-1, 2, 2)):
                pts.append(ellipse_points(EllipseSpec(mu, cov, level)))
    allpts = np.vstack(pts)
    return Frame(_limits(allpts[:, 0]), _limits(allpts[:, 1]), width, height)


def _f(v: float) -> str:
    return f"{v:.3f}"


def render_scatter_svg(data, labels, means=None, covs=None, *, level: float = 0.95,
                       axis_labels: tuple[str, str] = ("x", "y"), title: str | None = None,
                       width: int = 480, height: int = 480) -> str:
    """SVG document: points coloured by label, component means as black
    crossed squares, ``level`` covariance ellipses as translucent polygons."""
    data = np.asarray(data, dtype=float).reshape(-1, 2)
    labels = np.asarray(labels, dtype=int).reshape(-1)
    if labels.size != data.shape[0]:
        raise ValueError("labels and data lengths differ")
    means_arr = None if means is None else np.asarray(means, dtype=float).reshape(-1, 2)
    covs_arr = None if covs is None else np.asarray(covs, dtype=float).reshape(-1, 2, 2)
    if means_arr is not None and covs_arr is not None and len(covs_arr) != len(means_arr):
        raise ValueError("need one covariance per mean")
    frame = plot_frame(data, means_arr, covs_arr, level, width, height)
    m = frame.margin

    out = ['<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="#FFFFFF"/>']
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="{m / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="13">{_escape(title)}</text>')
    out.append(f'<g id="axes" stroke="#444444" stroke-width="1" fill="none">'
               f'<rect x="{m}" y="{m}" width="{width - 2 * m}" height="{height - 2 * m}"/></g>')
    out.append('<g id="ticks" font-family="sans-serif" font-size="10" fill="#444444">')
    for i in range(5):
        fx = frame.xlim[0] + i * (frame.xlim[1] - frame.xlim[0]) / 4
        fy = frame.ylim[0] + i * (frame.ylim[1] - frame.ylim[0]) / 4
        px = frame.to_px([[fx, frame.ylim[0]]])[0]
        py = frame.to_px([[frame.xlim[0], fy]])[0]
        out.append(f'<text x="{_f(px[0])}" y="{_f(height - m + 14)}" text-anchor="middle">{fx:.3g}</text>')
        out.append(f'<text x="{_f(m - 4)}" y="{_f(py[1] + 3)}" text-anchor="end">{fy:.3g}</text>')
    out.append('</g>')
    out.append(f'<text x="{width / 2:.1f}" y="{height - 8}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="12">{_escape(axis_labels[0])}</text>')
    out.append(f'<text x="12" y="{height / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 12 {height / 2:.1f})">{_escape(axis_labels[1])}</text>')

    if means_arr is not None and covs_arr is not None:
        out.append('<g id="ellipses" fill-opacity="0.25" stroke="none">')
        for k, (mu, cov) in enumerate(zip(means_arr, covs_arr)):
            poly = frame.to_px(ellipse_points(EllipseSpec(mu, cov, level)))
            pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in poly)
            out.append(f'<polygon class="ellipse" data-component="{k}" fill="{PALETTE[k % len(PALETTE)]}" '
                       f'points="{pts}"/>')
        out.append('</g>')

    out.append('<g id="points" fill-opacity="0.8">')
    for (a, b), lab in zip(frame.to_px(data) if data.size else [], labels):
        out.append(f'<circle cx="{_f(a)}" cy="{_f(b)}" r="2" fill="{PALETTE[lab % len(PALETTE)]}"/>')
    out.append('</g>')

    if means_arr is not None:
        out.append('<g id="means" stroke="#000000" stroke-width="1.2" fill="none">')
        for k, (a, b) in enumerate(frame.to_px(means_arr)):
            s = 4.0
            out.append(f'<g class="mean" data-component="{k}">'
                       f'<rect x="{_f(a - s)}" y="{_f(b - s)}" width="{_f(2 * s)}" height="{_f(2 * s)}"/>'
                       f'<path d="M{_f(a - s)} {_f(b - s)}L{_f(a + s)} {_f(b + s)}'
                       f'M{_f(a - s)} {_f(b + s)}L{_f(a + s)} {_f(b - s)}"/></g>')
        out.append('</g>')
    out.append('</svg>')
    return "\n".join(out) + "\n"


def _escape(text: str) -> str:
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def emit_scatter_svg(data, labels, means, covs, path, **kwargs) -> Frame:
    """Write :func:`render_scatter_svg` output to ``path``; returns the pixel frame."""
    data = np.asarray(data, dtype=float)
    if data.size and (data.ndim != 2 or data.shape[1] != 2):
        raise ValueError("scatter plots need exactly two data columns")
    Path(path).write_text(render_scatter_svg(data, labels, means, covs, **kwargs))
    means_arr = None if means is None else np.asarray(means, dtype=float)
    return plot_frame(data, means_arr, covs, kwargs.get("level", 0.95),
                      kwargs.get("width", 480), kwargs.get("height", 480))


def format_diagnostics(trace: ElboTrace) -> str:
    lines = []
    for i, value in enumerate(trace.values):
        delta = "nan" if i == 0 else format(trace.deltas[i - 1], ".17g")
        lines.append(f"{i}\t{value:.17g}\t{delta}")
    lines.append(f"stopped_because\t{trace.stopped_because.value}")
    return "\n".join(lines) + "\n"


def write_diagnostics(trace: ElboTrace, path) -> None:
    """One ``index<TAB>elbo<TAB>delta`` line per iteration, then the stop reason."""
    Path(path).write_text(format_diagnostics(trace))
