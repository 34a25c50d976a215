"""Dependency-free SVG figures: grouped boxplots and a SHAP beeswarm."""

from __future__ import annotations

from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .stats import significance_stars

PANEL_W, PANEL_H = 180, 220
PLOT_TOP, PLOT_BOTTOM = 40, 190
GROUP_COLOURS = ("#4c72b0", "#dd8452")


@dataclass(frozen=True)
class FiveNumber:
    whisker_low: float
    q1: float
    median: float
    q3: float
    whisker_high: float


def five_number_summary(values) -> FiveNumber:
    """Quartiles (linear interpolation) and Tukey whiskers at 1.5 IQR, clipped to the data."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo = v[v >= q1 - 1.5 * iqr].min()
    hi = v[v <= q3 + 1.5 * iqr].max()
    return FiveNumber(float(lo), float(q1), float(med), float(q3), float(hi))


class LinearScale:
    def __init__(self, domain, pixel_range):
        self.d0, self.d1 = map(float, domain)
        if self.d1 == self.d0:
            self.d0, self.d1 = self.d0 - 0.5, self.d1 + 0.5
        self.p0, self.p1 = map(float, pixel_range)

    def __call__(self, v):
        return self.p0 + (float(v) - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)

    def invert(self, p):
        return self.d0 + (float(p) - self.p0) / (self.p1 - self.p0) * (self.d1 - self.d0)


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def _box(parts, fn: FiveNumber, scale: LinearScale, cx: float, colour: str, group: str):
    half = 18
    y = {k: scale(getattr(fn, k)) for k in ("whisker_low", "q1", "median", "q3", "whisker_high")}
    parts.append(f'<g class="box-group" data-group="{escape(group)}">')
    parts.append(f'<line class="whisker" x1="{_fmt(cx)}" x2="{_fmt(cx)}" y1="{_fmt(y["whisker_low"])}" y2="{_fmt(y["q1"])}" stroke="black"/>')
    parts.append(f'<line class="whisker" x1="{_fmt(cx)}" x2="{_fmt(cx)}" y1="{_fmt(y["q3"])}" y2="{_fmt(y["whisker_high"])}" stroke="black"/>')
    parts.append(f'<rect class="box" x="{_fmt(cx - half)}" y="{_fmt(y["q3"])}" width="{_fmt(2 * half)}" height="{_fmt(y["q1"] - y["q3"])}" fill="{colour}" stroke="black"/>')
    parts.append(f'<line class="median" x1="{_fmt(cx - half)}" x2="{_fmt(cx + half)}" y1="{_fmt(y["median"])}" y2="{_fmt(y["median"])}" stroke="black" stroke-width="2"/>')
    parts.append("</g>")


def boxplot_svg(panels, group_names=("healthy", "cancer")) -> str:
    """``panels`` is a list of ``(feature_name, p_value, [values_group0, values_group1])``."""
    n = max(1, len(panels))
    cols = min(n, 5)
    rows = -(-n // cols)
    width, height = cols * PANEL_W, rows * PANEL_H + 30
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">']
    parts.append('<rect width="100%" height="100%" fill="white"/>')
    legend = " ".join(f'<tspan fill="{c}">{escape(g)}</tspan>' for g, c in zip(group_names, GROUP_COLOURS))
    parts.append(f'<text x="8" y="{height - 10}" font-size="12" font-family="sans-serif">{legend}</text>')
    if not panels:
        parts.append('<text x="10" y="30" font-size="13" font-family="sans-serif">no significant features</text>')
    for k, (name, p, groups) in enumerate(panels):
        ox, oy = (k % cols) * PANEL_W, (k // cols) * PANEL_H
        allv = np.concatenate([np.asarray(g, dtype=np.float64) for g in groups])
        scale = LinearScale((allv.min(), allv.max()), (oy + PLOT_BOTTOM, oy + PLOT_TOP))
        stars = significance_stars(p)
        parts.append(f'<g class="panel" data-feature="{escape(name)}" data-ymin="{float(allv.min())!r}" data-ymax="{float(allv.max())!r}" '
                     f'data-pixel-bottom="{oy + PLOT_BOTTOM}" data-pixel-top="{oy + PLOT_TOP}">')
        parts.append(f'<text x="{ox + PANEL_W / 2}" y="{oy + 16}" text-anchor="middle" font-size="12" font-family="sans-serif">{escape(name)}</text>')
        parts.append(f'<text class="stars" x="{ox + PANEL_W / 2}" y="{oy + 32}" text-anchor="middle" font-size="14" font-family="sans-serif">{stars}</text>')
        for g, (vals, colour) in enumerate(zip(groups, GROUP_COLOURS)):
            _box(parts, five_number_summary(vals), scale, ox + PANEL_W * (0.32 + 0.36 * g), colour, group_names[g])
        parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _value_colour(t: float) -> str:
    # blue (low) to red (high)
    t = min(max(t, 0.0), 1.0)
    return "#%02x%02x%02x" % (int(30 + 225 * t), int(60 + 20 * (1 - abs(2 * t - 1))), int(255 - 225 * t))


def beeswarm_svg(feature_names, phi, values, order, max_features: int = 20, seed: int = 0) -> str:
    """SHAP summary: one row per feature (most important on top), dots coloured by feature value."""
    phi = np.asarray(phi, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    shown = list(order)[:max_features]
    row_h, left, right = 24, 170, 40
    width = 640
    height = 50 + row_h * len(shown)
    lim = float(np.abs(phi[:, shown]).max()) if phi.size and shown else 1.0
    lim = lim if lim > 0 else 1.0
    xs = LinearScale((-lim, lim), (left, width - right))
    rng = np.random.default_rng(seed)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">']
    parts.append('<rect width="100%" height="100%" fill="white"/>')
    parts.append(f'<line x1="{_fmt(xs(0))}" x2="{_fmt(xs(0))}" y1="10" y2="{height - 30}" stroke="#888"/>')
    parts.append(f'<text x="{_fmt(xs(0))}" y="{height - 10}" text-anchor="middle" font-size="11" font-family="sans-serif">SHAP value (impact on model output)</text>')
    for r, f in enumerate(shown):
        cy = 20 + r * row_h
        parts.append(f'<g class="feature-row" data-feature="{escape(feature_names[f])}">')
        parts.append(f'<text x="{left - 8}" y="{cy + 4}" text-anchor="end" font-size="11" font-family="sans-serif">{escape(feature_names[f])}</text>')
        v = values[:, f]
        span = v.max() - v.min()
        for p, val in zip(phi[:, f], v):
            t = (val - v.min()) / span if span > 0 else 0.5
            jitter = rng.uniform(-row_h * 0.3, row_h * 0.3)
            parts.append(f'<circle cx="{_fmt(xs(p))}" cy="{_fmt(cy + jitter)}" r="3" fill="{_value_colour(t)}" fill-opacity="0.8"/>')
        parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
