"""Static SVG figures for single and Monte-Carlo explanations.

Numeric payloads are embedded as ``sl:*`` attributes on each feature group so
the figures can be checked without parsing geometry.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .errors import UsageError

SL_NS = "urn:survlime:figure"
QUANTILES = (0.125, 0.25, 0.5, 0.75, 0.875)

GREY = "#8c8c8c"
REDS = ((0xfc, 0xbb, 0xa1), (0xa5, 0x0f, 0x15))
BLUES = ((0xc6, 0xdb, 0xef), (0x08, 0x45, 0x94))

WIDTH = 640
LABEL_W = 120
ROW_H = 28
TOP = 40
BOTTOM = 36
PAD = 20


@dataclass(frozen=True)
class PlotSpec:
    kind: str = "bar"
    with_colour: bool = True
    output_path: str | None = None
    title: str | None = None

    def __post_init__(self):
        if self.kind not in ("bar", "distribution"):
            raise UsageError(f"plot kind must be 'bar' or 'distribution', got {self.kind!r}")


def _mix(pair, t: float) -> str:
    lo, hi = pair
    rgb = [round(a + (b - a) * t) for a, b in zip(lo, hi)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def colours(values, with_colour: bool = True) -> list[str]:
    """Red shades for positive values, blue for zero or negative, by magnitude."""
    values = np.asarray(values, dtype=np.float64)
    if not with_colour:
        return [GREY] * values.size
    top = np.max(np.abs(values)) if values.size else 0.0
    out = []
    for v in values:
        t = abs(v) / top if top > 0 else 0.0
        out.append(_mix(REDS if v > 0 else BLUES, t))
    return out


def descending_order(values) -> np.ndarray:
    """Indices sorting ``values`` high to low; ties keep input order."""
    return np.argsort(-np.asarray(values, dtype=np.float64), kind="stable")


def _num(x: float) -> str:
    return f"{x:.3f}".rstrip("0").rstrip(".") if np.isfinite(x) else "0"


class _Axis:
    """Affine map from data values to x pixels, always including zero."""

    def __init__(self, lo: float, hi: float):
        lo, hi = min(lo, 0.0), max(hi, 0.0)
        if hi - lo <= 0:
            lo, hi = -1.0, 1.0
        margin = 0.05 * (hi - lo)
        self.lo, self.hi = lo - margin, hi + margin
        self.x0, self.x1 = LABEL_W + PAD, WIDTH - PAD

    def __call__(self, v):
        return self.x0 + (v - self.lo) / (self.hi - self.lo) * (self.x1 - self.x0)

    def ticks(self, count: int = 5):
        return np.linspace(self.lo, self.hi, count)


def _frame(parts, n_rows, axis, title, kind, extra_meta=""):
    height = TOP + n_rows * ROW_H + BOTTOM
    head = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:sl="{SL_NS}" version="1.1" '
        f'width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" '
        f'sl:kind="{kind}"{extra_meta}>',
        f'<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="#ffffff"/>',
    ]
    if title:
        head.append(f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" '
                    f'font-family="sans-serif" font-size="15">{escape(title)}</text>')
    y_axis = TOP + n_rows * ROW_H
    tail = [f'<line x1="{axis.x0:.3f}" y1="{y_axis}" x2="{axis.x1:.3f}" y2="{y_axis}" '
            'stroke="#333333" stroke-width="1"/>']
    for t in axis.ticks():
        x = axis(t)
        tail.append(f'<line x1="{x:.3f}" y1="{y_axis}" x2="{x:.3f}" y2="{y_axis + 4}" '
                    'stroke="#333333" stroke-width="1"/>')
        tail.append(f'<text x="{x:.3f}" y="{y_axis + 16}" text-anchor="middle" '
                    f'font-family="sans-serif" font-size="10">{_num(t)}</text>')
    zero = axis(0.0)
    tail.append(f'<line class="zero-line" x1="{zero:.3f}" y1="{TOP - 6}" x2="{zero:.3f}" '
                f'y2="{y_axis}" stroke="#000000" stroke-width="1"/>')
    return "\n".join(head + parts + tail + ["</svg>", ""])


def _label(name: str, y: float) -> str:
    return (f'<text x="{LABEL_W}" y="{y + 4:.3f}" text-anchor="end" font-family="sans-serif" '
            f'font-size="12">{escape(name)}</text>')


def render_bars(coefficients, feature_names, with_colour=True, title=None) -> str:
    values = np.asarray(coefficients, dtype=np.float64)
    names = list(feature_names) or [f"x{j + 1}" for j in range(values.size)]
    order = descending_order(values)
    axis = _Axis(float(values.min()), float(values.max()))
    fills = colours(values, with_colour)
    zero = axis(0.0)
    parts = []
    for row, j in enumerate(order):
        v = values[j]
        y = TOP + row * ROW_H + ROW_H / 2
        x = axis(v)
        left, width = min(x, zero), abs(x - zero)
        parts.append(f'<g class="feature" sl:feature={quoteattr(names[j])} sl:index="{j}" '
                     f'sl:value="{float(v)!r}">')
        parts.append(_label(names[j], y))
        parts.append(f'<rect x="{left:.3f}" y="{y - ROW_H * 0.35:.3f}" width="{width:.3f}" '
                     f'height="{ROW_H * 0.7:.3f}" fill="{fills[j]}"/>')
        parts.append("</g>")
    return _frame(parts, values.size, axis, title, "bar")


def quantile_table(samples) -> np.ndarray:
    """Rows: features. Columns: the 12.5/25/50/75/87.5 percentiles."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    return np.quantile(samples, QUANTILES, axis=0).T


def render_boxen(samples, feature_names, with_colour=True, title=None) -> str:
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    p = samples.shape[1]
    names = list(feature_names) or [f"x{j + 1}" for j in range(p)]
    q = quantile_table(samples)
    medians = q[:, 2]
    order = descending_order(medians)
    axis = _Axis(float(samples.min()), float(samples.max()))
    fills = colours(medians, with_colour)
    parts = []
    for row, j in enumerate(order):
        y = TOP + row * ROW_H + ROW_H / 2
        q125, q25, q50, q75, q875 = q[j]
        attrs = " ".join(f'sl:{k}="{float(v)!r}"' for k, v in
                         zip(("q125", "q25", "median", "q75", "q875"), q[j]))
        parts.append(f'<g class="feature" sl:feature={quoteattr(names[j])} sl:index="{j}" '
                     f'{attrs} sl:min="{float(samples[:, j].min())!r}" '
                     f'sl:max="{float(samples[:, j].max())!r}" '
                     f'sl:count="{samples.shape[0]}">')
        parts.append(_label(names[j], y))
        for lo, hi, h, opacity in ((q125, q875, 0.4, 0.55), (q25, q75, 0.7, 1.0)):
            x0, x1 = axis(lo), axis(hi)
            parts.append(f'<rect x="{x0:.3f}" y="{y - ROW_H * h / 2:.3f}" '
                         f'width="{x1 - x0:.3f}" height="{ROW_H * h:.3f}" fill="{fills[j]}" '
                         f'fill-opacity="{opacity}" stroke="#333333" stroke-width="0.5"/>')
        xm = axis(q50)
        parts.append(f'<line class="median" x1="{xm:.3f}" y1="{y - ROW_H * 0.35:.3f}" '
                     f'x2="{xm:.3f}" y2="{y + ROW_H * 0.35:.3f}" stroke="#000000" '
                     'stroke-width="1.5"/>')
        for v in samples[:, j]:
            if v < q125 or v > q875:
                parts.append(f'<circle cx="{axis(v):.3f}" cy="{y:.3f}" r="1.5" '
                             'fill="#333333"/>')
        parts.append("</g>")
    return _frame(parts, p, axis, title, "distribution")


def write_atomic(path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from None
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def plot_weights(explanation, spec: PlotSpec | None = None) -> str:
    """Bar chart of one explanation's coefficients, highest first."""
    spec = spec or PlotSpec("bar")
    if spec.kind != "bar":
        raise UsageError("plot_weights needs a PlotSpec of kind 'bar'")
    svg = render_bars(explanation.coefficients, explanation.feature_names,
                      spec.with_colour, spec.title)
    if spec.output_path:
        write_atomic(spec.output_path, svg)
    return svg


def plot_montecarlo_weights(mc, spec: PlotSpec | None = None) -> str:
    """Distribution chart of the per-repetition coefficients, ordered by median."""
    spec = spec or PlotSpec("distribution")
    if spec.kind != "distribution":
        raise UsageError("plot_montecarlo_weights needs a PlotSpec of kind 'distribution'")
    svg = render_boxen(mc.per_repetition, mc.feature_names, spec.with_colour, spec.title)
    if spec.output_path:
        write_atomic(spec.output_path, svg)
    return svg
