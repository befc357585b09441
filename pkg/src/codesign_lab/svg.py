"""Minimal SVG charts: lines, scatter, heatmap, and mass-spring frames.

Output is plain text with fixed number formatting so that identical data
gives identical bytes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
W, H, PAD = 640, 420, 56


def _f(v: float) -> str:
    return f"{v:.3f}"


def _open(title: str, comment: str | None, width=W, height=H) -> list[str]:
    out = ['<?xml version="1.0" encoding="UTF-8"?>']
    if comment:
        out.append("<!--\n" + comment.replace("--", "- -") + "\n-->")
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">')
    out.append(f'<rect width="{width}" height="{height}" fill="white"/>')
    out.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>')
    return out


def _range(values, log=False):
    v = np.asarray([x for x in values if np.isfinite(x) and (not log or x > 0)], dtype=float)
    if log:
        v = np.log10(v)
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


@dataclass(frozen=True)
class Axes:
    x0: float
    x1: float
    y0: float
    y1: float
    logx: bool = False
    width: int = W
    height: int = H

    def px(self, x):
        if self.logx:
            x = math.log10(x)
        return PAD + (x - self.x0) / (self.x1 - self.x0) * (self.width - 2 * PAD)

    def py(self, y):
        return self.height - PAD - (y - self.y0) / (self.y1 - self.y0) * (self.height - 2 * PAD)

    def frame(self, xlabel: str, ylabel: str) -> list[str]:
        w, h = self.width, self.height
        out = [f'<rect x="{PAD}" y="{PAD}" width="{w - 2 * PAD}" height="{h - 2 * PAD}" fill="none" stroke="black"/>']
        for k in range(5):
            fx = self.x0 + (self.x1 - self.x0) * k / 4
            fy = self.y0 + (self.y1 - self.y0) * k / 4
            lx = f"1e{fx:.1f}" if self.logx else f"{fx:.3g}"
            X = PAD + k / 4 * (w - 2 * PAD)
            Y = h - PAD - k / 4 * (h - 2 * PAD)
            out.append(f'<text x="{X:.1f}" y="{h - PAD + 16}" text-anchor="middle" font-family="sans-serif" font-size="10">{lx}</text>')
            out.append(f'<text x="{PAD - 4}" y="{Y + 3:.1f}" text-anchor="end" font-family="sans-serif" font-size="10">{fy:.3g}</text>')
        out.append(f'<text x="{w / 2:.1f}" y="{h - 12}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(xlabel)}</text>')
        out.append(f'<text x="14" y="{h / 2:.1f}" transform="rotate(-90 14 {h / 2:.1f})" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(ylabel)}</text>')
        return out


def _legend(labels, colors) -> list[str]:
    out = []
    for k, (lab, col) in enumerate(zip(labels, colors)):
        y = PAD + 14 + 14 * k
        out.append(f'<rect x="{W - PAD - 120}" y="{y - 8}" width="10" height="10" fill="{col}"/>')
        out.append(f'<text x="{W - PAD - 106}" y="{y + 1}" font-family="sans-serif" font-size="10">{escape(str(lab))}</text>')
    return out


def line_chart(series: dict, title: str, xlabel: str, ylabel: str, logx: bool = False, comment: str | None = None) -> str:
    """``series`` maps label -> (x values, y values)."""
    xs = [x for xv, _ in series.values() for x in xv]
    ys = [y for _, yv in series.values() for y in yv]
    ax = Axes(*_range(xs, logx), *_range(ys), logx=logx)
    out = _open(title, comment) + ax.frame(xlabel, ylabel)
    colors = [PALETTE[k % len(PALETTE)] for k in range(len(series))]
    for (label, (xv, yv)), col in zip(series.items(), colors):
        pts = " ".join(f"{_f(ax.px(x))},{_f(ax.py(y))}" for x, y in zip(xv, yv) if np.isfinite(y) and (not logx or x > 0))
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"><title>{escape(str(label))}</title></polyline>')
    out += _legend(series.keys(), colors)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def scatter_chart(series: dict, title: str, xlabel: str, ylabel: str, comment: str | None = None) -> str:
    xs = [x for xv, _ in series.values() for x in xv]
    ys = [y for _, yv in series.values() for y in yv]
    ax = Axes(*_range(xs), *_range(ys))
    out = _open(title, comment) + ax.frame(xlabel, ylabel)
    colors = [PALETTE[k % len(PALETTE)] for k in range(len(series))]
    for (label, (xv, yv)), col in zip(series.items(), colors):
        for x, y in zip(xv, yv):
            if np.isfinite(x) and np.isfinite(y):
                out.append(f'<circle cx="{_f(ax.px(x))}" cy="{_f(ax.py(y))}" r="3" fill="{col}" fill-opacity="0.7"/>')
    out += _legend(series.keys(), colors)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _color(t: float) -> str:
    # dark blue (low loss) to yellow (high loss)
    t = min(1.0, max(0.0, t))
    r = int(round(30 + 225 * t))
    g = int(round(40 + 190 * t))
    b = int(round(120 - 90 * t))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(values: np.ndarray, alphas, betas, title: str, comment: str | None = None, mask=None) -> str:
    """Cell (i, j) is alpha_i (x axis), beta_j (y axis); masked cells are grey."""
    values = np.asarray(values, dtype=float)
    ok = np.isfinite(values) if mask is None else (~np.asarray(mask) & np.isfinite(values))
    lo, hi = (float(values[ok].min()), float(values[ok].max())) if ok.any() else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    ax = Axes(float(alphas[0]), float(alphas[-1]), float(betas[0]), float(betas[-1]))
    out = _open(title, comment) + ax.frame("alpha", "beta")
    n, k = values.shape
    cw = (W - 2 * PAD) / n
    ch = (H - 2 * PAD) / k
    for i in range(n):
        for j in range(k):
            fill = _color((values[i, j] - lo) / span) if ok[i, j] else "#bbbbbb"
            x = PAD + i * cw
            y = H - PAD - (j + 1) * ch
            out.append(f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(cw)}" height="{_f(ch)}" fill="{fill}" data-loss="{float(values[i, j])!r}"/>')
    out.append(f'<text x="{W - PAD}" y="{PAD - 6}" text-anchor="end" font-family="sans-serif" font-size="10">loss min {lo:.6g} max {hi:.6g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class Viewport:
    """World (x, y) to pixel mapping with y flipped; ``inverse`` undoes it."""

    xmin: float
    ymin: float
    scale: float
    height: float
    pad: float = 20.0

    @classmethod
    def fit(cls, points: np.ndarray, width: int = 640, height: int = 420, pad: float = 20.0) -> "Viewport":
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        lo, hi = p.min(axis=0), p.max(axis=0)
        span = np.maximum(hi - lo, 1e-9)
        s = min((width - 2 * pad) / span[0], (height - 2 * pad) / span[1])
        return cls(float(lo[0]), float(lo[1]), float(s), float(height), pad)

    def forward(self, p):
        p = np.asarray(p, dtype=float)
        return np.stack([(p[..., 0] - self.xmin) * self.scale + self.pad, self.height - ((p[..., 1] - self.ymin) * self.scale + self.pad)], axis=-1)

    def inverse(self, q):
        q = np.asarray(q, dtype=float)
        return np.stack([(q[..., 0] - self.pad) / self.scale + self.xmin, (self.height - q[..., 1] - self.pad) / self.scale + self.ymin], axis=-1)


def frame_svg(view: Viewport, nodes: np.ndarray, springs=None, ellipse=None, axes=None, ground: float | None = 0.0, width: int = 640, comment: str | None = None, title: str = "") -> str:
    out = _open(title, comment, width, int(view.height))
    if ground is not None:
        gy = view.forward(np.array([0.0, ground]))[1]
        out.append(f'<line x1="0" y1="{gy:.6f}" x2="{width}" y2="{gy:.6f}" stroke="#555555"/>')
    q = view.forward(nodes)
    if springs is not None:
        for a, b in springs:
            out.append(f'<line x1="{q[a, 0]:.6f}" y1="{q[a, 1]:.6f}" x2="{q[b, 0]:.6f}" y2="{q[b, 1]:.6f}" stroke="#1f77b4" stroke-width="1"/>')
    if ellipse is not None and axes is not None:
        c = view.forward(np.asarray(ellipse[:2]))
        deg = -math.degrees(float(ellipse[2]))
        out.append(f'<ellipse cx="{c[0]:.6f}" cy="{c[1]:.6f}" rx="{axes[0] * view.scale:.6f}" ry="{axes[1] * view.scale:.6f}" transform="rotate({deg:.6f} {c[0]:.6f} {c[1]:.6f})" fill="#ff7f0e" fill-opacity="0.6" stroke="black"/>')
    for k, (x, y) in enumerate(q):
        out.append(f'<circle id="n{k}" cx="{x:.6f}" cy="{y:.6f}" r="2" fill="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
