"""Minimal SVG line/marker plots written from primitives.

Output is deterministic for identical data; the optional timestamp comment is
the only varying content.
"""

from __future__ import annotations

import datetime as _dt
import math
from dataclasses import dataclass
from html import escape

import numpy as np

PALETTE = ("#1f5fa8", "#c2410c", "#15803d", "#7e22ce", "#b91c1c", "#0f766e")


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str = ""
    style: str = "line"  # "line", "markers" or "steps"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    first = math.ceil(lo / step) * step
    return [first + i * step for i in range(int((hi - first) / step + 1e-9) + 1)]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def plot(
    series: list[Series],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    logy: bool = False,
    width: int = 640,
    height: int = 400,
    timestamp: bool = True,
) -> str:
    left, right, top, bottom = 70, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom

    def ty(v):
        v = np.asarray(v, dtype=float)
        return np.log10(np.clip(v, 1e-300, None)) if logy else v

    xs = np.concatenate([np.asarray(s.x, float) for s in series]) if series else np.array([0.0, 1.0])
    ys = np.concatenate([ty(s.y) for s in series if len(s.y)]) if series else np.array([0.0, 1.0])
    if logy:
        ys = ys[np.isfinite(ys) & (ys > -299)]
    xs = xs[np.isfinite(xs)]
    x0, x1 = (float(xs.min()), float(xs.max())) if xs.size else (0.0, 1.0)
    y0, y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(v):
        return left + (np.asarray(v, float) - x0) / (x1 - x0) * pw

    def py(v):
        return top + ph - (ty(v) - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">'
    ]
    if timestamp:
        out.append(f"<!-- generated {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')} -->")
    out.append(f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for t in _ticks(x0, x1):
        X = _fmt(float(px(t)))
        out.append(f'<line x1="{X}" y1="{top + ph}" x2="{X}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X}" y="{top + ph + 18}" font-size="11" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1):
        Y = _fmt(top + ph - (t - y0) / (y1 - y0) * ph)
        label = f"1e{t:g}" if logy else f"{t:g}"
        out.append(f'<line x1="{left - 5}" y1="{Y}" x2="{left}" y2="{Y}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{Y}" font-size="11" text-anchor="end" dominant-baseline="middle">{label}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 10}" font-size="13" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="15" y="{top + ph / 2}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 15 {top + ph / 2})">{escape(ylabel)}</text>'
    )
    out.append(f'<text x="{left + pw / 2}" y="22" font-size="14" text-anchor="middle">{escape(title)}</text>')

    for k, s in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        X, Y = px(s.x), py(s.y)
        keep = np.isfinite(X) & np.isfinite(Y)
        X, Y = X[keep], Y[keep]
        if s.style == "markers":
            for a, b in zip(X.tolist(), Y.tolist()):
                out.append(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="3" fill="{color}"/>')
        else:
            if s.style == "steps" and X.size:
                X, Y = np.repeat(X, 2)[1:], np.repeat(Y, 2)[:-1]
            pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(X.tolist(), Y.tolist()))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.2"/>')
        if s.label:
            ly = top + 14 + 16 * k
            out.append(f'<rect x="{left + pw - 150}" y="{ly - 8}" width="10" height="10" fill="{color}"/>')
            out.append(f'<text x="{left + pw - 135}" y="{ly + 1}" font-size="11">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
