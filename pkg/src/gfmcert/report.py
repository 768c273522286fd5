"""Deterministic CSV/JSON writers and small static SVG charts."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

SIG = 12


def fmt(x) -> str:
    """Fixed 12-significant-digit text for a number."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == 0:
        return "0"
    return f"{x:.{SIG}g}"


def canonical(obj):
    """Plain JSON-ready structure; floats rounded to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return canonical(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [canonical(obj.real), canonical(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return fmt(x)
        return float(fmt(x))
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "value"):            # enums
        return obj.value
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def to_json(obj) -> str:
    return json.dumps(canonical(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    return buf.getvalue()


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")
    return path


# ---------------------------------------------------------------- SVG

_W, _H, _M = 640, 420, 60


def _axis(lo, hi):
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        lo, hi = (lo - 1, lo + 1) if np.isfinite(lo) else (-1, 1)
    return lo, hi


def _frame(title, xlabel, ylabel, xr, yr):
    x0, x1 = _M, _W - 20
    y0, y1 = _H - _M, 30
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="18" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.1f}" y="{_H - 15}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(xlabel)}</text>',
        f'<text x="15" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 15 {(y0 + y1) / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for k in range(5):
        xv = xr[0] + (xr[1] - xr[0]) * k / 4
        yv = yr[0] + (yr[1] - yr[0]) * k / 4
        px = x0 + (x1 - x0) * k / 4
        py = y0 + (y1 - y0) * k / 4
        parts.append(f'<text x="{px:.1f}" y="{y0 + 16}" text-anchor="middle" font-family="sans-serif" font-size="10">{xv:.3g}</text>')
        parts.append(f'<text x="{x0 - 6}" y="{py + 3:.1f}" text-anchor="end" font-family="sans-serif" font-size="10">{yv:.3g}</text>')

    def tx(v):
        return x0 + (x1 - x0) * (v - xr[0]) / (xr[1] - xr[0])

    def ty(v):
        return y0 + (y1 - y0) * (v - yr[0]) / (yr[1] - yr[0])
    return parts, tx, ty


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def line_chart(x, series: dict, title="", xlabel="", ylabel="", max_points=2000) -> str:
    x = np.asarray(x, dtype=float)
    step = max(1, x.size // max_points)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    finite = np.concatenate([v[np.isfinite(v)] for v in ys.values()] or [np.zeros(1)])
    finite = finite if finite.size else np.zeros(1)
    xr = _axis(float(x.min()), float(x.max()))
    yr = _axis(float(finite.min()), float(finite.max()))
    parts, tx, ty = _frame(title, xlabel, ylabel, xr, yr)
    for k, (name, y) in enumerate(ys.items()):
        pts = [f"{tx(a):.2f},{ty(b):.2f}" for a, b in zip(x[::step], y[::step]) if np.isfinite(b)]
        color = _COLORS[k % len(_COLORS)]
        if pts:
            parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{" ".join(pts)}"/>')
        parts.append(f'<text x="{_W - 90}" y="{40 + 14 * k}" font-family="sans-serif" font-size="11" fill="{color}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def heatmap(xs, ys, mask, title="", xlabel="", ylabel="", stars=()) -> str:
    """Boolean grid, rows indexed by ``ys``; feasible cells shaded."""
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    xr, yr = _axis(xs.min(), xs.max()), _axis(ys.min(), ys.max())
    parts, tx, ty = _frame(title, xlabel, ylabel, xr, yr)
    dx = (tx(xr[1]) - tx(xr[0])) / max(xs.size - 1, 1)
    dy = (ty(yr[0]) - ty(yr[1])) / max(ys.size - 1, 1)
    for r, yv in enumerate(ys):
        for c, xv in enumerate(xs):
            if mask[r, c]:
                parts.append(f'<rect x="{tx(xv) - dx / 2:.2f}" y="{ty(yv) - dy / 2:.2f}" '
                             f'width="{dx:.2f}" height="{dy:.2f}" fill="#9ecae1"/>')
    for label, sx, sy, inside in stars:
        color = "black" if inside else "#d62728"
        parts.append(f'<text x="{tx(sx):.2f}" y="{ty(sy) + 5:.2f}" text-anchor="middle" font-size="16" fill="{color}">*</text>')
        parts.append(f'<text x="{tx(sx) + 8:.2f}" y="{ty(sy) - 4:.2f}" font-family="sans-serif" font-size="10">{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
