"""Original-versus-reconstruction SVG: one panel per channel, original in
red and reconstruction in blue, with the score and threshold annotated."""

from __future__ import annotations

from typing import Optional
from xml.sax.saxutils import escape

import numpy as np

from .features import FeatureSeries

WIDTH, PANEL_H, MARGIN = 720, 220, 48
PANELS = (("alt", "altitude (ft)"), ("gs", "ground speed (kts)"))


def _polyline(values: np.ndarray, lo: float, hi: float, top: float, color: str, cls: str) -> str:
    n = values.size
    xs = MARGIN + (WIDTH - 2 * MARGIN) * np.arange(n) / max(n - 1, 1)
    span = hi - lo if hi > lo else 1.0
    ys = top + PANEL_H - (PANEL_H * (values - lo) / span)
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return f'<polyline class="{cls}" fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>'


def reconstruction_svg(original: FeatureSeries, reconstruction: FeatureSeries, mae: float,
                       delta: Optional[float]) -> str:
    """Both series in physical units, sample index on the x axis."""
    height = MARGIN + len(PANELS) * (PANEL_H + MARGIN)
    verdict = "" if delta is None else ("  ANOMALY" if mae > delta else "  normal")
    delta_txt = "uncalibrated" if delta is None else f"{delta:.5f}"
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
        f'viewBox="0 0 {WIDTH} {height}">',
        f'<rect width="{WIDTH}" height="{height}" fill="white"/>',
        f'<text x="{MARGIN}" y="{MARGIN // 2 + 6}" font-family="sans-serif" font-size="14">'
        f'{escape(original.flight_id)}  MAE = {mae:.5f}  δ = {delta_txt}{verdict}</text>',
    ]
    for k, (attr, label) in enumerate(PANELS):
        top = MARGIN + k * (PANEL_H + MARGIN)
        a, b = getattr(original, attr), getattr(reconstruction, attr)
        lo, hi = float(min(a.min(), b.min())), float(max(a.max(), b.max()))
        pad = 0.05 * (hi - lo or 1.0)
        lo, hi = lo - pad, hi + pad
        parts += [
            f'<g class="panel" id="panel-{attr}">',
            f'<rect x="{MARGIN}" y="{top}" width="{WIDTH - 2 * MARGIN}" height="{PANEL_H}" '
            f'fill="none" stroke="#888"/>',
            f'<text x="{MARGIN + 4}" y="{top + 14}" font-family="sans-serif" font-size="12">{label}</text>',
            f'<text x="{MARGIN - 4}" y="{top + 10}" font-family="sans-serif" font-size="10" '
            f'text-anchor="end">{hi:.0f}</text>',
            f'<text x="{MARGIN - 4}" y="{top + PANEL_H}" font-family="sans-serif" font-size="10" '
            f'text-anchor="end">{lo:.0f}</text>',
            _polyline(a, lo, hi, top, "red", "original"),
            _polyline(b, lo, hi, top, "blue", "reconstruction"),
            "</g>",
        ]
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
