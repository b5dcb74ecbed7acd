"""Dependency-free SVG rendering for confusion matrices, KDE curves and
warping paths."""

from __future__ import annotations

from html import escape

import numpy as np

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _doc(width, height, body):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n' + "\n".join(body) + "\n</svg>\n")


def _text(x, y, s, size=12, anchor="middle", extra=""):
    return (f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" font-family="sans-serif" '
            f'text-anchor="{anchor}"{extra}>{escape(str(s))}</text>')


def confusion_svg(cm, class_names=("0", "1"), title="") -> str:
    """Heatmap with counts; rows are actual classes, columns predicted."""
    cm = np.asarray(cm)
    k = cm.shape[0]
    cell, left, top = 90, 110, 60
    width, height = left + k * cell + 30, top + k * cell + 60
    peak = max(int(cm.max()), 1)
    body = [_text(width / 2, 25, title, 14)] if title else []
    for i in range(k):
        for j in range(k):
            shade = cm[i, j] / peak
            r = g = int(round(255 - 200 * shade))
            x, y = left + j * cell, top + i * cell
            body.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                        f'fill="rgb({r},{g},255)" stroke="#333"/>')
            color = "#fff" if shade > 0.6 else "#000"
            body.append(_text(x + cell / 2, y + cell / 2 + 5, int(cm[i, j]), 16,
                              extra=f' fill="{color}"'))
    for i, name in enumerate(class_names):
        body.append(_text(left - 10, top + i * cell + cell / 2 + 4, name, 12, "end"))
        body.append(_text(left + i * cell + cell / 2, top + k * cell + 20, name, 12))
    body.append(_text(left + k * cell / 2, top + k * cell + 45, "Predicted label", 12))
    body.append(_text(20, top + k * cell / 2, "Actual label", 12,
                      extra=f' transform="rotate(-90 20 {top + k * cell / 2})"'))
    return _doc(width, height, body)


def _polyline(xs, ys, x0, x1, y0, y1, box, color):
    bx, by, bw, bh = box
    sx = (np.asarray(xs) - x0) / ((x1 - x0) or 1) * bw + bx
    sy = by + bh - (np.asarray(ys) - y0) / ((y1 - y0) or 1) * bh
    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(sx, sy))
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'


def _lines_body(series: dict, title, xlabel, ylabel) -> list:
    box = (60, 40, 420, 240)
    width, height = 520, 330
    xs = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = min(0.0, float(ys.min())), float(ys.max())
    bx, by, bw, bh = box
    body = [_text(width / 2, 22, title, 14)] if title else []
    body.append(f'<rect x="{bx}" y="{by}" width="{bw}" height="{bh}" fill="none" stroke="#333"/>')
    for k, (name, (x, y)) in enumerate(series.items()):
        color = _PALETTE[k % len(_PALETTE)]
        body.append(_polyline(x, y, x0, x1, y0, y1, box, color))
        body.append(f'<line x1="{bx + bw - 110}" y1="{by + 15 + 16 * k}" x2="{bx + bw - 90}" '
                    f'y2="{by + 15 + 16 * k}" stroke="{color}" stroke-width="2"/>')
        body.append(_text(bx + bw - 85, by + 19 + 16 * k, name, 11, "start"))
    body.append(_text(bx, by + bh + 16, f"{x0:.3g}", 10))
    body.append(_text(bx + bw, by + bh + 16, f"{x1:.3g}", 10))
    body.append(_text(bx - 5, by + bh, f"{y0:.3g}", 10, "end"))
    body.append(_text(bx - 5, by + 10, f"{y1:.3g}", 10, "end"))
    body.append(_text(bx + bw / 2, height - 8, xlabel, 12))
    body.append(_text(15, by + bh / 2, ylabel, 12,
                      extra=f' transform="rotate(-90 15 {by + bh / 2})"'))
    return body


def lines_svg(series: dict, title="", xlabel="", ylabel="") -> str:
    """One polyline per ``name -> (x, y)`` entry, with a legend."""
    return _doc(520, 330, _lines_body(series, title, xlabel, ylabel))


def panels_svg(panels: list, xlabel="", ylabel="") -> str:
    """Vertically stacked :func:`lines_svg` panels; ``panels`` holds ``(title, series)``."""
    body = []
    for k, (title, series) in enumerate(panels):
        body.append(f'<g transform="translate(0,{330 * k})">')
        body.extend(_lines_body(series, title, xlabel, ylabel))
        body.append("</g>")
    return _doc(520, 330 * len(panels), body)


def alignment_svg(a, b, path, title="") -> str:
    """Both series with a connector for every warping-path step."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    width, height = 560, 300
    n = max(a.size, b.size)
    lo, hi = min(a.min(), b.min()), max(a.max(), b.max())
    span = (hi - lo) or 1.0

    def px(i):
        return 40 + i / max(n - 1, 1) * (width - 80)

    def py(v, offset):
        return offset + 90 - (v - lo) / span * 90

    body = [_text(width / 2, 22, title, 14)] if title else []
    for i, j in path:
        body.append(f'<line x1="{px(i):.2f}" y1="{py(a[i], 40):.2f}" x2="{px(j):.2f}" '
                    f'y2="{py(b[j], 170):.2f}" stroke="#aaa" stroke-width="0.6"/>')
    for series, offset, color in ((a, 40, _PALETTE[0]), (b, 170, _PALETTE[1])):
        pts = " ".join(f"{px(i):.2f},{py(v, offset):.2f}" for i, v in enumerate(series))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
    return _doc(width, height, body)
