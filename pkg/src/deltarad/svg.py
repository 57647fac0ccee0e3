"""Minimal deterministic SVG bar charts (no plotting dependency)."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape


def bar_chart(labels, values, title: str = "", horizontal: bool = False, comment: str = "") -> str:
    """Render one bar per value. Each bar is a ``<rect class="bar">`` element."""
    labels = [str(x) for x in labels]
    values = [float(v) for v in values]
    if len(labels) != len(values):
        raise ValueError("labels and values differ in length")
    vmax = max([v for v in values if v > 0], default=1.0)
    n = max(len(values), 1)
    parts = []
    if horizontal:
        left, bar_h, width = 260, 22, 640
        height = 50 + n * (bar_h + 6)
        span = width - left - 80
        for i, (lab, v) in enumerate(zip(labels, values)):
            y = 40 + i * (bar_h + 6)
            w = span * max(v, 0.0) / vmax
            parts.append(f'<rect class="bar" x="{left}" y="{y}" width="{w:.2f}" height="{bar_h}" fill="#4477aa"/>')
            parts.append(f'<text x="{left - 6}" y="{y + 15}" text-anchor="end" font-size="11">{escape(lab)}</text>')
            parts.append(f'<text x="{left + w + 4:.2f}" y="{y + 15}" font-size="11">{v:.4g}</text>')
    else:
        width, height, bottom = max(320, 40 + n * 28), 320, 260
        span = bottom - 40
        bw = (width - 60) / n
        for i, (lab, v) in enumerate(zip(labels, values)):
            x = 40 + i * bw
            h = span * max(v, 0.0) / vmax
            parts.append(f'<rect class="bar" x="{x:.2f}" y="{bottom - h:.2f}" width="{bw * 0.9:.2f}" '
                         f'height="{h:.2f}" fill="#4477aa"/>')
            parts.append(f'<text x="{x + bw * 0.45:.2f}" y="{bottom + 14}" text-anchor="middle" '
                         f'font-size="9">{escape(lab)}</text>')
    head = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">']
    if comment:
        head.append(f"<!-- {escape(comment)} -->")
    head.append(f'<text x="{width / 2:.0f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    return "\n".join(head + parts + ["</svg>", ""])


def write_bar_chart(path, labels, values, **kw) -> None:
    Path(path).write_text(bar_chart(labels, values, **kw))
