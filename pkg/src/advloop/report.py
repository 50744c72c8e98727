"""Report assembly: metrics tables, best-so-far curves and BEV snapshots as SVG."""
from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

CONDITION_ORDER = ("original", "adv-open", "adv-closed")
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")


# ------------------------------------------------------------------ tables

def write_rows_csv(rows: list[dict], path, fields: list[str] | None = None) -> None:
    fields = fields or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fields, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in fields})


def read_rows_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


def _num(v) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        return math.nan


def median_table(rows: list[dict], metrics: tuple[str, ...]) -> list[dict]:
    """Median of each metric over scenarios, one row per condition."""
    by_cond: dict[str, list[dict]] = defaultdict(list)
    for r in rows:
        by_cond[r["condition"]].append(r)
    order = [c for c in CONDITION_ORDER if c in by_cond] + sorted(set(by_cond) - set(CONDITION_ORDER))
    out = []
    for cond in order:
        group = by_cond[cond]
        row = {"condition": cond, "n_scenarios": len({r["scenario"] for r in group})}
        for m in metrics:
            vals = np.array([_num(r.get(m)) for r in group])
            vals = vals[np.isfinite(vals)]
            row[m] = float(np.median(vals)) if vals.size else math.nan
        out.append(row)
    return out


def paired_rows(rows: list[dict]) -> list[dict]:
    """Rows sorted so that conditions of the same scenario sit together."""
    rank = {c: i for i, c in enumerate(CONDITION_ORDER)}
    return sorted(rows, key=lambda r: (r["scenario"], rank.get(r["condition"], len(rank)), r["condition"]))


# ------------------------------------------------------------------ svg primitives

class Svg:
    def __init__(self, width: int, height: int, meta: dict | None = None):
        self.w, self.h = width, height
        self.parts: list[str] = []
        self.meta = meta or {}

    def add(self, s: str) -> None:
        self.parts.append(s)

    def text(self, x, y, s, size=11, anchor="start", color="#222") -> None:
        self.add(f'<text x="{x:.2f}" y="{y:.2f}" font-size="{size}" text-anchor="{anchor}" '
                 f'fill="{color}" font-family="sans-serif">{escape(str(s))}</text>')

    def polygon(self, pts, stroke, fill="none", width=1.0, extra="") -> None:
        p = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
        self.add(f'<polygon points="{p}" stroke="{stroke}" fill="{fill}" stroke-width="{width}" {extra}/>')

    def polyline(self, pts, stroke, width=1.0, extra="") -> None:
        p = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
        self.add(f'<polyline points="{p}" stroke="{stroke}" fill="none" stroke-width="{width}" {extra}/>')

    def render(self) -> str:
        head = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                f'viewBox="0 0 {self.w} {self.h}">']
        if self.meta:
            m = " ".join(f"{k}={v}" for k, v in sorted(self.meta.items()))
            head.append(f"<!-- {escape(m)} -->")
            head.append(f"<metadata>{escape(m)}</metadata>")
        head.append(f'<rect width="{self.w}" height="{self.h}" fill="white"/>')
        return "\n".join(head + self.parts + ["</svg>"]) + "\n"


# ------------------------------------------------------------------ curves

def curve_svg(curves: dict[str, np.ndarray], title: str = "best so far", meta: dict | None = None,
              width: int = 640, height: int = 400) -> str:
    """Best-so-far curves; each polyline carries its exact values in ``data-y``."""
    svg = Svg(width, height, meta)
    ml, mr, mt, mb = 60, 20, 30, 40
    vals = np.concatenate([np.asarray(v, float) for v in curves.values()]) if curves else np.zeros(0)
    vals = vals[np.isfinite(vals)]
    lo, hi = (float(vals.min()), float(vals.max())) if vals.size else (0.0, 1.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    n = max((len(v) for v in curves.values()), default=1)

    def sx(i):
        return ml + (width - ml - mr) * (i / max(n - 1, 1))

    def sy(v):
        return height - mb - (height - mt - mb) * (v - lo) / (hi - lo)

    svg.text(width / 2, 18, title, 13, "middle")
    svg.polyline([(ml, mt), (ml, height - mb), (width - mr, height - mb)], "#444")
    for v in np.linspace(lo, hi, 5):
        svg.text(ml - 6, sy(v) + 4, f"{v:.2f}", 10, "end")
    svg.text(width / 2, height - 8, "query", 11, "middle")
    for k, (label, ys) in enumerate(curves.items()):
        ys = np.asarray(ys, float)
        color = _PALETTE[k % len(_PALETTE)]
        pts = [(sx(i), sy(y)) for i, y in enumerate(ys) if np.isfinite(y)]
        data = " ".join(repr(float(y)) for y in ys)
        svg.polyline(pts, color, 1.6, f'data-label="{escape(label)}" data-y="{data}"')
        svg.text(width - mr - 4, mt + 14 * (k + 1), label, 11, "end", color)
    return svg.render()


def curve_values(svg_text: str) -> dict[str, np.ndarray]:
    """Inverse of :func:`curve_svg` for the embedded values."""
    import re

    out = {}
    for label, data in re.findall(r'data-label="([^"]*)" data-y="([^"]*)"', svg_text):
        out[label] = np.array([float(v) for v in data.split()]) if data else np.zeros(0)
    return out


# ------------------------------------------------------------------ BEV snapshot

def _corners(cx, cy, length, width, yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    hl, hw = 0.5 * length, 0.5 * width
    return [(cx + c * dx - s * dy, cy + s * dx + c * dy) for dx, dy in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))]


def bev_svg(tick: dict, sdv_dims=(4.8, 2.0), span: float = 100.0, size: int = 600, title: str = "",
            meta: dict | None = None) -> str:
    """Top-down snapshot of one trace tick: gt boxes, detections with confidence, predictions and plan."""
    svg = Svg(size, size, meta)
    ex, ey, eh = tick["sdv_state"][0], tick["sdv_state"][1], tick["sdv_state"][2]
    scale = size / span
    c, s = math.cos(-eh), math.sin(-eh)

    def to_px(x, y):
        # SDV-centred, heading up
        dx, dy = x - ex, y - ey
        u, v = c * dx - s * dy, s * dx + c * dy
        return size / 2 - v * scale, size / 2 - u * scale

    for box in tick["gt_boxes"].values():
        svg.polygon([to_px(*p) for p in _corners(*box)], "#2ca02c", width=1.5, extra='class="gt"')
    for d in tick["detections"]:
        pts = [to_px(*p) for p in _corners(*d[:5])]
        svg.polygon(pts, "#1f77b4", width=1.2, extra='class="det"')
        svg.text(pts[0][0] + 2, pts[0][1] - 2, f"{d[5]:.2f}", 9, color="#1f77b4")
    for p in tick["predictions"]:
        for k, mode in enumerate(p["modes"]):
            svg.polyline([to_px(*w) for w in [p["origin"]] + mode], "#ff7f0e", 1.0,
                         'class="pred"' + (' stroke-dasharray="3,2"' if k else ""))
    plan = tick["plan"]["states"]
    svg.polyline([to_px(st[0], st[1]) for st in plan], "#d62728", 2.0, 'class="plan"')
    svg.polygon([to_px(*p) for p in _corners(ex, ey, sdv_dims[0], sdv_dims[1], eh)], "#d62728", "#d6272833",
                1.5, 'class="sdv"')
    if title:
        svg.text(8, 16, title, 12)
    svg.text(8, size - 8, "green gt, blue detections, orange predictions, red SDV plan", 10, color="#555")
    return svg.render()


def worst_tick(index: dict) -> int:
    """Tick with the largest combined step cost."""
    costs = [t["cost"]["combined"] if t["cost"] else -math.inf for t in index["ticks"]]
    return int(np.argmax(costs))


def rows_to_text(rows: list[dict], fields: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fields, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k)) for k in fields})
    return buf.getvalue()


def save_text(path, text: str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)
    return p
