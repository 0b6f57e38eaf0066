"""CSV, SVG and run-manifest writers.

Every writer is byte-deterministic for identical inputs; floats are written
with 17 significant digits so they survive a write/read round trip exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from html import escape
from pathlib import Path

import numpy as np

from ..errors import ArtifactIOError, ConfigError

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


def format_value(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def emit_csv(records, path, fieldnames=None):
    """Header row plus one line per record (dicts sharing the same keys)."""
    records = list(records)
    if fieldnames is None:
        if not records:
            raise ConfigError("emit_csv: fieldnames are required for an empty record list")
        fieldnames = list(records[0].keys())
    for r in records:
        if list(r.keys()) != list(fieldnames):
            raise ConfigError(f"emit_csv: record keys {list(r.keys())} differ from header {list(fieldnames)}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(fieldnames)
            for r in records:
                w.writerow([format_value(r[k]) for k in fieldnames])
    except OSError as exc:
        raise ArtifactIOError(path, exc.strerror or str(exc)) from exc
    return path


def read_csv(path):
    """Rows as dicts of strings; see ``csv_column`` for numeric access."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise ArtifactIOError(path, exc.strerror or str(exc)) from exc


def csv_column(rows, name):
    return np.array([float(r[name]) if r[name] != "" else np.nan for r in rows])


@dataclass
class ScatterLayer:
    label: str
    points: np.ndarray
    color: str | None = None
    radius: float = 1.5
    opacity: float = 0.6


def _fmt(x):
    return f"{x:.2f}"


def emit_svg_scatter(layers, bounds, path, title=None, size=480, margin=48):
    """Standalone SVG scatter plot: axes, ticks, legend, one group per layer.

    ``bounds`` is ``(xmin, xmax, ymin, ymax)``. Data coordinates map affinely
    onto the square plot area, with y pointing up.
    """
    xmin, xmax, ymin, ymax = (float(b) for b in bounds)
    if not all(math.isfinite(b) for b in (xmin, xmax, ymin, ymax)) or xmax <= xmin or ymax <= ymin:
        raise ConfigError(f"emit_svg_scatter: invalid bounds {bounds}")
    inner = size - 2 * margin

    def sx(x):
        return margin + (x - xmin) / (xmax - xmin) * inner

    def sy(y):
        return margin + (ymax - y) / (ymax - ymin) * inner

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{inner}" height="{inner}" '
        f'fill="none" stroke="#444" stroke-width="1"/>',
    ]
    if title:
        out.append(f'<text x="{size / 2:.2f}" y="{margin / 2:.2f}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="14">{escape(title)}</text>')
    out.append('<g class="axes" font-family="sans-serif" font-size="10" fill="#444">')
    for i in range(5):
        fx = xmin + (xmax - xmin) * i / 4
        fy = ymin + (ymax - ymin) * i / 4
        out.append(f'<line x1="{_fmt(sx(fx))}" y1="{margin + inner}" x2="{_fmt(sx(fx))}" '
                   f'y2="{margin + inner + 4}" stroke="#444"/>')
        out.append(f'<text x="{_fmt(sx(fx))}" y="{margin + inner + 16}" '
                   f'text-anchor="middle">{fx:.3g}</text>')
        out.append(f'<line x1="{margin - 4}" y1="{_fmt(sy(fy))}" x2="{margin}" '
                   f'y2="{_fmt(sy(fy))}" stroke="#444"/>')
        out.append(f'<text x="{margin - 6}" y="{_fmt(sy(fy) + 3)}" text-anchor="end">{fy:.3g}</text>')
    out.append("</g>")

    for i, layer in enumerate(layers):
        pts = np.asarray(layer.points, dtype=np.float64).reshape(-1, 2)
        if len(pts) > 100_000:
            raise ConfigError(f"emit_svg_scatter: layer {layer.label!r} exceeds 1e5 points")
        color = layer.color or PALETTE[i % len(PALETTE)]
        out.append(f'<g class="layer" data-label="{escape(layer.label)}" fill="{color}" '
                   f'fill-opacity="{layer.opacity}">')
        for x, y in pts:
            if not (math.isfinite(x) and math.isfinite(y)):
                continue
            out.append(f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="{layer.radius}"/>')
        out.append("</g>")

    out.append('<g class="legend" font-family="sans-serif" font-size="11">')
    for i, layer in enumerate(layers):
        color = layer.color or PALETTE[i % len(PALETTE)]
        y = margin + 12 + 16 * i
        out.append(f'<rect x="{margin + 8}" y="{y - 8}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{margin + 24}" y="{y + 1}">{escape(layer.label)}</text>')
    out.append("</g>")
    out.append("</svg>")

    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(out) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ArtifactIOError(path, exc.strerror or str(exc)) from exc
    return path


def symmetric_bounds(*point_sets, pad=1.1, minimum=1.0):
    """Square bounds centred on the origin that enclose every finite point."""
    extent = minimum
    for pts in point_sets:
        pts = np.asarray(pts, dtype=np.float64)
        finite = pts[np.isfinite(pts)]
        if finite.size:
            extent = max(extent, float(np.abs(finite).max()) * pad)
    return (-extent, extent, -extent, extent)


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    started_at: str
    tool_version: str
    outputs: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        try:
            return cls(**json.loads(text))
        except (json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"malformed manifest: {exc}") from None

    def write(self, path):
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.to_json(), encoding="utf-8")
        except OSError as exc:
            raise ArtifactIOError(path, exc.strerror or str(exc)) from exc
        return path

    @classmethod
    def read(cls, path):
        path = Path(path)
        try:
            return cls.from_json(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ArtifactIOError(path, exc.strerror or str(exc)) from exc
