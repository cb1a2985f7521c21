"""Deterministic output files: JSON records, CSV tables and series, manifest.

Every float is written with 17 significant digits so that reading a file
back gives the exact same double. No timestamps or host details are
written, so equal inputs give byte-identical outputs.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .estimation import FitResult


def fmt_float(v: float) -> str:
    v = float(v)
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return format(v, ".17g")


def _to_json(obj: Any, indent: int, level: int = 0) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_to_json(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (Mapping, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_to_json(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _to_json(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with round-trip float formatting."""
    return _to_json(obj, indent) + "\n"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


def csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_cell(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def observation_rows(fit: FitResult):
    return [(rid, f, e, w) for rid, f, e, w in
            zip(fit.row_ids, fit.fitted, fit.std_residuals, fit.weights)]


OBSERVATION_HEADER = ("row_id", "fitted", "std_residual", "weight")


@dataclass
class Series:
    """A plot-ready table: one x column and one or more y columns."""

    header: tuple[str, ...]
    rows: list[tuple]
    kind: str = "scatter"  # or "line"; only used by the SVG writer
    title: str = ""


@dataclass
class Report:
    fits: dict[str, FitResult] = field(default_factory=dict)
    series: dict[str, Series] = field(default_factory=dict)
    tables: dict[str, Series] = field(default_factory=dict)
    summary: dict[str, Any] | None = None
    inputs: dict[str, str] = field(default_factory=dict)  # name -> sha256
    config: dict[str, Any] = field(default_factory=dict)
    seed: int = 0


def emit_report(report: Report, output_dir: str | Path, svg: bool = False) -> list[Path]:
    """Write a report bundle and return the written paths.

    Layout: ``fit.json`` (a single fit record, or ``{name: record}``),
    ``weights.csv`` and ``residuals.csv`` (a leading ``model`` column when
    several fits are present), ``summary.json``, ``<table>.csv``,
    ``series/<name>.csv`` (and ``.svg`` when requested) and ``MANIFEST.txt``.
    """
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise OSError(f"cannot create output directory {out}: {err.strerror}") from None
    files: dict[str, str] = {}

    if report.fits:
        if len(report.fits) == 1:
            (fit,) = report.fits.values()
            files["fit.json"] = dumps(fit.to_record())
            header, rows = OBSERVATION_HEADER, observation_rows(fit)
        else:
            files["fit.json"] = dumps({k: f.to_record() for k, f in report.fits.items()})
            header = ("model",) + OBSERVATION_HEADER
            rows = [(name,) + r for name, f in report.fits.items() for r in observation_rows(f)]
        table = csv_text(header, rows)
        files["weights.csv"] = table
        # same columns, ordered by decreasing |std_residual| for inspection
        idx = header.index("std_residual")
        files["residuals.csv"] = csv_text(
            header, sorted(rows, key=lambda r: (-abs(r[idx]), tuple(map(str, r)))))
    if report.summary is not None:
        files["summary.json"] = dumps(report.summary)
    for name, tab in report.tables.items():
        files[f"{name}.csv"] = csv_text(tab.header, tab.rows)
    for name, ser in report.series.items():
        files[f"series/{name}.csv"] = csv_text(ser.header, ser.rows)
        if svg:
            files[f"series/{name}.svg"] = render_svg(ser)

    written = []
    for rel in sorted(files):
        path = out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(files[rel], encoding="utf-8", newline="\n")
        written.append(path)

    lines = ["# robustreg report manifest"]
    for name in sorted(report.inputs):
        lines.append(f"input {report.inputs[name]} {name}")
    lines.append("config " + json.dumps(report.config, sort_keys=True, default=str))
    lines.append(f"seed {report.seed}")
    for rel in sorted(files):
        digest = hashlib.sha256(files[rel].encode("utf-8")).hexdigest()
        lines.append(f"output {digest} {rel}")
    manifest = out / "MANIFEST.txt"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    written.append(manifest)
    return written


def load_fit(path: str | Path) -> FitResult | dict[str, FitResult]:
    rec = json.loads(Path(path).read_text(encoding="utf-8"))
    if "beta_hat" in rec:
        return FitResult.from_record(rec)
    return {k: FitResult.from_record(v) for k, v in rec.items()}


# ---------------------------------------------------------------------------
# minimal SVG


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def render_svg(series: Series, width: int = 480, height: int = 360) -> str:
    """Scatter or line panel of every y column against the first column."""
    margin = 40
    cols = list(zip(*series.rows)) if series.rows else [[] for _ in series.header]
    xs = np.asarray(cols[0], dtype=float)
    ys = [np.asarray(c, dtype=float) for c in cols[1:]]
    finite = np.concatenate([y[np.isfinite(y)] for y in ys]) if ys else np.array([0.0])
    x0, x1 = (float(xs.min()), float(xs.max())) if xs.size else (0.0, 1.0)
    y0, y1 = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def px(x):
        return margin + (x - x0) / (x1 - x0) * (width - 2 * margin)

    def py(y):
        return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect x="{margin}" y="{margin}" width="{width - 2 * margin}" '
             f'height="{height - 2 * margin}" fill="none" stroke="#888"/>',
             f'<text x="{width / 2:.1f}" y="{margin / 2:.1f}" text-anchor="middle" '
             f'font-size="12">{series.title}</text>']
    for j, y in enumerate(ys):
        color = _COLORS[j % len(_COLORS)]
        ok = np.isfinite(y)
        if series.kind == "line":
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs[ok], y[ok]))
            parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}"/>')
        else:
            parts.extend(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="2.5" fill="{color}"/>'
                         for a, b in zip(xs[ok], y[ok]))
        parts.append(f'<text x="{width - margin + 2}" y="{margin + 12 * (j + 1)}" '
                     f'font-size="9" fill="{color}">{series.header[j + 1]}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
