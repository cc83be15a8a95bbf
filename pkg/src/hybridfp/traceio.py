"""Trace persistence (CSV, JSON sidecar, summary) and static SVG plots.

Floats are written with ``repr``, the shortest decimal string that reads
back to the same double, so equal traces give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .hybrid import IterationTrace

CSV_COLUMNS = (
    "n",
    "step_norm",
    "phi_anchor",
    "residual_xy",
    "residual_fp",
    "cert_eq",
    "cert_vi",
    "cert_R",
    "sol_dist",
)
PLOT_COLUMNS = ("step_norm", "residual_xy", "residual_fp", "sol_dist")

_FIELD = {
    "step_norm": "step_norm",
    "phi_anchor": "phi_anchor",
    "residual_xy": "residual_xy",
    "residual_fp": "residual_fixed_point",
    "cert_eq": "cert_eq",
    "cert_vi": "cert_vi",
    "cert_R": "cert_retraction",
    "sol_dist": "solution_distance",
}


def _num(v):
    return "" if v is None else repr(float(v))


def _vec(v):
    return None if v is None else [float(t) for t in np.asarray(v)]


def trace_rows(trace: IterationTrace):
    for rec in trace.records:
        yield [str(rec.n)] + [_num(getattr(rec, _FIELD[c])) for c in CSV_COLUMNS[1:]]


def trace_csv(trace: IterationTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(trace_rows(trace))
    return buf.getvalue()


def trace_sidecar(trace: IterationTrace) -> dict:
    records = []
    for rec in trace.records:
        row = {"n": rec.n}
        row.update({c: getattr(rec, _FIELD[c]) for c in CSV_COLUMNS[1:]})
        row.update(x=_vec(rec.x), y=_vec(rec.y), z=_vec(rec.z), u=_vec(rec.u))
        records.append(row)
    return {
        "terminal_status": trace.status.value,
        "message": trace.message,
        "anchor": _vec(trace.anchor),
        "final_point": _vec(trace.final_point),
        "records": records,
    }


def trace_summary(trace: IterationTrace, instance) -> dict:
    stepped = [r for r in trace.records if r.y is not None]
    last = stepped[-1] if stepped else None
    return {
        "instance": instance.name,
        "terminal_status": trace.status.value,
        "message": trace.message,
        "iterations": trace.iterations,
        "final_norm": instance.space.norm(trace.final_point),
        "final_step_norm": trace.records[-1].step_norm,
        "final_residual_xy": last.residual_xy if last else None,
        "final_residual_fp": last.residual_fixed_point if last else None,
        "final_solution_distance": trace.records[-1].solution_distance,
    }


def write_trace(trace: IterationTrace, csv_path, sidecar_path=None):
    csv_path = Path(csv_path)
    csv_path.write_text(trace_csv(trace))
    sidecar_path = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".json")
    sidecar_path.write_text(json.dumps(trace_sidecar(trace), indent=1) + "\n")
    return csv_path, sidecar_path


def read_trace_csv(path) -> dict:
    """Columns of a trace CSV as float arrays (NaN for empty cells).

    Raises ValueError when the file has no header or no rows.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or not rows[0]:
        raise ValueError(f"{path} holds no trace rows")
    header = rows[0]
    if "n" not in header:
        raise ValueError(f"{path} has no 'n' column")
    cols = {}
    for j, name in enumerate(header):
        try:
            cols[name] = np.array([float(r[j]) if r[j] else np.nan for r in rows[1:]])
        except (ValueError, IndexError):
            raise ValueError(f"{path}: malformed value in column {name!r}") from None
    return cols


_COLORS = {"step_norm": "#1f77b4", "residual_xy": "#d62728", "residual_fp": "#2ca02c", "sol_dist": "#9467bd"}


def trace_svg(cols: dict, width: int = 640, height: int = 400) -> str:
    """Log-scale curves of the plotted columns against n as an SVG document.

    Columns that are absent or have no positive finite values are skipped.
    """
    n = cols["n"]
    curves = {}
    for name in PLOT_COLUMNS:
        v = cols.get(name)
        if v is None:
            continue
        ok = np.isfinite(v) & (v > 0)
        if ok.any():
            curves[name] = (n[ok], np.log10(v[ok]))
    m = 50
    pw, ph = width - 2 * m, height - 2 * m
    n_lo, n_hi = float(np.min(n)), float(np.max(n))
    if n_hi == n_lo:
        n_hi = n_lo + 1
    if curves:
        lo = math.floor(min(float(c[1].min()) for c in curves.values()))
        hi = math.ceil(max(float(c[1].max()) for c in curves.values()))
    else:
        lo, hi = -1, 0
    if hi == lo:
        hi = lo + 1

    def sx(t):
        return m + pw * (t - n_lo) / (n_hi - n_lo)

    def sy(t):
        return m + ph * (hi - t) / (hi - lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<rect x="{m}" y="{m}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for e in range(lo, hi + 1):
        y = sy(e)
        out.append(f'<line x1="{m}" y1="{y:.2f}" x2="{m + pw}" y2="{y:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{m - 6}" y="{y + 4:.2f}" font-size="11" text-anchor="end">1e{e}</text>')
    out.append(f'<text x="{m}" y="{height - m + 18}" font-size="11">n = {n_lo:g}</text>')
    out.append(f'<text x="{m + pw}" y="{height - m + 18}" font-size="11" text-anchor="end">n = {n_hi:g}</text>')
    for k, (name, (xs, ys)) in enumerate(curves.items()):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xs, ys))
        color = _COLORS[name]
        out.append(f'<polyline data-column="{name}" fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{m + pw - 110}" y="{m + 16 + 14 * k}" font-size="11" fill="{color}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_plot(trace_path, out_path):
    Path(out_path).write_text(trace_svg(read_trace_csv(trace_path)))
