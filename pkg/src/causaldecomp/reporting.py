"""
Plain-text reports: a disparity-decomposition table, metric panels as
standalone SVG and a markdown summary of simulation metrics.
"""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Sequence
from xml.sax.saxutils import escape

METRICS = ("bias", "rmse", "coverage")
TARGETS = ("delta", "zeta")
TARGET_NAMES = {"delta": "disparity reduction", "zeta": "disparity remaining"}
PALETTE = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d",
           "#666666")
COVERAGE_REFERENCE = 0.95


def _num(x, digits=3) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return f"{x:.{digits}f}"


def decomposition_table(results: Sequence[dict]) -> str:
    """Estimates per estimator in columns with interval rows below each estimate.

    ``results`` are report dictionaries as produced by
    :meth:`IntervalEstimate.to_dict` (or :meth:`DecompositionEstimate.to_dict`
    when no bootstrap was run).
    """
    header = [""] + [r["estimator"] for r in results]
    body = []
    for key, name in (("tau", "Initial disparity"), ("delta", "Disparity reduction"),
                      ("zeta", "Disparity remaining")):
        body.append([name] + [_num(r[key]) for r in results])
        cis = [r.get(f"{key}_ci") for r in results]
        if any(ci is not None for ci in cis):
            body.append(["(95% CI)"] + [
                "" if ci is None else f"({_num(ci[0])}, {_num(ci[1])})" for ci in cis])
    body.append(["% reduction"] + [_num(r["percent_reduction"], 1) for r in results])
    widths = [max(len(row[j]) for row in [header] + body) for j in range(len(header))]
    lines = []
    for row in [header] + body:
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def _series_key(row, multi_kind: bool) -> str:
    return f"{row['estimator']} ({row['mediator']})" if multi_kind else row["estimator"]


def metric_panels_svg(rows: Sequence[dict], metric: str, target: str, title: str = "",
                      provenance: str = "") -> str:
    """One SVG with a panel per sample size: ``metric`` for ``target`` against the ratio.

    Coverage panels carry a dashed horizontal line at 0.95.
    """
    rows = [r for r in rows if r["target"] == target]
    multi_kind = len({r["mediator"] for r in rows}) > 1
    sizes = sorted({int(r["n"]) for r in rows})
    series = sorted({_series_key(r, multi_kind) for r in rows})
    colors = {s: PALETTE[i % len(PALETTE)] for i, s in enumerate(series)}
    values = [float(r[metric]) for r in rows if not math.isnan(float(r[metric]))]
    if metric == "coverage":
        values.append(COVERAGE_REFERENCE)
    if metric == "bias":
        values.append(0.0)
    lo, hi = (min(values), max(values)) if values else (0.0, 1.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    ratios = sorted({float(r["ratio"]) for r in rows}) or [0.0, 1.0]
    xlo, xhi = ratios[0], ratios[-1]
    if xhi - xlo < 1e-12:
        xlo, xhi = xlo - 0.5, xhi + 0.5

    pw, ph, ml, mt, mb, gap = 260, 200, 60, 40, 45, 20
    legend_h = 18 * len(series) + 10
    width = ml + len(sizes) * (pw + gap) + 10
    height = mt + ph + mb + legend_h
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">']
    if provenance:
        out.append(f"<metadata>{escape(provenance)}</metadata>")
    out.append(f'<text x="{width / 2:.1f}" y="16" text-anchor="middle" font-size="13">'
               f'{escape(title or f"{metric} of {TARGET_NAMES[target]}")}</text>')

    def sx(x, x0):
        return x0 + (x - xlo) / (xhi - xlo) * pw

    def sy(y):
        return mt + ph - (y - lo) / (hi - lo) * ph

    for k, n in enumerate(sizes):
        x0 = ml + k * (pw + gap)
        out.append(f'<g class="panel" data-n="{n}">')
        out.append(f'<rect x="{x0}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
                   f'stroke="#999"/>')
        out.append(f'<text x="{x0 + pw / 2:.1f}" y="{mt - 6}" text-anchor="middle">n = {n}</text>')
        for t in _ticks(lo, hi):
            y = sy(t)
            out.append(f'<line x1="{x0}" x2="{x0 - 4}" y1="{y:.1f}" y2="{y:.1f}" stroke="#999"/>')
            if k == 0:
                out.append(f'<text x="{x0 - 6}" y="{y + 4:.1f}" text-anchor="end">{t:g}</text>')
        for r in ratios:
            x = sx(r, x0)
            out.append(f'<text x="{x:.1f}" y="{mt + ph + 15}" text-anchor="middle">{r:g}</text>')
        out.append(f'<text x="{x0 + pw / 2:.1f}" y="{mt + ph + 32}" text-anchor="middle">'
                   f'ratio r</text>')
        if metric == "coverage":
            y = sy(COVERAGE_REFERENCE)
            out.append(f'<line class="reference" x1="{x0}" x2="{x0 + pw}" y1="{y:.1f}" '
                       f'y2="{y:.1f}" stroke="#000" stroke-dasharray="4 3" '
                       f'data-value="{COVERAGE_REFERENCE}"/>')
        elif metric == "bias":
            y = sy(0.0)
            out.append(f'<line x1="{x0}" x2="{x0 + pw}" y1="{y:.1f}" y2="{y:.1f}" '
                       f'stroke="#ccc"/>')
        for s in series:
            pts = sorted((float(r["ratio"]), float(r[metric])) for r in rows
                         if int(r["n"]) == n and _series_key(r, multi_kind) == s
                         and not math.isnan(float(r[metric])))
            if not pts:
                continue
            path = " ".join(f"{sx(x, x0):.1f},{sy(y):.1f}" for x, y in pts)
            out.append(f'<polyline class="series" data-series="{escape(s)}" points="{path}" '
                       f'fill="none" stroke="{colors[s]}" stroke-width="1.5"/>')
            for x, y in pts:
                out.append(f'<circle cx="{sx(x, x0):.1f}" cy="{sy(y):.1f}" r="2.5" '
                           f'fill="{colors[s]}"/>')
        out.append("</g>")
    out.append('<g class="legend">')
    for i, s in enumerate(series):
        y = mt + ph + mb + 14 + 18 * i
        out.append(f'<line x1="{ml}" x2="{ml + 20}" y1="{y - 4}" y2="{y - 4}" '
                   f'stroke="{colors[s]}" stroke-width="2"/>')
        out.append(f'<text class="legend-entry" x="{ml + 26}" y="{y}">{escape(s)}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / count))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= count:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12:
        ticks.append(round(t, 10))
        t += step
    return ticks


def metrics_markdown(rows: Sequence[dict], provenance: str = "") -> str:
    """Markdown table of every metric row, grouped by mediator kind and sample size."""
    lines = ["# Simulation metrics", ""]
    if provenance:
        lines += [f"<!-- {provenance} -->", ""]
    groups = defaultdict(list)
    for r in rows:
        groups[(r["mediator"], int(r["n"]))].append(r)
    for (kind, n), grp in sorted(groups.items()):
        lines += [f"## {kind} mediator, n = {n}", "",
                  "| estimator | target | ratio | bias | RMSE | coverage | M | B |",
                  "|---|---|---:|---:|---:|---:|---:|---:|"]
        for r in sorted(grp, key=lambda r: (r["estimator"], r["target"], float(r["ratio"]))):
            lines.append(f"| {r['estimator']} | {r['target']} | {float(r['ratio']):g} | "
                         f"{_num(float(r['bias']))} | {_num(float(r['rmse']))} | "
                         f"{_num(float(r['coverage']))} | {r['M']} | {r['B']} |")
        lines.append("")
    return "\n".join(lines)
