"""CSV, SVG and manifest emission for rate reports. Output bytes depend only on the report."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .sweep import RateReport

__all__ = ["emit_outputs", "rates_csv", "slopes_csv", "render_svg", "manifest_text"]

RATE_COLUMNS = ["T", "arm", "mean", "ci_lo", "ci_hi", "bound"]
SLOPE_COLUMNS = ["arm", "slope", "intercept", "ci_lo", "ci_hi", "n_points", "burn_in_T"]
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _g(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.17g}"


def _check(report: RateReport):
    if report is None or len(report.T) < 4:
        raise ValueError("report needs at least four T points")


def rates_csv(report: RateReport) -> str:
    _check(report)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RATE_COLUMNS)
    for i, arm in enumerate(report.arms):
        for j, t in enumerate(report.T):
            w.writerow([int(t), arm, _g(report.mean[i, j]), _g(report.ci_lo[i, j]), _g(report.ci_hi[i, j]),
                        _g(report.bound[i, j])])
    return buf.getvalue()


def slopes_csv(report: RateReport) -> str:
    _check(report)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SLOPE_COLUMNS)
    t0 = int(report.T[report.burn_in_index])
    for arm in report.arms:
        s = report.slopes[arm]
        w.writerow([arm, _g(s.slope), _g(s.intercept), _g(s.ci_95[0]), _g(s.ci_95[1]), s.n_points, t0])
    return buf.getvalue()


def _decades(lo: float, hi: float) -> list[int]:
    return list(range(int(math.floor(math.log10(lo))), int(math.ceil(math.log10(hi))) + 1))


def render_svg(report: RateReport, width: int = 640, height: int = 440) -> str:
    """Log-log plot of mean risk per arm with shaded 95% bands."""
    _check(report)
    ml, mr, mt, mb = 70, 150, 20, 50
    pw, ph = width - ml - mr, height - mt - mb
    T = np.asarray(report.T, dtype=float)
    lo = np.where(report.ci_lo > 0, report.ci_lo, report.mean)
    vals = np.concatenate([report.mean.ravel(), lo.ravel(), report.ci_hi.ravel()])
    vals = vals[np.isfinite(vals) & (vals > 0)]
    if vals.size == 0:
        raise ValueError("nothing positive to plot")
    xd = _decades(T.min(), T.max())
    yd = _decades(vals.min(), vals.max())
    x0, x1 = math.log10(T.min()), math.log10(T.max())
    if x1 == x0:
        x1 = x0 + 1
    y0, y1 = yd[0], max(yd[-1], yd[0] + 1)

    def px(t):
        return ml + (math.log10(t) - x0) / (x1 - x0) * pw

    def py(v):
        return mt + (1 - (math.log10(v) - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for e in xd:
        t = 10.0 ** e
        if T.min() <= t <= T.max():
            x = px(t)
            out.append(f'<line x1="{x:.2f}" y1="{mt}" x2="{x:.2f}" y2="{mt + ph}" stroke="#ddd"/>')
            out.append(f'<text x="{x:.2f}" y="{mt + ph + 16}" text-anchor="middle">1e{e}</text>')
    for e in range(y0, y1 + 1):
        y = py(10.0 ** e)
        out.append(f'<line x1="{ml}" y1="{y:.2f}" x2="{ml + pw}" y2="{y:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{ml - 6}" y="{y + 4:.2f}" text-anchor="end">1e{e}</text>')
    out.append(f'<text x="{ml + pw / 2:.2f}" y="{height - 12}" text-anchor="middle">T</text>')
    out.append(f'<text x="16" y="{mt + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2:.2f})">excess risk</text>')
    for i, arm in enumerate(report.arms):
        c = COLORS[i % len(COLORS)]
        ok = np.isfinite(report.mean[i]) & (report.mean[i] > 0)
        ts = T[ok]
        upper = [f"{px(t):.2f},{py(v):.2f}" for t, v in zip(ts, report.ci_hi[i][ok])]
        lower = [f"{px(t):.2f},{py(v):.2f}" for t, v in zip(ts[::-1], lo[i][ok][::-1])]
        out.append(f'<polygon points="{" ".join(upper + lower)}" fill="{c}" fill-opacity="0.2" stroke="none"/>')
        pts = " ".join(f"{px(t):.2f},{py(v):.2f}" for t, v in zip(ts, report.mean[i][ok]))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="2"/>')
        for t, v in zip(ts, report.mean[i][ok]):
            out.append(f'<circle cx="{px(t):.2f}" cy="{py(v):.2f}" r="3" fill="{c}"/>')
        ly = mt + 14 + 18 * i
        s = report.slopes[arm].slope
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 28}" y2="{ly - 4}" '
                   f'stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 32}" y="{ly}">{arm} ({s:.3f})</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def manifest_text(report: RateReport, config_echo: str = "") -> str:
    lines = ["# run manifest", ""]
    lines.append("[config]")
    lines.append(config_echo.strip() if config_echo.strip() else "(defaults)")
    lines += ["", "[run]"]
    for k in sorted(report.meta):
        lines.append(f"{k} = {json.dumps(report.meta[k], sort_keys=True, default=str)}")
    lines.append(f"burn_in_index = {report.burn_in_index}")
    lines.append(f"theory_burn_in_T = {_g(report.theory_burn_in_T)}")
    lines += ["", "[slopes]"]
    for arm in report.arms:
        s = report.slopes[arm]
        lines.append(f"{arm} = {_g(s.slope)} (95% CI {_g(s.ci_95[0])} .. {_g(s.ci_95[1])})")
    lines += ["", "[failures]"]
    lines += [f"T={t} rep={r}: {msg}" for t, r, msg in report.failures] or ["none"]
    lines += ["", "[findings]"]
    lines += list(report.findings) or ["none"]
    lines += ["", "[constants]"]
    lines += [f"{name} = {_g(v)}  # {formula}" for name, v, formula in report.constants] or ["none"]
    return "\n".join(lines) + "\n"


def emit_outputs(report: RateReport, out_dir, config_echo: str = "") -> list[Path]:
    """Write ``rates.csv``, ``slopes.csv``, ``plot.svg`` and ``manifest.txt``; returns the paths."""
    _check(report)
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    files = {
        "rates.csv": rates_csv(report),
        "slopes.csv": slopes_csv(report),
        "plot.svg": render_svg(report),
        "manifest.txt": manifest_text(report, config_echo),
    }
    paths = []
    for name, text in files.items():
        p = d / name
        p.write_text(text)
        paths.append(p)
    return paths
