"""Seed aggregation, CSV emission and standalone SVG line plots."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from ..errors import DomainError
from ..linear_double_descent import ErrorCurve
from ..scale_time_predictor import TradeoffCurve

TRADEOFF_COLUMNS = ("scale", "min_time", "std_err", "censored")
ERROR_CURVE_COLUMNS = ("x", "total_sq_error", "signal_sq", "noise_sq")
SERIES_COLUMNS = ("x", "mean", "std_err")


@dataclass(frozen=True)
class AggregateSeries:
    x: np.ndarray
    mean: np.ndarray
    std_err: np.ndarray
    label: str = ""

    def __len__(self) -> int:
        return len(self.x)


def aggregate_seeds(per_seed: Sequence[tuple[Sequence[float], Sequence[float]]], label: str = "") -> AggregateSeries:
    """Pointwise mean and standard error (sample SD / sqrt(seeds)).

    ``per_seed`` holds one ``(x, y)`` pair per seed; every x must match.
    """
    if not per_seed:
        raise DomainError("no series to aggregate")
    x0 = np.asarray(per_seed[0][0], dtype=float)
    ys = []
    for x, y in per_seed:
        if not np.array_equal(np.asarray(x, dtype=float), x0):
            raise DomainError("series do not share an x grid")
        ys.append(np.asarray(y, dtype=float))
    Y = np.vstack(ys)
    se = Y.std(axis=0, ddof=1) / math.sqrt(len(ys)) if len(ys) > 1 else np.zeros(len(x0))
    return AggregateSeries(x0, Y.mean(axis=0), se, label)


def fmt(v) -> str:
    """17 significant digits for floats; plain text otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_rows(path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise DomainError(f"row has {len(row)} fields, header has {len(columns)}")
            w.writerow([fmt(v) for v in row])
    return path


def emit_csv(obj, path) -> Path:
    """Write an AggregateSeries, TradeoffCurve or ErrorCurve, rows by ascending x."""
    if isinstance(obj, TradeoffCurve):
        se = obj.std_err if obj.std_err is not None else np.full(len(obj.scales), math.nan)
        order = np.argsort(obj.scales, kind="stable")
        rows = [(obj.scales[i], obj.min_times[i], se[i], bool(obj.censored[i])) for i in order]
        return write_rows(path, TRADEOFF_COLUMNS, rows)
    if isinstance(obj, ErrorCurve):
        order = np.argsort(obj.grid, kind="stable")
        rows = [(obj.grid[i], obj.total_sq_error[i], obj.signal_sq[i], obj.noise_sq[i]) for i in order]
        return write_rows(path, ERROR_CURVE_COLUMNS, rows)
    if isinstance(obj, AggregateSeries):
        order = np.argsort(obj.x, kind="stable")
        return write_rows(path, SERIES_COLUMNS, [(obj.x[i], obj.mean[i], obj.std_err[i]) for i in order])
    raise DomainError(f"cannot emit {type(obj).__name__} as CSV")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return rows[0], rows[1:]


def read_columns(path) -> dict[str, np.ndarray]:
    """Numeric columns of an emitted CSV keyed by header name."""
    header, rows = read_csv(path)
    return {h: np.array([float(r[i]) for r in rows]) for i, h in enumerate(header)}


# --- SVG -------------------------------------------------------------------

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=20, top=30, bottom=50)
PALETTE = ("#b2182b", "#2166ac", "#1b7837", "#762a83", "#e08214", "#4d4d4d")


class _Axes:
    def __init__(self, xs, ys, log_x, log_y):
        self.log_x, self.log_y = log_x, log_y
        fx, fy = self.tx(xs), self.ty(ys)
        self.x0, self.x1 = _pad(fx.min(), fx.max())
        self.y0, self.y1 = _pad(fy.min(), fy.max())
        self.px0, self.px1 = MARGIN["left"], WIDTH - MARGIN["right"]
        self.py0, self.py1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]

    def tx(self, x):
        x = np.asarray(x, dtype=float)
        return np.log10(x) if self.log_x else x

    def ty(self, y):
        y = np.asarray(y, dtype=float)
        return np.log10(y) if self.log_y else y

    def px(self, x):
        return self.px0 + (self.tx(x) - self.x0) / (self.x1 - self.x0) * (self.px1 - self.px0)

    def py(self, y):
        return self.py0 + (self.ty(y) - self.y0) / (self.y1 - self.y0) * (self.py1 - self.py0)


def _pad(lo: float, hi: float) -> tuple[float, float]:
    if hi == lo:
        return lo - 0.5, hi + 0.5
    span = hi - lo
    return lo - 0.05 * span, hi + 0.05 * span


def _points(xs, ys) -> str:
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))


def emit_svg_plot(series: Sequence[AggregateSeries], axes: Mapping, path) -> Path:
    """Standalone line plot: one polyline per series, error bands, optional guide.

    ``axes`` keys: ``log_x``, ``log_y``, ``xlabel``, ``ylabel``, ``title`` and
    ``guide`` (adds a dashed slope -1 line in the plotted coordinates).
    """
    series = [s for s in series if len(s)]
    if not series:
        raise DomainError("nothing to plot")
    log_x, log_y = bool(axes.get("log_x")), bool(axes.get("log_y"))
    xs, ys = [], []
    for s in series:
        finite = np.isfinite(s.mean)
        x, m = s.x[finite], s.mean[finite]
        se = np.nan_to_num(s.std_err[finite])
        lo = m - se
        if log_x and np.any(x <= 0):
            raise DomainError(f"series {s.label!r} has nonpositive x on a log axis")
        if log_y and np.any(m <= 0):
            raise DomainError(f"series {s.label!r} has nonpositive values on a log axis")
        xs.append(x)
        ys.extend([m, m + se] + ([lo] if not log_y or np.all(lo > 0) else []))
    ax = _Axes(np.concatenate(xs), np.concatenate(ys), log_x, log_y)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" data-xlim="{float(ax.x0)!r} {float(ax.x1)!r}" '
        f'data-ylim="{float(ax.y0)!r} {float(ax.y1)!r}" '
        f'data-log="{int(log_x)} {int(log_y)}">',
        f'<rect x="{ax.px0}" y="{ax.py1}" width="{ax.px1 - ax.px0}" height="{ax.py0 - ax.py1}" '
        'fill="white" stroke="black"/>',
    ]
    if axes.get("title"):
        out.append(f'<text x="{WIDTH / 2}" y="18" text-anchor="middle">{escape(str(axes["title"]))}</text>')
    for value, anchor in ((ax.x0, "start"), (ax.x1, "end")):
        label = f"1e{value:.2g}" if log_x else f"{value:.3g}"
        xpix = ax.px0 if anchor == "start" else ax.px1
        out.append(f'<text x="{xpix}" y="{ax.py0 + 16}" text-anchor="{anchor}" font-size="11">{label}</text>')
    for value, ypix in ((ax.y0, ax.py0), (ax.y1, ax.py1 + 10)):
        label = f"1e{value:.2g}" if log_y else f"{value:.3g}"
        out.append(f'<text x="{ax.px0 - 6}" y="{ypix}" text-anchor="end" font-size="11">{label}</text>')
    if axes.get("xlabel"):
        out.append(f'<text x="{(ax.px0 + ax.px1) / 2}" y="{HEIGHT - 12}" text-anchor="middle">'
                   f'{escape(str(axes["xlabel"]))}</text>')
    if axes.get("ylabel"):
        cy = (ax.py0 + ax.py1) / 2
        out.append(f'<text x="16" y="{cy}" text-anchor="middle" transform="rotate(-90 16 {cy})">'
                   f'{escape(str(axes["ylabel"]))}</text>')

    if axes.get("guide"):
        # y = c / x through the centre of the plotted data, clipped to the frame
        cx, cy = (ax.x0 + ax.x1) / 2, (ax.y0 + ax.y1) / 2
        u0 = max(ax.x0, cx - (ax.y1 - cy))
        u1 = min(ax.x1, cx + (cy - ax.y0))
        px = lambda u: ax.px0 + (u - ax.x0) / (ax.x1 - ax.x0) * (ax.px1 - ax.px0)
        py = lambda v: ax.py0 + (v - ax.y0) / (ax.y1 - ax.y0) * (ax.py1 - ax.py0)
        out.append(f'<path class="guide" d="M {px(u0):.4f} {py(cx + cy - u0):.4f} L {px(u1):.4f} '
                   f'{py(cx + cy - u1):.4f}" stroke="#999999" stroke-dasharray="6 4" fill="none"/>')

    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        finite = np.isfinite(s.mean)
        x, m = s.x[finite], s.mean[finite]
        se = np.nan_to_num(s.std_err[finite])
        if np.any(se > 0) and (not log_y or np.all(m - se > 0)):
            upper = _points(ax.px(x), ax.py(m + se))
            lower = _points(ax.px(x[::-1]), ax.py((m - se)[::-1]))
            out.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        out.append(f'<polyline points="{_points(ax.px(x), ax.py(m))}" fill="none" stroke="{color}" '
                   f'stroke-width="2"><title>{escape(s.label)}</title></polyline>')
        out.append(f'<text x="{ax.px1 - 8}" y="{ax.py1 + 16 + 14 * i}" text-anchor="end" font-size="11" '
                   f'fill="{color}">{escape(s.label)}</text>')
    out.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out) + "\n")
    return path
