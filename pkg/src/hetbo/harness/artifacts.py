"""CSV and SVG writers.

CSV files are the canonical artifacts.  Floats are written with ``repr`` so a
rerun with the same seed reproduces them byte for byte; SVG plots are drawn
from the same arrays that go into the CSV next to them.
"""
from __future__ import annotations

import csv
import os
from typing import Sequence

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list, list]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def trace_rows(trace, names, record_wall_time=False):
    """Header and rows of the shared BO / CMA-ES trace schema."""
    n_r = max(len(r.returns) for r in trace)
    header = ["iteration", *names, "y", "best_y", "mu", "sigma", "truncated"]
    header += [f"g{j + 1}" for j in range(n_r)]
    if record_wall_time:
        header.append("wall_time")
    rows = []
    best = -np.inf
    for r in trace:
        best = max(best, r.y)
        row = [r.iteration, *r.x, r.y, best, r.mu, r.sigma, r.truncated, *r.returns]
        row += [""] * (n_r - len(r.returns))
        if record_wall_time:
            row.append(r.wall_time)
        rows.append(row)
    return header, rows


def write_trace(path, trace, names, record_wall_time=False) -> str:
    header, rows = trace_rows(trace, names, record_wall_time)
    return write_csv(path, header, rows)


# -- SVG -----------------------------------------------------------------------


class _Frame:
    def __init__(self, xs, ys, width=640, height=400, margin=50):
        xs = np.concatenate([np.ravel(x) for x in xs])
        ys = np.concatenate([np.ravel(y) for y in ys])
        xs, ys = xs[np.isfinite(xs)], ys[np.isfinite(ys)]
        self.x0, self.x1 = (float(xs.min()), float(xs.max())) if xs.size else (0.0, 1.0)
        self.y0, self.y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.w, self.h, self.m = width, height, margin

    def px(self, x, y):
        u = self.m + (np.asarray(x) - self.x0) / (self.x1 - self.x0) * (self.w - 2 * self.m)
        v = self.h - self.m - (np.asarray(y) - self.y0) / (self.y1 - self.y0) * (self.h - 2 * self.m)
        return u, v

    def points(self, x, y):
        u, v = self.px(x, y)
        return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(u, v) if np.isfinite(a) and np.isfinite(b))

    def axes(self, title, xlabel, ylabel):
        m, w, h = self.m, self.w, self.h
        return [
            f'<rect x="{m}" y="{m}" width="{w - 2 * m}" height="{h - 2 * m}" fill="none" stroke="#444"/>',
            f'<text x="{w / 2}" y="{m / 2}" text-anchor="middle" font-size="14">{title}</text>',
            f'<text x="{w / 2}" y="{h - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
            f'<text x="12" y="{h / 2}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 12 {h / 2})">{ylabel}</text>',
            f'<text x="{m}" y="{h - m + 15}" font-size="10">{self.x0:.4g}</text>',
            f'<text x="{w - m}" y="{h - m + 15}" text-anchor="end" font-size="10">{self.x1:.4g}</text>',
            f'<text x="{m - 4}" y="{h - m}" text-anchor="end" font-size="10">{self.y0:.4g}</text>',
            f'<text x="{m - 4}" y="{m + 10}" text-anchor="end" font-size="10">{self.y1:.4g}</text>',
        ]


def _wrap(frame, body) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{frame.w}" height="{frame.h}" '
        f'viewBox="0 0 {frame.w} {frame.h}">\n' + "\n".join(body) + "\n</svg>\n"
    )


def band_plot(path, x, series, title="", xlabel="", ylabel="", scatter=None) -> str:
    """Lines with shaded bands.

    ``series`` is a list of ``(label, centre, lower, upper)``; ``scatter`` an
    optional ``(x, y)`` overlay of raw samples.
    """
    x = np.asarray(x, dtype=np.float64)
    ys = [np.asarray(v) for _, c, lo, hi in series for v in (c, lo, hi)]
    xs = [x]
    if scatter is not None and len(scatter[0]):
        xs.append(np.asarray(scatter[0]))
        ys.append(np.asarray(scatter[1]))
    frame = _Frame(xs, ys)
    body = frame.axes(title, xlabel, ylabel)
    if scatter is not None and len(scatter[0]):
        u, v = frame.px(np.asarray(scatter[0]), np.asarray(scatter[1]))
        body += [f'<circle cx="{a:.2f}" cy="{b:.2f}" r="1.5" fill="#888"/>' for a, b in zip(u, v)]
    for k, (label, c, lo, hi) in enumerate(series):
        col = PALETTE[k % len(PALETTE)]
        poly = frame.points(np.concatenate([x, x[::-1]]), np.concatenate([np.asarray(hi), np.asarray(lo)[::-1]]))
        body.append(f'<polygon points="{poly}" fill="{col}" fill-opacity="0.2" stroke="none"/>')
        body.append(f'<polyline points="{frame.points(x, c)}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        body.append(f'<text x="{frame.w - frame.m - 5}" y="{frame.m + 15 + 14 * k}" text-anchor="end" '
                    f'font-size="11" fill="{col}">{label}</text>')
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(_wrap(frame, body))
    return path
