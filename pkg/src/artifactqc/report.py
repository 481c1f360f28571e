"""Report artifacts: records CSV, metrics JSON and a plain SVG 1.1 scatter.

The decision contour is traced with marching squares over a log-density
grid; every emitted vertex is then refined by bisection along its grid
edge until the density residual drops below CONTOUR_TOL, so the polyline
genuinely lies on the calibrated iso-line.
"""

from __future__ import annotations

import csv
import json
import os
from typing import Callable, Sequence

import numpy as np

CONTOUR_TOL = 1e-4          # |log_density - cutoff| at emitted vertices
CONTOUR_GRID = 120
LABEL_COLORS = {
    "low": "#2f9e44",
    "medium": "#f08c00",
    "high": "#d6336c",
    None: "#868e96",
}


def write_records_csv(records, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["volume_id", "m1", "m2", "log_density", "verdict", "label"])
        for r in records:
            writer.writerow(
                [
                    r.volume_id,
                    format(r.m1, ".12g"),
                    format(r.m2, ".12g"),
                    format(r.log_density, ".12g"),
                    r.verdict,
                    r.label if r.label is not None else "",
                ]
            )


def write_metrics_json(metrics, calibration, path: str | os.PathLike) -> None:
    payload = {
        "sensitivity": None,
        "specificity": None,
        "tp": None,
        "fp": None,
        "tn": None,
        "fn": None,
        "tau": calibration.tau,
        "cutoff_log_density": calibration.log_density_cutoff,
    }
    if metrics is not None:
        payload.update(
            {
                "sensitivity": metrics.sensitivity,
                "specificity": metrics.specificity,
                "tp": metrics.tp,
                "fp": metrics.fp,
                "tn": metrics.tn,
                "fn": metrics.fn,
            }
        )
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def padded_bounds(points: np.ndarray, margin: float = 0.25) -> tuple[float, float, float, float]:
    """(x_min, x_max, y_min, y_max) of the points, padded by a relative margin."""
    x_min, y_min = points.min(axis=0)
    x_max, y_max = points.max(axis=0)
    dx = max(x_max - x_min, 1e-6)
    dy = max(y_max - y_min, 1e-6)
    return (
        float(x_min - margin * dx),
        float(x_max + margin * dx),
        float(y_min - margin * dy),
        float(y_max + margin * dy),
    )


def _refine_crossings(
    fn: Callable[[np.ndarray], np.ndarray],
    p_lo: np.ndarray,
    p_hi: np.ndarray,
    f_lo: np.ndarray,
    level: float,
    tol: float,
) -> np.ndarray:
    """Bisect each (p_lo, p_hi) bracket until |f - level| < tol at the midpoint."""
    lo = p_lo.astype(np.float64).copy()
    hi = p_hi.astype(np.float64).copy()
    g_lo = f_lo - level
    mid = 0.5 * (lo + hi)
    for _ in range(100):
        g_mid = fn(mid) - level
        done = np.abs(g_mid) < tol
        if done.all():
            break
        same_side = (g_mid > 0) == (g_lo > 0)
        lo = np.where(same_side[:, None], mid, lo)
        g_lo = np.where(same_side, g_mid, g_lo)
        hi = np.where(same_side[:, None], hi, mid)
        mid = np.where(done[:, None], mid, 0.5 * (lo + hi))
    return mid


def trace_contour(
    fn: Callable[[np.ndarray], np.ndarray],
    bounds: tuple[float, float, float, float],
    level: float,
    grid: int = CONTOUR_GRID,
    tol: float = CONTOUR_TOL,
) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Marching-squares segments of the iso-line fn == level inside bounds."""
    x_min, x_max, y_min, y_max = bounds
    xs = np.linspace(x_min, x_max, grid)
    ys = np.linspace(y_min, y_max, grid)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    values = fn(pts).reshape(grid, grid)
    above = values > level

    # Crossing points on x-direction edges (i,j)-(i+1,j) and y-direction
    # edges (i,j)-(i,j+1), refined against the true field.
    def edge_points(axis: int) -> dict[tuple[int, int], np.ndarray]:
        if axis == 0:
            mask = above[:-1, :] != above[1:, :]
            idx = np.argwhere(mask)
            p0 = np.stack([xs[idx[:, 0]], ys[idx[:, 1]]], axis=1)
            p1 = np.stack([xs[idx[:, 0] + 1], ys[idx[:, 1]]], axis=1)
        else:
            mask = above[:, :-1] != above[:, 1:]
            idx = np.argwhere(mask)
            p0 = np.stack([xs[idx[:, 0]], ys[idx[:, 1]]], axis=1)
            p1 = np.stack([xs[idx[:, 0]], ys[idx[:, 1] + 1]], axis=1)
        f0 = values[idx[:, 0], idx[:, 1]] if idx.size else np.empty(0)
        if idx.size == 0:
            return {}
        refined = _refine_crossings(fn, p0, p1, f0, level, tol)
        return {tuple(k): refined[row] for row, k in enumerate(map(tuple, idx))}

    x_cross = edge_points(0)
    y_cross = edge_points(1)

    segments = []
    for i in range(grid - 1):
        for j in range(grid - 1):
            cell = []
            if (i, j) in x_cross:
                cell.append(x_cross[(i, j)])          # bottom edge
            if (i, j + 1) in x_cross:
                cell.append(x_cross[(i, j + 1)])      # top edge
            if (i, j) in y_cross:
                cell.append(y_cross[(i, j)])          # left edge
            if (i + 1, j) in y_cross:
                cell.append(y_cross[(i + 1, j)])      # right edge
            if len(cell) == 2:
                segments.append((tuple(cell[0]), tuple(cell[1])))
            elif len(cell) == 4:
                segments.append((tuple(cell[0]), tuple(cell[2])))
                segments.append((tuple(cell[1]), tuple(cell[3])))
    return segments


def render_scatter_svg(
    records,
    segments: Sequence[tuple[tuple[float, float], tuple[float, float]]],
    bounds: tuple[float, float, float, float],
    calibration,
    path: str | os.PathLike,
    size: int = 640,
    pad: int = 56,
) -> None:
    x_min, x_max, y_min, y_max = bounds
    span = size - 2 * pad

    def to_px(x: float, y: float) -> tuple[float, float]:
        px = pad + span * (x - x_min) / (x_max - x_min)
        py = pad + span * (y_max - y) / (y_max - y_min)
        return px, py

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
        f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" '
        'fill="none" stroke="#333" stroke-width="1"/>',
        f'<text x="{pad}" y="{pad - 14}" font-family="monospace" font-size="13">'
        f"embeddings (tau={calibration.tau:g}, cutoff={calibration.log_density_cutoff:.4g})</text>",
    ]
    for (ax, ay), (bx, by) in segments:
        x1, y1 = to_px(ax, ay)
        x2, y2 = to_px(bx, by)
        parts.append(
            f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
            'stroke="#1c6dd0" stroke-width="1.4" stroke-dasharray="5,3"/>'
        )
    for r in records:
        cx, cy = to_px(r.m1, r.m2)
        fill = LABEL_COLORS.get(r.label, LABEL_COLORS[None])
        stroke = ' stroke="black" stroke-width="1.6"' if r.verdict == "fail" else ""
        parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="3.4" fill="{fill}"{stroke}/>')
    legend = [
        ("low", LABEL_COLORS["low"]),
        ("medium", LABEL_COLORS["medium"]),
        ("high", LABEL_COLORS["high"]),
        ("unlabeled", LABEL_COLORS[None]),
    ]
    ly = pad + 14
    for text, color in legend:
        parts.append(f'<circle cx="{size - pad - 110}" cy="{ly - 4}" r="4" fill="{color}"/>')
        parts.append(
            f'<text x="{size - pad - 98}" y="{ly}" font-family="monospace" font-size="12">'
            f"{text}</text>"
        )
        ly += 16
    parts.append(
        f'<text x="{size - pad - 110}" y="{ly + 2}" font-family="monospace" font-size="12">'
        "outline = fail</text>"
    )
    parts.append(
        f'<text x="{pad}" y="{size - pad + 28}" font-family="monospace" font-size="12">'
        f"m1 in [{x_min:.3g}, {x_max:.3g}], m2 in [{y_min:.3g}, {y_max:.3g}]; "
        "dashed = decision contour</text>"
    )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")
