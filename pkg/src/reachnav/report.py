"""File outputs: CSV with provenance headers, SVG overlays, optional PNG figures.

The SVG writer is a few lines of string formatting (rectangles for occupied
runs, polylines for paths).  PNG figures need matplotlib, which is an
optional extra; without it the figure helpers return None.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def write_csv(path, columns, rows, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def fmt(x, digits=6):
    return f"{x:.{digits}f}"


def _occupied_runs(omap):
    """Horizontal runs of occupied cells as (ix, iy, length)."""
    occ = omap.occupied
    runs = []
    for iy in range(occ.shape[1]):
        col = occ[:, iy]
        ix = 0
        while ix < len(col):
            if col[ix]:
                start = ix
                while ix < len(col) and col[ix]:
                    ix += 1
                runs.append((start, iy, ix - start))
            else:
                ix += 1
    return runs


def svg_overlay(path, omap, paths, goal=None, scale=100.0, header_lines=()):
    """Map with named paths; ``paths`` maps a label to an (n, >=2) array of positions."""
    x0, x1, y0, y1 = omap.extent
    W, H = (x1 - x0) * scale, (y1 - y0) * scale

    def px(x, y):
        return (x - x0) * scale, (y1 - y) * scale

    h = omap.cell_size * scale
    out = ['<?xml version="1.0" encoding="UTF-8"?>']
    for line in header_lines:
        out.append(f"<!-- {line} -->")
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.1f}" height="{H:.1f}" '
               f'viewBox="0 0 {W:.1f} {H:.1f}">')
    out.append(f'<rect x="0" y="0" width="{W:.1f}" height="{H:.1f}" fill="white"/>')
    for ix, iy, n in _occupied_runs(omap):
        cx = x0 + ix * omap.cell_size
        cy = y0 + (iy + 1) * omap.cell_size
        sx, sy = px(cx, cy)
        out.append(f'<rect x="{sx:.1f}" y="{sy:.1f}" width="{n * h:.1f}" height="{h:.1f}" '
                   f'fill="#444"/>')
    if goal is not None:
        gx, gy = px(goal.x, goal.y)
        out.append(f'<circle cx="{gx:.1f}" cy="{gy:.1f}" r="{goal.radius * scale:.1f}" '
                   f'fill="none" stroke="#2ca02c" stroke-width="2"/>')
    for k, (label, pts) in enumerate(paths.items()):
        pts = np.asarray(pts)
        coords = " ".join("{:.1f},{:.1f}".format(*px(x, y)) for x, y in pts[:, :2])
        color = PALETTE[k % len(PALETTE)]
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                   f'stroke-width="2"><title>{label}</title></polyline>')
        lx, ly = 5, 15 + 15 * k
        out.append(f'<text x="{lx}" y="{ly}" font-size="12" fill="{color}">{label}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def _pyplot():
    try:
        import matplotlib
    except ImportError:
        return None
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _save(fig, path):
    # no software/date metadata so repeated runs are byte-identical
    fig.savefig(path, dpi=100, metadata={"Software": None})


def plot_overlay(path, omap, paths, goal=None):
    plt = _pyplot()
    if plt is None:
        return None
    x0, x1, y0, y1 = omap.extent
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(omap.occupied.T, origin="lower", extent=(x0, x1, y0, y1), cmap="Greys",
              vmin=0, vmax=1.5)
    for k, (label, pts) in enumerate(paths.items()):
        pts = np.asarray(pts)
        ax.plot(pts[:, 0], pts[:, 1], color=PALETTE[k % len(PALETTE)], label=label)
    if goal is not None:
        ax.add_patch(plt.Circle((goal.x, goal.y), goal.radius, fill=False, color="#2ca02c"))
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(loc="upper right", fontsize=8)
    _save(fig, path)
    plt.close(fig)
    return path


def plot_success(path, rows):
    """Bar chart of success rate per (variant, frequency) row."""
    plt = _pyplot()
    if plt is None:
        return None
    fig, ax = plt.subplots(figsize=(6, 3.5))
    freqs = sorted({hz for hz, _, _ in rows})
    variants = list(dict.fromkeys(v for _, v, _ in rows))
    width = 0.8 / max(1, len(variants))
    for k, var in enumerate(variants):
        vals = [next((m.success_rate for hz, v, m in rows if hz == f and v == var), np.nan)
                for f in freqs]
        ax.bar(np.arange(len(freqs)) + k * width, vals, width, label=var,
               color=PALETTE[k % len(PALETTE)])
    ax.set_xticks(np.arange(len(freqs)) + 0.4 - width / 2)
    ax.set_xticklabels([f"{f:g} Hz" for f in freqs])
    ax.set_ylabel("success [%]")
    ax.set_ylim(0, 100)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)
    return path
