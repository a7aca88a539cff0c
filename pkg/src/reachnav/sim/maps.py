"""Synthetic closed-world scenes: corridor, doorway, cluttered and maze.

Every generator is a pure function of (params, seed).  ``generate_task``
also picks a start pose and a goal disk in free space for the scene.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..dynamics import VehicleState
from ..errors import ValidationError
from ..hj import GoalSpec
from ..occupancy import OccupancyMap

KINDS = ("corridor", "doorway", "cluttered", "maze")

DEFAULTS = {
    "corridor": {"nx": 40, "ny": 40, "width": 1.0},
    "doorway": {"nx": 40, "ny": 40, "width": 0.6, "wall": 0.2},
    "cluttered": {"nx": 40, "ny": 40, "n": 4, "min_side": 0.2, "max_side": 0.6},
    "maze": {"nx": 41, "ny": 41, "width": 0.7},
}


@dataclass(frozen=True)
class Task:
    kind: str
    seed: int
    map: OccupancyMap
    start: VehicleState
    goal: GoalSpec


def _params(kind, params):
    if kind not in KINDS:
        raise ValidationError(f"unknown map kind {kind!r}; expected one of {KINDS}")
    out = dict(DEFAULTS[kind])
    for k, v in (params or {}).items():
        if k not in out and k not in ("cell_size", "robot_diameter", "goal_radius"):
            raise ValidationError(f"unknown {kind} parameter {k!r}")
        out[k] = v
    out.setdefault("cell_size", 0.1)
    out.setdefault("robot_diameter", 0.2)
    out.setdefault("goal_radius", 0.3)
    return out


def _closed(nx, ny):
    occ = np.zeros((nx, ny), dtype=bool)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    return occ


def _cells(length, h):
    return max(1, int(round(length / h)))


def _connected(occ, a, b):
    lab, _ = ndimage.label(~occ)
    return lab[a] != 0 and lab[a] == lab[b]


def _corridor(p, rng):
    nx, ny, h = p["nx"], p["ny"], p["cell_size"]
    w = _cells(p["width"], h)
    if w + 2 > ny - 2:
        raise ValidationError("corridor wider than the map")
    occ = np.ones((nx, ny), dtype=bool)
    lo = int(rng.integers(1, ny - 1 - w + 1))
    occ[1:-1, lo:lo + w] = False
    mid = lo + w // 2
    return occ, (2, mid), (nx - 3, mid)


def _doorway(p, rng):
    nx, ny, h = p["nx"], p["ny"], p["cell_size"]
    occ = _closed(nx, ny)
    gap = _cells(p["width"], h)
    thick = _cells(p["wall"], h)
    if gap > ny - 4:
        raise ValidationError("doorway wider than the wall")
    x0 = nx // 2 - thick // 2
    g0 = int(rng.integers(2, ny - 2 - gap + 1))
    occ[x0:x0 + thick, :] = True
    occ[x0:x0 + thick, g0:g0 + gap] = False
    return occ, None, None


def _cluttered(p, rng):
    nx, ny, h = p["nx"], p["ny"], p["cell_size"]
    n = int(p["n"])
    smin, smax = _cells(p["min_side"], h), _cells(p["max_side"], h)
    margin = _cells(p["robot_diameter"], h)
    start, goal = (4, ny // 2), (nx - 5, ny // 2)
    keep = 6  # keep the start and goal neighborhoods clear
    for _ in range(200):
        occ = _closed(nx, ny)
        taken = np.zeros_like(occ)
        placed = 0
        for _ in range(50 * n):
            if placed == n:
                break
            w, hgt = rng.integers(smin, smax + 1, size=2)
            # stay off the border so every rectangle is its own component
            i = int(rng.integers(1 + margin, nx - 1 - margin - w + 1))
            j = int(rng.integers(1 + margin, ny - 1 - margin - hgt + 1))
            box = (slice(max(i - margin, 0), i + w + margin),
                   slice(max(j - margin, 0), j + hgt + margin))
            if taken[box].any():
                continue
            near = [abs(i + w / 2 - c[0]) < keep + w / 2 and abs(j + hgt / 2 - c[1]) < keep + hgt / 2
                    for c in (start, goal)]
            if any(near):
                continue
            occ[i:i + w, j:j + hgt] = True
            taken[box] = True
            placed += 1
        if placed == n and _connected(occ, start, goal):
            return occ, start, goal
    raise ValidationError(f"could not place {n} separated obstacles with a free path")


def _maze(p, rng):
    nx, ny, h = p["nx"], p["ny"], p["cell_size"]
    w = _cells(p["width"], h)
    pitch = w + 1
    cx, cy = (nx - 1) // pitch, (ny - 1) // pitch
    if cx < 2 or cy < 2:
        raise ValidationError("maze corridors too wide for the map")
    occ = np.ones((nx, ny), dtype=bool)

    def carve(a, b):
        occ[1 + a * pitch:1 + a * pitch + w, 1 + b * pitch:1 + b * pitch + w] = False

    seen = np.zeros((cx, cy), dtype=bool)
    stack = [(0, 0)]
    seen[0, 0] = True
    carve(0, 0)
    while stack:
        a, b = stack[-1]
        nbrs = [(a + da, b + db) for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1))
                if 0 <= a + da < cx and 0 <= b + db < cy and not seen[a + da, b + db]]
        if not nbrs:
            stack.pop()
            continue
        na, nb = nbrs[int(rng.integers(len(nbrs)))]
        seen[na, nb] = True
        carve(na, nb)
        # open the wall between the two cells
        i0 = 1 + min(a, na) * pitch
        j0 = 1 + min(b, nb) * pitch
        if na != a:
            occ[i0 + w, j0:j0 + w] = False
        else:
            occ[i0:i0 + w, j0 + w] = False
        stack.append((na, nb))
    start = (1 + w // 2, 1 + w // 2)
    goal = (1 + (cx - 1) * pitch + w // 2, 1 + (cy - 1) * pitch + w // 2)
    return occ, start, goal


_GEN = {"corridor": _corridor, "doorway": _doorway, "cluttered": _cluttered, "maze": _maze}


def _build(kind, params, seed):
    p = _params(kind, params)
    if kind in ("corridor", "doorway", "maze") and p["width"] <= p["robot_diameter"]:
        raise ValidationError("opening must be wider than the robot")
    rng = np.random.default_rng(seed)
    occ, start, goal = _GEN[kind](p, rng)
    return p, rng, OccupancyMap(occ, p["cell_size"]), start, goal


def generate_map(kind, params=None, seed=0):
    """Deterministic closed occupancy map of the given kind."""
    return _build(kind, params, seed)[2]


def _free_cell(omap, rng, xrange, clearance):
    """Random free cell with x index in ``xrange`` and obstacle clearance >= ``clearance`` m."""
    d = ndimage.distance_transform_edt(~omap.occupied) * omap.cell_size
    ok = d >= clearance
    ok[: xrange[0]] = False
    ok[xrange[1]:] = False
    idx = np.argwhere(ok)
    if len(idx) == 0:
        raise ValidationError("no free cell with the required clearance")
    return tuple(int(c) for c in idx[int(rng.integers(len(idx)))])


def generate_task(kind, params=None, seed=0):
    """Map plus a start state at rest and a goal disk, connected through free space."""
    p, rng, omap, start, goal = _build(kind, params, seed)
    nx = omap.shape[0]
    if kind == "doorway":
        clear = p["goal_radius"] + 0.1
        start = _free_cell(omap, rng, (2, nx // 2 - 6), clear)
        goal = _free_cell(omap, rng, (nx // 2 + 6, nx - 2), clear)
    if not _connected(omap.occupied, start, goal):
        raise ValidationError("start and goal are not connected")
    xs, ys = omap.centers(0), omap.centers(1)
    sx, sy = xs[start[0]], ys[start[1]]
    gx, gy = xs[goal[0]], ys[goal[1]]
    phi = float(rng.uniform(-np.pi / 4, np.pi / 4)) if kind == "doorway" else 0.0
    if kind == "maze":
        phi = 0.0 if not omap.is_occupied(sx + 0.3 + p["width"] / 2, sy) else np.pi / 2
    return Task(kind, seed, omap, VehicleState(float(sx), float(sy), 0.0, phi),
                GoalSpec(float(gx), float(gy), p["goal_radius"]))
