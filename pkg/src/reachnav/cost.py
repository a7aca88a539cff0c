"""Cost maps consumed by the MPC planner.

``reachability_cost`` combines the two value fields as
``J = TTR + alpha * (ttc_cap - TTC)``.  ``heuristic_cost`` is the distance
based baseline ``max(0, lam1 - d_obs)**3 + lam2 * d_goal**2``, defined on
(x, y) only and broadcast over speed and heading.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import GridMismatchError, InfeasibleError, ValidationError
from .grid import UNREACHABLE, FieldKind, ValueField


class Provenance(enum.Enum):
    REACHABILITY = "reachability"
    HEURISTIC = "heuristic"


class DistanceKind(enum.Enum):
    OBSTACLE_DIST = "obstacle"
    GOAL_DIST = "goal"


@dataclass(frozen=True)
class CostMap:
    field: ValueField
    provenance: Provenance
    params: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.field.grid


@dataclass(frozen=True)
class DistanceField:
    """Distances in meters at the map's cell centers, indexed [ix, iy]."""

    values: np.ndarray
    kind: DistanceKind
    cell_size: float
    sentinel: float = UNREACHABLE


def reachability_cost(ttr, ttc, alpha=30.0, ttc_cap=4.0):
    if ttr.kind is not FieldKind.TTR or ttc.kind is not FieldKind.TTC:
        raise ValidationError("reachability_cost expects a TTR and a TTC field")
    if not ttr.grid.same_as(ttc.grid):
        raise GridMismatchError("TTR and TTC fields live on different grids")
    if np.any(ttc.values > ttc_cap + 1e-9):
        raise ValidationError("TTC values exceed the cap")
    blocked = ttr.values >= ttr.sentinel
    j = ttr.values + alpha * (ttc_cap - ttc.values)
    j[blocked] = ttr.sentinel
    return CostMap(ValueField(ttr.grid, j, FieldKind.COST, ttr.sentinel),
                   Provenance.REACHABILITY, {"alpha": alpha, "ttc_cap": ttc_cap})


def _fast_march(free, seeds, h):
    """First-order fast marching for |grad d| = 1 over free cells.

    ``seeds`` maps (ix, iy) -> known distance; those nodes are frozen.
    """
    nx, ny = free.shape
    d = np.full(free.shape, np.inf)
    done = np.zeros(free.shape, dtype=bool)
    heap = []
    for (i, j), val in seeds.items():
        d[i, j] = val
        heapq.heappush(heap, (val, i, j))

    def axis_min(i, j, di, dj):
        best = np.inf
        for s in (-1, 1):
            a, b = i + s * di, j + s * dj
            if 0 <= a < nx and 0 <= b < ny and done[a, b]:
                best = min(best, d[a, b])
        return best

    while heap:
        val, i, j = heapq.heappop(heap)
        if done[i, j] or val > d[i, j]:
            continue
        done[i, j] = True
        for a, b in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
            if not (0 <= a < nx and 0 <= b < ny) or done[a, b] or not free[a, b]:
                continue
            p = axis_min(a, b, 1, 0)
            q = axis_min(a, b, 0, 1)
            lo, hi = min(p, q), max(p, q)
            if hi - lo >= h:
                cand = lo + h
            else:
                cand = 0.5 * (lo + hi + math.sqrt(2 * h * h - (hi - lo) ** 2))
            if cand < d[a, b]:
                d[a, b] = cand
                heapq.heappush(heap, (cand, a, b))
    return d


def distance_transform(omap, kind, goal=None):
    """Obstacle or goal distance at every cell center of ``omap``.

    OBSTACLE_DIST is the exact Euclidean distance to the nearest occupied cell
    center.  GOAL_DIST is the obstacle-respecting geodesic distance to the goal
    disk boundary; occupied or disconnected cells get the sentinel.
    """
    kind = DistanceKind(kind)
    occ = omap.occupied
    h = omap.cell_size
    if kind is DistanceKind.OBSTACLE_DIST:
        if not occ.any():
            vals = np.full(occ.shape, np.inf)
        else:
            vals = ndimage.distance_transform_edt(~occ) * h
        return DistanceField(vals, kind, h)

    if goal is None:
        raise ValidationError("GOAL_DIST needs a goal")
    X, Y = np.meshgrid(omap.centers(0), omap.centers(1), indexing="ij")
    to_disk = np.hypot(X - goal.x, Y - goal.y) - goal.radius
    free = ~occ
    # exact Euclidean values in a thin band around the disk seed the march
    band = free & (to_disk <= 1.5 * h)
    if not (band & (to_disk <= 0.5 * h)).any():
        raise InfeasibleError("goal disk has no free cell")
    seeds = {(int(i), int(j)): float(max(to_disk[i, j], 0.0)) for i, j in zip(*np.nonzero(band))}
    d = _fast_march(free, seeds, h)
    d[~np.isfinite(d)] = UNREACHABLE
    d[occ] = UNREACHABLE
    return DistanceField(d, kind, h)


def heuristic_cost(d_obs, d_goal, grid, lam1=0.3, lam2=1.0):
    """Heuristic baseline broadcast onto ``grid`` (a read-only view over v, phi)."""
    if d_obs.kind is not DistanceKind.OBSTACLE_DIST or d_goal.kind is not DistanceKind.GOAL_DIST:
        raise ValidationError("heuristic_cost expects obstacle and goal distance fields")
    if lam1 <= 0 or lam2 <= 0:
        raise ValidationError("lam1 and lam2 must be positive")
    shape2d = tuple(grid.shape[:2])
    if d_obs.values.shape != shape2d or d_goal.values.shape != shape2d:
        raise GridMismatchError("distance fields do not match the grid's (x, y) nodes")
    blocked = d_goal.values >= d_goal.sentinel
    c2d = np.maximum(0.0, lam1 - d_obs.values) ** 3 + lam2 * d_goal.values ** 2
    c2d[blocked] = UNREACHABLE
    view = np.broadcast_to(c2d[:, :, None, None], grid.shape)
    return CostMap(ValueField(grid, view, FieldKind.COST), Provenance.HEURISTIC,
                   {"lam1": lam1, "lam2": lam2})


def heuristic_value(d_obs, d_goal, lam1=0.3, lam2=1.0):
    """Pointwise heuristic cost for scalar or array distances."""
    return np.maximum(0.0, lam1 - np.asarray(d_obs)) ** 3 + lam2 * np.asarray(d_goal) ** 2
