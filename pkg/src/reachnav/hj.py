"""Stationary time-to-reach / time-to-collision solver.

Both value functions solve ``H(z, grad T) = 0`` with

    REACH:  max_u min_d { -grad T . f(z, u, d) - 1 }
    AVOID:  min_u max_d { -grad T . f(z, u, d) - 1 }

discretized with the Lax-Friedrichs scheme and solved by Gauss-Seidel
sweeping over the 16 axis orderings of the 4D grid.  The node update is

    T = ( -H(p) + sum_i sigma_i (T_i+ + T_i-) / (2 h_i) ) / sum_i sigma_i / h_i

with central differences p.  In x and y a missing neighbor (grid edge, or
an obstacle cell in the time-to-reach solve) is replaced by its mirror image
across the node, which turns that dimension's stencil into a one-sided
difference into the free region.  With the default "upwind" wall rule a
time-to-reach node next to an obstacle stays at the sentinel when its
worst-case velocity points into that obstacle: the obstacle's infinite value
would enter the update with a positive weight.  That weight includes the
dissipation, so two solves sharing dissipation bounds block the same nodes.  At the speed bounds v = 0 and v = v_max the
acceleration can only point inward, so the one-sided speed term is applied
only when it improves the node value (lower for REACH, higher for AVOID).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numba
import numpy as np

from .dynamics import DynamicsBounds
from .errors import InfeasibleError, NonConvergenceError, ValidationError
from .grid import UNREACHABLE, FieldKind, Grid4D, ValueField

log = logging.getLogger(__name__)

FREE, FIXED, WALL = 0, 1, 2

# bump whenever the discretization changes; part of the value-cache key
SOLVER_REVISION = 2

# binary order of the sign patterns (x, y, v, phi), bit set -> descending sweep
DEFAULT_SCHEDULE = tuple(range(16))


@dataclass(frozen=True)
class GoalSpec:
    x: float
    y: float
    radius: float = 0.3

    def __post_init__(self):
        if self.radius <= 0:
            raise ValidationError("goal radius must be positive")

    def contains(self, x, y):
        return np.hypot(np.asarray(x) - self.x, np.asarray(y) - self.y) <= self.radius


@dataclass(frozen=True)
class SolveConfig:
    tol: float = 1e-3
    max_cycles: int = 500
    ttc_cap: float = 4.0
    # "local": per-node bounds on |dH/dp_i|; "global": one bound per dimension
    scheme: str = "local"
    # bounds used only for the dissipation coefficients; lets two solves with
    # different disturbance levels share one discretization
    dissipation_bounds: DynamicsBounds | None = None
    schedule: tuple = DEFAULT_SCHEDULE
    # time-to-reach nodes next to an obstacle: "upwind" keeps them at the
    # sentinel when the worst-case velocity points into the obstacle,
    # "mirror" always treats the obstacle side as a reflecting edge
    wall_rule: str = "upwind"

    def __post_init__(self):
        if self.tol <= 0 or self.ttc_cap <= 0 or self.max_cycles < 1:
            raise ValidationError("tol, ttc_cap and max_cycles must be positive")
        if self.scheme not in ("local", "global"):
            raise ValidationError(f"unknown dissipation scheme {self.scheme!r}")
        if self.wall_rule not in ("upwind", "mirror"):
            raise ValidationError(f"unknown wall rule {self.wall_rule!r}")
        if sorted(self.schedule) != list(range(16)):
            raise ValidationError("schedule must be a permutation of 0..15")


@dataclass
class SolveReport:
    kind: FieldKind
    cycles: int
    residuals: list = field(default_factory=list)


def dissipation_for(bounds, grid=None, scheme="global"):
    """Bounds on |dH/dp_i| for each dimension, enough for a monotone scheme.

    Returns (sig_x, sig_y, sig_v, sig_phi); with ``scheme="local"`` the x and
    y coefficients are (nv, nphi) arrays using the node's own speed and
    heading instead of the global speed bound.
    """
    sig_v = bounds.a_max
    sig_p = bounds.omega_max + bounds.dphi_max
    if scheme == "global" or grid is None:
        s = bounds.v_max + bounds.dxy_max
        if grid is None:
            return s, s, sig_v, sig_p
        full = np.full((grid.n[2], grid.n[3]), s)
        return full, full.copy(), sig_v, sig_p
    v = grid.axis(2)[:, None]
    phi = grid.axis(3)[None, :]
    sig_x = np.abs(v * np.cos(phi)) + bounds.dxy_max
    sig_y = np.abs(v * np.sin(phi)) + bounds.dxy_max
    return sig_x, sig_y, sig_v, sig_p


def _dominates(wide, narrow):
    return all(getattr(wide, k) >= getattr(narrow, k) - 1e-12
               for k in ("v_max", "a_max", "omega_max", "dxy_max", "dphi_max"))


@numba.njit(cache=True, inline="always")
def _pair(lo_ok, lo, hi_ok, hi, h, sigma):
    # (p, numerator, denominator) contribution of one dimension
    if lo_ok and hi_ok:
        return (hi - lo) / (2.0 * h), sigma * (lo + hi) / (2.0 * h), sigma / h
    if lo_ok:
        return 0.0, sigma * lo / h, sigma / h
    if hi_ok:
        return 0.0, sigma * hi / h, sigma / h
    return 0.0, 0.0, 0.0


@numba.njit(cache=True)
def _sweep(u, status, vnodes, cosp, sinp, h, sig_x, sig_y, sig_v, sig_p, amax, wmax,
           dxy, dphi, reach, cap, far, upwind_walls, order):
    nx, ny, nv, nphi = u.shape
    sx = 1 if (order & 1) == 0 else -1
    sy = 1 if (order & 2) == 0 else -1
    sv = 1 if (order & 4) == 0 else -1
    sp = 1 if (order & 8) == 0 else -1
    hx, hy, hv, hp = h[0], h[1], h[2], h[3]
    change = 0.0
    for kp in range(nphi):
        ip = kp if sp > 0 else nphi - 1 - kp
        c = cosp[ip]
        s = sinp[ip]
        ipu = ip + 1 if ip + 1 < nphi else 0
        ipd = ip - 1 if ip > 0 else nphi - 1
        for kv in range(nv):
            iv = kv if sv > 0 else nv - 1 - kv
            v = vnodes[iv]
            for ky in range(ny):
                iy = ky if sy > 0 else ny - 1 - ky
                for kx in range(nx):
                    ix = kx if sx > 0 else nx - 1 - kx
                    if status[ix, iy] != FREE:
                        continue
                    old = u[ix, iy, iv, ip]
                    if upwind_walls:
                        # the obstacle is an infinite Dirichlet value; it enters
                        # the update iff its coefficient, dissipation plus the
                        # worst-case velocity toward it, is positive
                        ax = sig_x[iv, ip] + dxy
                        ay = sig_y[iv, ip] + dxy
                        vx = v * c
                        vy = v * s
                        if ((ix > 0 and status[ix - 1, iy] == WALL and ax - vx > 1e-12)
                                or (ix < nx - 1 and status[ix + 1, iy] == WALL and ax + vx > 1e-12)
                                or (iy > 0 and status[ix, iy - 1] == WALL and ay - vy > 1e-12)
                                or (iy < ny - 1 and status[ix, iy + 1] == WALL
                                    and ay + vy > 1e-12)):
                            continue
                    # x neighbors
                    lo_ok = ix > 0 and status[ix - 1, iy] != WALL
                    lo = u[ix - 1, iy, iv, ip] if lo_ok else 0.0
                    if lo_ok and lo >= far:
                        lo_ok = False
                    hi_ok = ix < nx - 1 and status[ix + 1, iy] != WALL
                    hi = u[ix + 1, iy, iv, ip] if hi_ok else 0.0
                    if hi_ok and hi >= far:
                        hi_ok = False
                    px, nmx, dnx = _pair(lo_ok, lo, hi_ok, hi, hx, sig_x[iv, ip])
                    # y neighbors
                    lo_ok = iy > 0 and status[ix, iy - 1] != WALL
                    lo = u[ix, iy - 1, iv, ip] if lo_ok else 0.0
                    if lo_ok and lo >= far:
                        lo_ok = False
                    hi_ok = iy < ny - 1 and status[ix, iy + 1] != WALL
                    hi = u[ix, iy + 1, iv, ip] if hi_ok else 0.0
                    if hi_ok and hi >= far:
                        hi_ok = False
                    py, nmy, dny = _pair(lo_ok, lo, hi_ok, hi, hy, sig_y[iv, ip])
                    # v neighbors
                    vlo_ok = iv > 0
                    lo = u[ix, iy, iv - 1, ip] if vlo_ok else 0.0
                    if vlo_ok and lo >= far:
                        vlo_ok = False
                    vhi_ok = iv < nv - 1
                    hi = u[ix, iy, iv + 1, ip] if vhi_ok else 0.0
                    if vhi_ok and hi >= far:
                        vhi_ok = False
                    pv, nmv, dnv = _pair(vlo_ok, lo, vhi_ok, hi, hv, sig_v)
                    # phi neighbors (periodic)
                    lo = u[ix, iy, iv, ipd]
                    hi = u[ix, iy, iv, ipu]
                    pp, nmp, dnp = _pair(lo < far, lo, hi < far, hi, hp, sig_p)

                    den = dnx + dny + dnp
                    if den + dnv == 0.0:
                        continue
                    drift = -v * (px * c + py * s)
                    ctrl = wmax * abs(pp)
                    dist = dxy * np.sqrt(px * px + py * py) + dphi * abs(pp)
                    if reach:
                        ham = drift + ctrl - dist - 1.0
                    else:
                        ham = drift - ctrl + dist - 1.0
                    rest = -ham + nmx + nmy + nmp
                    if vlo_ok and vhi_ok:
                        if reach:
                            rest -= amax * abs(pv)
                        else:
                            rest += amax * abs(pv)
                        new = (rest + nmv) / (den + dnv)
                    elif vlo_ok or vhi_ok:
                        # speed bound: acceleration may only point inward, so
                        # the one-sided term is active only when it helps
                        mirrored = (rest + nmv) / (den + dnv)
                        if den == 0.0:
                            new = mirrored
                        elif reach:
                            new = min(rest / den, mirrored)
                        else:
                            new = max(rest / den, mirrored)
                    else:
                        new = rest / den
                    if new < 0.0:
                        new = 0.0
                    if new > cap:
                        new = cap
                    # absolute below 1 s, relative above (huge near-sentinel values)
                    d = abs(new - old) / max(1.0, abs(new))
                    if d > change:
                        change = d
                    u[ix, iy, iv, ip] = new
    return change


def _xy_nodes(grid):
    return grid.axis(0), grid.axis(1)


def _occupied_on_grid(grid, obstacles):
    """Occupancy sampled at the grid's (x, y) nodes, shape (nx, ny)."""
    xs, ys = _xy_nodes(grid)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.asarray(obstacles.is_occupied(X, Y), dtype=bool)


def goal_mask(grid, goal):
    xs, ys = _xy_nodes(grid)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return goal.contains(X, Y)


def _run(u, status, grid, bounds, cfg, reach, cap, far, kind):
    dbounds = cfg.dissipation_bounds or bounds
    if not _dominates(dbounds, bounds):
        raise ValidationError("dissipation bounds must dominate the dynamics bounds")
    sig_x, sig_y, sig_v, sig_p = dissipation_for(dbounds, grid, cfg.scheme)
    phis = grid.axis(3)
    args = (status.astype(np.int8), grid.axis(2), np.cos(phis), np.sin(phis),
            grid.spacing, np.ascontiguousarray(sig_x), np.ascontiguousarray(sig_y),
            float(sig_v), float(sig_p), bounds.a_max, bounds.omega_max, bounds.dxy_max,
            bounds.dphi_max, reach, cap, far, reach and cfg.wall_rule == "upwind")
    report = SolveReport(kind, 0)
    change = np.inf
    for cycle in range(1, cfg.max_cycles + 1):
        change = 0.0
        for order in cfg.schedule:
            change = max(change, _sweep(u, *args, order))
        report.residuals.append(change)
        report.cycles = cycle
        log.debug("%s cycle %d residual %.3e", kind.name, cycle, change)
        if change < cfg.tol:
            return report
    raise NonConvergenceError(f"{kind.name} sweep did not converge", change, cfg.max_cycles)


def solve_ttr(grid: Grid4D, bounds: DynamicsBounds, goal: GoalSpec, obstacles,
              cfg: SolveConfig = SolveConfig(), return_report=False):
    """Minimum time to reach the goal disk under worst-case disturbance.

    Goal nodes are 0, occupied nodes and nodes that cannot reach the goal carry
    the UNREACHABLE sentinel.
    """
    occ = _occupied_on_grid(grid, obstacles)
    goal2d = goal_mask(grid, goal) & ~occ
    if not goal2d.any():
        raise InfeasibleError("goal disk contains no free grid node")
    status = np.full(occ.shape, FREE, dtype=np.int8)
    status[occ] = WALL
    status[goal2d] = FIXED
    far = 0.5 * UNREACHABLE
    u = np.full(grid.shape, UNREACHABLE)
    u[goal2d] = 0.0
    report = _run(u, status, grid, bounds, cfg, True, np.inf, far, FieldKind.TTR)
    u[u >= 0.5 * UNREACHABLE] = UNREACHABLE
    u[occ] = UNREACHABLE
    vf = ValueField(grid, u, FieldKind.TTR)
    return (vf, report) if return_report else vf


def solve_ttc(grid: Grid4D, bounds: DynamicsBounds, obstacles,
              cfg: SolveConfig = SolveConfig(), return_report=False):
    """Maximum time until collision under worst-case disturbance, capped at ``cfg.ttc_cap``."""
    occ = _occupied_on_grid(grid, obstacles)
    status = np.full(occ.shape, FREE, dtype=np.int8)
    status[occ] = FIXED
    u = np.full(grid.shape, float(cfg.ttc_cap))
    u[occ] = 0.0
    if not occ.any():
        vf = ValueField(grid, u, FieldKind.TTC)
        return (vf, SolveReport(FieldKind.TTC, 0)) if return_report else vf
    report = _run(u, status, grid, bounds, cfg, False, float(cfg.ttc_cap), np.inf,
                  FieldKind.TTC)
    vf = ValueField(grid, u, FieldKind.TTC)
    return (vf, report) if return_report else vf
