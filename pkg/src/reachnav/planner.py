"""Sampling MPC over a local waypoint grid with cubic flat-output splines.

Each candidate waypoint gets a cubic Hermite curve per flat output (x, y) on
normalized time s in [0, 1], matching the current pose and speed at s = 0
and the waypoint pose with a terminal speed at s = 1.  Speed, heading, turn
rate and acceleration follow from the derivatives of the flat outputs.
Infeasible candidates are dropped and the remaining one with the smallest
summed cost-map value along its samples wins.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dynamics import DynamicsBounds, VehicleState
from .errors import PlanningFailure, ValidationError
from .grid import interpolate_many, wrap_angle

_VMIN = 1e-9
_ROUND = 1e-12  # relative allowance for rounding in the bound checks


class Frame(enum.Enum):
    EGOCENTRIC = "ego"
    WORLD = "world"


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float
    theta: float
    frame: Frame = Frame.WORLD

    def __post_init__(self):
        object.__setattr__(self, "theta", float(wrap_angle(self.theta)))

    def as_array(self):
        return np.array([self.x, self.y, self.theta])


def ego_to_world(points, pose):
    """Egocentric (x, y, theta) rows -> world frame, for pose (x, y, phi)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    px, py, phi = pose[0], pose[1], pose[-1]
    c, s = np.cos(phi), np.sin(phi)
    out = np.empty_like(pts)
    out[:, 0] = px + c * pts[:, 0] - s * pts[:, 1]
    out[:, 1] = py + s * pts[:, 0] + c * pts[:, 1]
    out[:, 2] = wrap_angle(pts[:, 2] + phi)
    return out


def world_to_ego(points, pose):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    px, py, phi = pose[0], pose[1], pose[-1]
    c, s = np.cos(phi), np.sin(phi)
    dx, dy = pts[:, 0] - px, pts[:, 1] - py
    out = np.empty_like(pts)
    out[:, 0] = c * dx + s * dy
    out[:, 1] = -s * dx + c * dy
    out[:, 2] = wrap_angle(pts[:, 2] - phi)
    return out


@dataclass(frozen=True)
class PlannerConfig:
    forward: tuple = (0.1, 1.0)
    n_forward: int = 10
    lateral: tuple = (-0.6, 0.6)
    n_lateral: int = 9
    heading: tuple = (-np.pi / 2, np.pi / 2)
    n_heading: int = 7
    horizon: float = 1.5
    dt: float = 0.05
    # "chord": speed making a straight segment a constant-acceleration ramp;
    # "hold": keep the start speed; "search": try n_speed levels per waypoint
    terminal_speed: str = "search"
    speed_floor: float = 0.1  # fraction of v_max
    n_speed: int = 4

    def __post_init__(self):
        if self.forward[0] <= 0 or self.forward[1] < self.forward[0]:
            raise ValidationError("forward range must be positive and ordered")
        if min(self.n_forward, self.n_lateral, self.n_heading) < 1:
            raise ValidationError("waypoint grid counts must be >= 1")
        if self.horizon <= 0 or self.dt <= 0:
            raise ValidationError("horizon and dt must be positive")
        n = self.horizon / self.dt
        if abs(n - round(n)) > 1e-9:
            raise ValidationError("horizon must be a whole number of dt steps")
        if self.n_speed < 1:
            raise ValidationError("n_speed must be >= 1")
        if self.terminal_speed not in ("chord", "hold", "search"):
            raise ValidationError(f"unknown terminal speed rule {self.terminal_speed!r}")

    @property
    def steps(self):
        return int(round(self.horizon / self.dt))


@dataclass(frozen=True)
class SplineTrajectory:
    horizon: float
    dt: float
    states: np.ndarray  # (N+1, 4): x, y, v, phi
    controls: np.ndarray  # (N+1, 2): a, omega
    coeffs: np.ndarray  # (2, 4): power-basis coefficients of x(s), y(s)

    @property
    def steps(self):
        return len(self.states) - 1

    @property
    def times(self):
        return self.dt * np.arange(len(self.states))

    def flat_outputs(self, s):
        """Evaluate x(s), y(s) and their first two time derivatives."""
        s = np.asarray(s, dtype=float)
        c = self.coeffs
        H = self.horizon
        pos = c[:, 0, None] + s * (c[:, 1, None] + s * (c[:, 2, None] + s * c[:, 3, None]))
        vel = (c[:, 1, None] + s * (2 * c[:, 2, None] + 3 * s * c[:, 3, None])) / H
        acc = (2 * c[:, 2, None] + 6 * s * c[:, 3, None]) / H ** 2
        return pos, vel, acc


def _hermite_coeffs(p0, t0, p1, t1):
    c2 = 3 * (p1 - p0) - 2 * t0 - t1
    c3 = 2 * (p0 - p1) + t0 + t1
    return np.stack([p0, t0, c2, c3], axis=-1)


def _splines(start, wps, v_end, horizon, steps):
    """Batched spline fit; wps is (M, 3) in the world frame.

    Returns states (M, N+1, 4), controls (M, N+1, 2), coeffs (M, 2, 4).
    """
    x0, y0, v0, phi0 = (float(c) for c in start)
    H = horizon
    m = len(wps)
    t0 = H * v0 * np.array([np.cos(phi0), np.sin(phi0)])
    t1 = H * v_end[:, None] * np.stack([np.cos(wps[:, 2]), np.sin(wps[:, 2])], axis=1)
    cx = _hermite_coeffs(np.full(m, x0), np.full(m, t0[0]), wps[:, 0], t1[:, 0])
    cy = _hermite_coeffs(np.full(m, y0), np.full(m, t0[1]), wps[:, 1], t1[:, 1])
    s = np.linspace(0.0, 1.0, steps + 1)

    def ev(c, k):
        if k == 0:
            return c[:, 0, None] + s * (c[:, 1, None] + s * (c[:, 2, None] + s * c[:, 3, None]))
        if k == 1:
            return (c[:, 1, None] + s * (2 * c[:, 2, None] + 3 * s * c[:, 3, None])) / H
        return (2 * c[:, 2, None] + 6 * s * c[:, 3, None]) / H ** 2

    x, y = ev(cx, 0), ev(cy, 0)
    xd, yd = ev(cx, 1), ev(cy, 1)
    xdd, ydd = ev(cx, 2), ev(cy, 2)
    speed = np.hypot(xd, yd)
    moving = speed > _VMIN
    safe = np.where(moving, speed, 1.0)
    phi = np.where(moving, np.arctan2(yd, xd), np.nan)
    omega = np.where(moving, (xd * ydd - yd * xdd) / safe ** 2, np.nan)
    acc = np.where(moving, (xd * xdd + yd * ydd) / safe, np.hypot(xdd, ydd))

    # at rest the heading is the start heading; turn rate from the next sample
    still = ~moving
    if still.any():
        phi[:, 0] = np.where(still[:, 0], phi0, phi[:, 0])
        for i in range(1, steps + 1):
            phi[:, i] = np.where(still[:, i], phi[:, i - 1], phi[:, i])
        dphi = wrap_angle(np.diff(phi, axis=1)) * (steps / H)
        fill = np.concatenate([dphi, dphi[:, -1:]], axis=1)
        omega = np.where(still, fill, omega)
    # exact boundary conditions
    x[:, 0], y[:, 0], phi[:, 0] = x0, y0, phi0 if v0 <= _VMIN else phi[:, 0]
    x[:, -1], y[:, -1] = wps[:, 0], wps[:, 1]
    phi[:, -1] = wps[:, 2]
    speed[:, 0], speed[:, -1] = v0, v_end
    states = np.stack([x, y, speed, wrap_angle(phi)], axis=-1)
    controls = np.stack([acc, omega], axis=-1)
    return states, controls, np.stack([cx, cy], axis=1)


def fit_spline(start, waypoint, horizon, dt, terminal_speed):
    """Cubic flat-output spline from ``start`` to a world-frame waypoint."""
    if horizon <= 0 or dt <= 0:
        raise ValidationError("horizon and dt must be positive")
    if terminal_speed <= 0:
        raise ValidationError("terminal speed must be positive")
    if isinstance(waypoint, Waypoint):
        if waypoint.frame is not Frame.WORLD:
            raise ValidationError("fit_spline expects a world-frame waypoint")
        wp = waypoint.as_array()
    else:
        wp = np.asarray(waypoint, dtype=float)
    start = np.asarray(start, dtype=float)
    if (np.hypot(wp[0] - start[0], wp[1] - start[1]) < 1e-9
            and abs(wrap_angle(wp[2] - start[3])) < 1e-9):
        raise ValidationError("start pose equals the waypoint: zero-length trajectory")
    steps = int(round(horizon / dt))
    states, controls, coeffs = _splines(start, wp[None, :], np.array([float(terminal_speed)]),
                                        horizon, steps)
    return SplineTrajectory(horizon, horizon / steps, states[0], controls[0], coeffs[0])


def _feasible_mask(states, controls, dt, bounds):
    v = states[..., 2]
    a, w = controls[..., 0], controls[..., 1]
    r = 1.0 + _ROUND
    ok = (v >= 0) & (v <= bounds.v_max * r) & (np.abs(w) <= bounds.omega_max * r) \
        & (np.abs(a) <= bounds.a_max * r)
    # a cusp (the path reversing through zero speed) flips the heading between
    # samples while the flat-output turn rate stays small
    turn = np.abs(wrap_angle(np.diff(states[..., 3], axis=-1)))
    return ok.all(axis=-1) & (turn <= bounds.omega_max * dt * r).all(axis=-1)


def check_feasibility(traj, bounds):
    """True iff every sample satisfies the speed, turn-rate and acceleration bounds.

    The check is strict up to floating-point rounding (relative 1e-12), so a
    speed of v_max + 1e-9 is rejected.
    """
    return bool(_feasible_mask(traj.states[None], traj.controls[None], traj.dt, bounds)[0])


def sample_waypoint_grid(state, cfg):
    """Forward x lateral x heading product in the robot frame, mapped to world.

    Enumeration order (forward outermost, heading innermost) fixes tie-breaks.
    """
    f = np.linspace(*cfg.forward, cfg.n_forward) if cfg.n_forward > 1 else [cfg.forward[1]]
    l = np.linspace(*cfg.lateral, cfg.n_lateral) if cfg.n_lateral > 1 else [np.mean(cfg.lateral)]
    h = np.linspace(*cfg.heading, cfg.n_heading) if cfg.n_heading > 1 else [np.mean(cfg.heading)]
    ego = np.array([(a, b, c) for a in f for b in l for c in h], dtype=float)
    pose = (state[0], state[1], state[3])
    world = ego_to_world(ego, pose)
    return [Waypoint(*row, frame=Frame.WORLD) for row in world]


def speed_levels(cfg, bounds):
    lo, hi = cfg.speed_floor * bounds.v_max, bounds.v_max
    return np.linspace(lo, hi, cfg.n_speed) if cfg.n_speed > 1 else np.array([hi])


def terminal_speeds(start, wps, cfg, bounds):
    """Terminal speed per waypoint; for "search" the result is (M, n_speed)."""
    v0 = float(start[2])
    lo, hi = cfg.speed_floor * bounds.v_max, bounds.v_max
    if cfg.terminal_speed == "search":
        return np.broadcast_to(speed_levels(cfg, bounds), (len(wps), cfg.n_speed))
    if cfg.terminal_speed == "hold":
        return np.full(len(wps), min(max(v0, lo), hi))
    chord = np.hypot(wps[:, 0] - start[0], wps[:, 1] - start[1])
    return np.clip(2.0 * chord / cfg.horizon - v0, lo, hi)


@dataclass
class CandidateSet:
    waypoints: np.ndarray  # (M, 3) world frame
    speeds: np.ndarray  # (M,) terminal speed of each candidate
    states: np.ndarray
    controls: np.ndarray
    coeffs: np.ndarray
    feasible: np.ndarray
    costs: np.ndarray  # inf where infeasible or blocked


def evaluate_candidates(state, cost_map, cfg, bounds):
    """Fit, filter and score every waypoint of the local grid.

    With several terminal speeds per waypoint the candidates are ordered
    waypoint-major, speed-minor.
    """
    start = np.asarray(state, dtype=float)
    wps = np.array([w.as_array() for w in sample_waypoint_grid(start, cfg)])
    v_end = terminal_speeds(start, wps, cfg, bounds)
    if v_end.ndim == 2:
        wps = np.repeat(wps, v_end.shape[1], axis=0)
        v_end = v_end.ravel()
    states, controls, coeffs = _splines(start, wps, v_end, cfg.horizon, cfg.steps)
    feasible = _feasible_mask(states, controls, cfg.dt, bounds)
    costs = np.full(len(wps), np.inf)
    if feasible.any():
        field = cost_map.field
        sub = states[feasible]
        vals = interpolate_many(field, sub.reshape(-1, 4), outside=field.sentinel)
        vals = vals.reshape(sub.shape[:2])
        total = vals.sum(axis=1)
        total[(vals >= field.sentinel).any(axis=1)] = np.inf
        costs[feasible] = total
    return CandidateSet(wps, v_end, states, controls, coeffs, feasible, costs)


def plan(state, cost_map, cfg=PlannerConfig(), bounds=DynamicsBounds()):
    """Minimum-cost feasible (waypoint, trajectory); ties go to the earliest grid index."""
    cands = evaluate_candidates(state, cost_map, cfg, bounds)
    if not np.isfinite(cands.costs).any():
        n_feas = int(cands.feasible.sum())
        raise PlanningFailure(
            f"no admissible candidate ({n_feas} of {len(cands.costs)} feasible, all blocked)"
            if n_feas else "no dynamically feasible candidate")
    k = int(np.argmin(cands.costs))
    traj = SplineTrajectory(cfg.horizon, cfg.dt, cands.states[k], cands.controls[k],
                            cands.coeffs[k])
    return Waypoint(*cands.waypoints[k], frame=Frame.WORLD), traj


def as_state(obj):
    return VehicleState(*(float(c) for c in obj))
