"""Receding-horizon expert rollouts: plan, optionally perturb, track, repeat."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from ..cost import (DistanceKind, Provenance, distance_transform, heuristic_cost,
                    reachability_cost)
from ..dynamics import Disturbance, DynamicsBounds, VehicleState, step
from ..errors import NumericalError, PlanningFailure, ValidationError
from ..hj import SOLVER_REVISION, GoalSpec, SolveConfig, solve_ttc, solve_ttr
from ..planner import PlannerConfig, fit_spline, plan
from ..tracker import gains_for, track_step
from ..grid import wrap_angle
from . import cache

log = logging.getLogger(__name__)


class Outcome(enum.Enum):
    SUCCESS = "success"
    COLLISION = "collision"
    TIMEOUT = "timeout"
    PLAN_FAILURE = "plan_failure"


@dataclass(frozen=True)
class ExpertSettings:
    """Everything about the expert that is shared across episodes."""

    bounds: DynamicsBounds = DynamicsBounds()
    nv: int = 7
    nphi: int = 24
    solve: SolveConfig = SolveConfig()
    alpha: float = 30.0
    lam1: float = 0.3
    lam2: float = 1.0
    planner: PlannerConfig = PlannerConfig()
    q_diag: tuple = (1.0, 1.0, 0.1, 0.5)
    r_diag: tuple = (0.1, 0.1)

    def __post_init__(self):
        if self.nv < 2 or self.nphi < 3:
            raise ValidationError("need at least 2 speed and 3 heading nodes")


@dataclass(frozen=True)
class EpisodeConfig:
    start: VehicleState
    goal: GoalSpec
    replan_hz: float = 4.0
    timeout: float = 60.0
    cost: Provenance = Provenance.REACHABILITY
    disturbance: bool = True
    noise_pos: float = 0.0
    noise_heading: float = 0.0
    seed: int = 0
    dt: float = 0.05
    # exogenous dynamics disturbance during the rollout (uniform within bounds)
    rollout_disturbance: bool = False

    def __post_init__(self):
        if self.replan_hz <= 0 or self.timeout <= 0 or self.dt <= 0:
            raise ValidationError("replan frequency, timeout and dt must be positive")
        if self.noise_pos < 0 or self.noise_heading < 0:
            raise ValidationError("noise scales must be nonnegative")
        object.__setattr__(self, "start", VehicleState(*(float(c) for c in self.start)))
        object.__setattr__(self, "cost", Provenance(self.cost))

    @property
    def replan_steps(self):
        return max(1, int(round(1.0 / (self.replan_hz * self.dt))))


@dataclass
class EpisodeResult:
    outcome: Outcome
    time: float
    states: np.ndarray  # (T+1, 4)
    controls: np.ndarray  # (T, 2)
    d_min: float
    # one row per replan: step index, robot state (4), last omega, planned waypoint (3),
    # executed waypoint (3)
    replans: np.ndarray = field(default_factory=lambda: np.zeros((0, 12)))

    @property
    def success(self):
        return self.outcome is Outcome.SUCCESS


# -- cost maps --------------------------------------------------------------

def build_cost_map(omap, goal, provenance, disturbance, settings=ExpertSettings()):
    """Cost map for a scene; value fields go through the content-hash cache."""
    provenance = Provenance(provenance)
    grid = omap.grid(settings.bounds.v_max, settings.nv, settings.nphi)
    if provenance is Provenance.HEURISTIC:
        d_obs = distance_transform(omap, DistanceKind.OBSTACLE_DIST)
        d_goal = distance_transform(omap, DistanceKind.GOAL_DIST, goal)
        return heuristic_cost(d_obs, d_goal, grid, settings.lam1, settings.lam2)
    bounds = settings.bounds if disturbance else settings.bounds.without_disturbance()
    scfg = settings.solve
    # both disturbance settings share the disturbed dissipation, which keeps the
    # two value functions on one discretization
    if scfg.dissipation_bounds is None:
        scfg = replace(scfg, dissipation_bounds=settings.bounds)
    base = (SOLVER_REVISION, omap.to_bytes(), grid, bounds, scfg)
    ttr = cache.cached_field(cache.content_key("ttr", *base, goal),
                             lambda: solve_ttr(grid, bounds, goal, omap, scfg))
    ttc = cache.cached_field(cache.content_key("ttc", *base),
                             lambda: solve_ttc(grid, bounds, omap, scfg))
    return reachability_cost(ttr, ttc, settings.alpha, scfg.ttc_cap)


# -- clearance --------------------------------------------------------------

class Clearance:
    """Distance from points to the nearest occupied cell (as a solid square)."""

    def __init__(self, omap):
        self.h = omap.cell_size
        occ = np.argwhere(omap.occupied)
        self.centers = np.column_stack([omap.centers(0)[occ[:, 0]], omap.centers(1)[occ[:, 1]]])
        self.tree = cKDTree(self.centers) if len(occ) else None

    def __call__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))[:, :2]
        if self.tree is None:
            return np.full(len(pts), np.inf)
        dc, _ = self.tree.query(pts)
        out = np.empty(len(pts))
        half = 0.5 * self.h
        for k, (p, r) in enumerate(zip(pts, dc)):
            # the nearest square has its center within r + h/sqrt(2)
            idx = self.tree.query_ball_point(p, r + half * np.sqrt(2) + 1e-12)
            d = np.abs(self.centers[idx] - p) - half
            out[k] = np.hypot(np.maximum(d[:, 0], 0), np.maximum(d[:, 1], 0)).min()
        return out


# -- noise ------------------------------------------------------------------

def _truncated_normal(rng, scale, size):
    z = rng.standard_normal(size)
    bad = np.abs(z) > 3.0
    while bad.any():
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) > 3.0
    return scale * z


def perturb_waypoint(wp, state, rng, noise_pos, noise_heading):
    """Truncated Gaussian perturbation of a world waypoint, drawn in the robot frame."""
    dx, dy = _truncated_normal(rng, noise_pos, 2)
    dth = _truncated_normal(rng, noise_heading, 1)[0]
    c, s = np.cos(state[3]), np.sin(state[3])
    return np.array([wp[0] + c * dx - s * dy, wp[1] + s * dx + c * dy,
                     float(wrap_angle(wp[2] + dth))])


# -- rollout ----------------------------------------------------------------

def run_episode(omap, cfg, bounds=None, settings=ExpertSettings(), cost_map=None):
    """Simulate one episode; solver or planner failures end it as PLAN_FAILURE."""
    bounds = settings.bounds if bounds is None else bounds
    if bounds != settings.bounds:
        settings = replace(settings, bounds=bounds)
    rng = np.random.default_rng(cfg.seed)
    dt = cfg.dt
    pcfg = settings.planner
    Q, R = np.diag(settings.q_diag), np.diag(settings.r_diag)
    clearance = Clearance(omap)
    goal = cfg.goal
    state = cfg.start
    states, controls, replans = [np.array(state)], [], []
    max_steps = int(round(cfg.timeout / dt))
    k = 0
    last_omega = 0.0

    def finish(outcome):
        xs = np.array(states)
        d_min = float(clearance(xs).min())
        return EpisodeResult(outcome, k * dt, xs, np.array(controls).reshape(-1, 2), d_min,
                             np.array(replans).reshape(-1, 12))

    if omap.is_occupied(state.x, state.y):
        return finish(Outcome.COLLISION)
    if goal.contains(state.x, state.y):
        return finish(Outcome.SUCCESS)
    if cost_map is None:
        try:
            cost_map = build_cost_map(omap, goal, cfg.cost, cfg.disturbance, settings)
        except NumericalError as exc:
            log.info("value computation failed: %s", exc)
            return finish(Outcome.PLAN_FAILURE)

    while True:
        try:
            wp, traj = plan(np.array(state), cost_map, pcfg, bounds)
        except PlanningFailure as exc:
            log.info("planning failed at t=%.2f: %s", k * dt, exc)
            return finish(Outcome.PLAN_FAILURE)
        planned = wp.as_array()
        executed = planned
        if cfg.noise_pos > 0 or cfg.noise_heading > 0:
            executed = perturb_waypoint(planned, state, rng, cfg.noise_pos, cfg.noise_heading)
            # keep the planned terminal speed for the perturbed waypoint
            v_end = float(traj.states[-1, 2])
            try:
                traj = fit_spline(np.array(state), executed, pcfg.horizon, pcfg.dt, v_end)
            except ValidationError:
                pass
        replans.append([k, *state, last_omega, *planned, *executed])
        gains = gains_for(traj, Q, R)
        n_ref = len(gains)
        for i in range(cfg.replan_steps):
            j = min(i, n_ref - 1)
            if i < n_ref:
                ref_z, ref_u = traj.states[i], gains.feedforward[i]
            else:
                ref_z, ref_u = traj.states[-1], np.zeros(2)
            u = track_step(state, ref_z, ref_u, gains.gains[j], bounds)
            dist = Disturbance()
            if cfg.rollout_disturbance:
                ang = rng.uniform(-np.pi, np.pi)
                r = bounds.dxy_max * np.sqrt(rng.uniform())
                dist = Disturbance(r * np.cos(ang), r * np.sin(ang),
                                   rng.uniform(-bounds.dphi_max, bounds.dphi_max))
            state = step(state, u, dist, dt, bounds)
            k += 1
            states.append(np.array(state))
            controls.append(np.array(u))
            last_omega = u.omega
            if omap.is_occupied(state.x, state.y):
                return finish(Outcome.COLLISION)
            if goal.contains(state.x, state.y):
                return finish(Outcome.SUCCESS)
            if k >= max_steps:
                return finish(Outcome.TIMEOUT)
