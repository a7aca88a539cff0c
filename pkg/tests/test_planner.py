import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reachnav.cost import CostMap, Provenance
from reachnav.dynamics import DynamicsBounds
from reachnav.errors import PlanningFailure, ValidationError
from reachnav.grid import UNREACHABLE, FieldKind, ValueField, interpolate_many, wrap_angle
from reachnav.occupancy import OccupancyMap
from reachnav.planner import (Frame, PlannerConfig, SplineTrajectory, Waypoint,
                              check_feasibility, ego_to_world, evaluate_candidates, fit_spline,
                              plan, sample_waypoint_grid, world_to_ego)
from reachnav.sim.episode import Clearance, ExpertSettings, build_cost_map
from reachnav.sim.maps import generate_task

B = DynamicsBounds()
PI = np.pi


def one(forward, lateral=0.0, heading=0.0):
    return PlannerConfig(forward=(forward, forward), n_forward=1, lateral=(lateral, lateral),
                         n_lateral=1, heading=(heading, heading), n_heading=1)


def test_single_waypoint():
    (w,) = sample_waypoint_grid(np.array([0, 0, 0.3, 0.0]), one(2.0))
    assert w.frame is Frame.WORLD
    assert np.allclose(w.as_array(), [2, 0, 0], atol=1e-12)


def test_rotated_robot():
    (w,) = sample_waypoint_grid(np.array([0, 0, 0.3, PI / 2]), one(2.0))
    assert np.allclose(w.as_array(), [0, 2, PI / 2], atol=1e-12)


def test_grid_cardinality():
    cfg = PlannerConfig(n_forward=3, n_lateral=3, n_heading=3)
    wps = sample_waypoint_grid(np.array([1.0, 2.0, 0.1, 0.3]), cfg)
    assert len({tuple(np.round(w.as_array(), 12)) for w in wps}) == 27
    ego = world_to_ego(np.array([w.as_array() for w in wps]), (1.0, 2.0, 0.3))
    assert np.all(ego[:, 0] > 0)


def test_frame_round_trip():
    pts = np.random.default_rng(0).uniform(-3, 3, (20, 3))
    pose = (0.4, -1.2, 2.5)
    back = world_to_ego(ego_to_world(pts, pose), pose)
    assert np.allclose(back[:, :2], pts[:, :2])
    assert np.allclose(wrap_angle(back[:, 2] - pts[:, 2]), 0)


def test_waypoint_wraps_heading():
    assert Waypoint(0, 0, 3 * PI / 2).theta == pytest.approx(-PI / 2)


@pytest.mark.parametrize("kw", [{"forward": (0.0, 1.0)}, {"n_heading": 0}, {"horizon": 1.52},
                                {"terminal_speed": "fast"}, {"n_speed": 0}])
def test_config_validation(kw):
    with pytest.raises(ValidationError):
        PlannerConfig(**kw)


def test_straight_constant_speed():
    tr = fit_spline(np.array([0, 0, 0.6, 0.0]), (1.2, 0, 0), 2.0, 0.05, 0.6)
    assert tr.steps == 40
    assert np.allclose(tr.controls, 0.0, atol=1e-12)
    assert np.allclose(tr.states[:, 2], 0.6)
    assert np.allclose(tr.states[:, 1], 0.0)
    assert check_feasibility(tr, B)


def test_endpoint_and_start():
    start = np.array([0.3, -0.2, 0.25, 0.4])
    wp = Waypoint(1.1, 0.5, 0.9)
    tr = fit_spline(start, wp, 1.5, 0.05, 0.3)
    assert np.allclose(tr.states[0], start, atol=1e-12)
    assert np.allclose(tr.states[-1, [0, 1]], [1.1, 0.5], atol=1e-6)
    assert abs(wrap_angle(tr.states[-1, 3] - 0.9)) < 1e-6
    assert tr.states[-1, 2] == pytest.approx(0.3)


def five_point(f, dt):
    return (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * dt)


def flatness_error(tr):
    x, y = tr.states[:, 0], tr.states[:, 1]
    xd, yd = five_point(x, tr.dt), five_point(y, tr.dt)
    v = np.hypot(xd, yd)
    phi = np.unwrap(tr.states[:, 3])
    w = five_point(phi, tr.dt)
    inner = slice(2, -2)
    ev = np.abs(v - tr.states[inner, 2]).max()
    ep = np.abs(wrap_angle(np.arctan2(yd, xd) - tr.states[inner, 3])).max()
    ew = np.abs(w - tr.controls[inner, 1]).max()
    return max(ev, ep, ew)


def test_flatness_consistency_curved():
    tr = fit_spline(np.array([0, 0, 0.4, 0.0]), (1.0, 0.4, 0.6), 1.5, 0.05, 0.5)
    assert np.abs(tr.controls[:, 1]).max() > 0.1
    assert flatness_error(tr) < 1e-3


def test_zero_length_rejected():
    with pytest.raises(ValidationError):
        fit_spline(np.array([1, 1, 0.0, 0.2]), (1, 1, 0.2), 1.5, 0.05, 0.3)
    with pytest.raises(ValidationError):
        fit_spline(np.array([1, 1, 0.0, 0.2]), Waypoint(2, 1, 0, Frame.EGOCENTRIC), 1.5, 0.05, 0.3)


def test_behind_is_infeasible():
    tr = fit_spline(np.array([0, 0, 0.3, 0.0]), (-0.5, 0, PI), 1.0, 0.05, 0.3)
    # the path reverses through zero speed; the sampled heading turns by pi in one step
    sampled_rate = np.abs(wrap_angle(np.diff(tr.states[:, 3]))) / tr.dt
    assert sampled_rate.max() > B.omega_max
    assert not check_feasibility(tr, B)


def test_strict_speed_bound():
    tr = fit_spline(np.array([0, 0, 0.6, 0.0]), (0.9, 0, 0), 1.5, 0.05, 0.6)
    assert check_feasibility(tr, B)
    states = tr.states.copy()
    states[10, 2] = B.v_max + 1e-9
    bumped = SplineTrajectory(tr.horizon, tr.dt, states, tr.controls, tr.coeffs)
    assert not check_feasibility(bumped, B)


def open_cost_map(goal_xy=(3.0, 1.0)):
    m = OccupancyMap(np.zeros((40, 20), dtype=bool))
    g = m.grid(B.v_max, 4, 12)
    X, Y, V, P = g.mesh()
    # time-like cost decreasing toward the goal
    vals = np.hypot(X - goal_xy[0], Y - goal_xy[1]) / B.v_max + 0.1 * (B.v_max - V)
    return CostMap(ValueField(g, vals, FieldKind.COST), Provenance.REACHABILITY)


def oracle_costs(state, cm, cfg):
    """Candidate costs recomputed one trajectory at a time."""
    start = np.asarray(state, float)
    out = []
    for w in sample_waypoint_grid(start, cfg):
        for v_end in np.linspace(cfg.speed_floor * B.v_max, B.v_max, cfg.n_speed):
            try:
                tr = fit_spline(start, w, cfg.horizon, cfg.dt, v_end)
            except ValidationError:
                out.append(np.inf)
                continue
            if not check_feasibility(tr, B):
                out.append(np.inf)
                continue
            vals = interpolate_many(cm.field, tr.states, outside=UNREACHABLE)
            out.append(np.inf if (vals >= UNREACHABLE).any() else vals.sum())
    return np.array(out)


def test_argmin_matches_exhaustive_oracle():
    cm = open_cost_map()
    cfg = PlannerConfig()
    state = np.array([0.5, 1.0, 0.3, 0.0])
    costs = oracle_costs(state, cm, cfg)
    wp, tr = plan(state, cm, cfg, B)
    k = int(np.argmin(costs))
    cands = evaluate_candidates(state, cm, cfg, B)
    assert np.allclose(cands.costs, costs, rtol=1e-12)
    assert np.allclose(wp.as_array(), cands.waypoints[k])
    assert check_feasibility(tr, B)
    # the chosen waypoint points at the goal
    assert abs(world_to_ego(wp.as_array()[None], (0.5, 1.0, 0.0))[0, 1]) <= 0.15 + 1e-9


def test_single_feasible_candidate_returned():
    cm = open_cost_map()
    cfg = PlannerConfig(forward=(0.6, 0.6), n_forward=1, lateral=(0, 0), n_lateral=1,
                        heading=(0, 0), n_heading=1, n_speed=1)
    wp, _ = plan(np.array([0.5, 1.0, 0.3, 0.0]), cm, cfg, B)
    assert np.allclose(wp.as_array(), [1.1, 1.0, 0.0])


def test_all_blocked_raises():
    cm = open_cost_map()
    vals = np.array(cm.field.values)
    vals[6:, :, :, :] = UNREACHABLE
    blocked = CostMap(ValueField(cm.grid, vals, FieldKind.COST), Provenance.REACHABILITY)
    with pytest.raises(PlanningFailure):
        plan(np.array([0.5, 1.0, 0.3, 0.0]), blocked, PlannerConfig(), B)


def test_deterministic():
    cm = open_cost_map()
    s = np.array([0.7, 0.8, 0.2, 0.3])
    a, ta = plan(s, cm)
    b, tb = plan(s, cm)
    assert a == b and np.array_equal(ta.states, tb.states)


@settings(max_examples=10, deadline=None)
@given(st.floats(-50, 50), st.floats(0.3, 2.5), st.floats(0.3, 1.7), st.floats(0.0, 0.6),
       st.floats(-PI, PI))
def test_constant_shift_invariance(c, x, y, v, phi):
    cm = open_cost_map()
    shifted = np.array(cm.field.values) + c + 60.0
    cm2 = CostMap(ValueField(cm.grid, shifted, FieldKind.COST), Provenance.REACHABILITY)
    s = np.array([x, y, v, phi])
    try:
        a, _ = plan(s, cm)
    except PlanningFailure:
        return
    b, _ = plan(s, cm2)
    assert np.allclose(a.as_array(), b.as_array())


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 2.5), st.floats(0.3, 1.7), st.floats(0.0, 0.6), st.floats(-PI, PI))
def test_candidates_hit_boundary_conditions(x, y, v, phi):
    cfg = PlannerConfig(n_forward=3, n_lateral=3, n_heading=3, n_speed=2)
    c = evaluate_candidates(np.array([x, y, v, phi]), open_cost_map(), cfg, B)
    assert np.allclose(c.states[:, 0], [x, y, v, phi], atol=1e-12)
    assert np.allclose(c.states[:, -1, :2], c.waypoints[:, :2], atol=1e-6)
    assert np.all(np.abs(wrap_angle(c.states[:, -1, 3] - c.waypoints[:, 2])) < 1e-6)
    for k in np.flatnonzero(c.feasible):
        tr = SplineTrajectory(cfg.horizon, cfg.dt, c.states[k], c.controls[k], c.coeffs[k])
        assert check_feasibility(tr, B)


def test_doorway_clearance_with_disturbance():
    settings_ = ExpertSettings()
    on, off = [], []
    for seed in range(20):
        task = generate_task("doorway", {"width": 0.5}, seed)
        clear = Clearance(task.map)
        for dist, out in ((True, on), (False, off)):
            cm = build_cost_map(task.map, task.goal, Provenance.REACHABILITY, dist, settings_)
            s = np.array(task.start)
            # plan from a moving state so turning candidates exist
            s[2] = 0.3
            try:
                _, tr = plan(s, cm, settings_.planner, settings_.bounds)
            except PlanningFailure:
                continue
            out.append(clear(tr.states).min())
    assert np.median(on) >= np.median(off)
