import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reachnav.dynamics import DynamicsBounds
from reachnav.errors import InfeasibleError, NonConvergenceError, ValidationError
from reachnav.grid import UNREACHABLE, FieldKind, interpolate
from reachnav.hj import GoalSpec, SolveConfig, goal_mask, solve_ttc, solve_ttr
from reachnav.occupancy import OccupancyMap

B = DynamicsBounds()
B0 = B.without_disturbance()

ROOM = OccupancyMap.from_ascii("""
##############
#............#
#............#
#.....##.....#
#.....##.....#
#.....##.....#
#............#
#............#
##############
""")
GOAL = GoalSpec(1.05, 0.45, 0.2)


@pytest.fixture(scope="module")
def room_fields():
    g = ROOM.grid(B.v_max, 4, 12)
    occ = ROOM.occupied
    shared = SolveConfig(dissipation_bounds=B)
    out = {"grid": g, "occ": occ}
    for tag, b in (("dist", B), ("nodist", B0)):
        out["ttr_" + tag] = solve_ttr(g, b, GOAL, ROOM, shared)
        out["ttc_" + tag] = solve_ttc(g, b, ROOM, shared)
    return out


def test_boundary_exactness(room_fields):
    g, occ = room_fields["grid"], room_fields["occ"]
    gm = goal_mask(g, GOAL) & ~occ
    for tag in ("dist", "nodist"):
        ttr, ttc = room_fields["ttr_" + tag], room_fields["ttc_" + tag]
        assert ttr.kind is FieldKind.TTR and ttc.kind is FieldKind.TTC
        assert np.all(ttr.values[gm] == 0.0)
        assert np.all(ttr.values[occ] == UNREACHABLE)
        assert np.all(ttc.values[occ] == 0.0)
        assert ttc.values.max() <= 4.0
        finite = ttr.values < UNREACHABLE
        assert np.all(ttr.values[finite] >= 0.0)


def test_disturbance_is_conservative(room_fields):
    eps = SolveConfig().tol
    on, off = room_fields["ttr_dist"].values, room_fields["ttr_nodist"].values
    fin = off < UNREACHABLE
    assert np.all(on[fin] >= off[fin] - 2 * eps)
    assert np.all(room_fields["ttc_dist"].values <= room_fields["ttc_nodist"].values + 2 * eps)


def test_ttc_without_obstacles():
    m = OccupancyMap(np.zeros((6, 5), dtype=bool))
    ttc = solve_ttc(m.grid(0.6, 3, 8), B, m)
    assert np.all(ttc.values == 4.0)


def test_goal_inside_obstacle():
    with pytest.raises(InfeasibleError):
        solve_ttr(ROOM.grid(0.6, 3, 8), B, GoalSpec(0.65, 0.45, 0.05), ROOM)


def test_non_convergence_carries_residual():
    with pytest.raises(NonConvergenceError) as err:
        solve_ttr(ROOM.grid(0.6, 3, 8), B, GOAL, ROOM, SolveConfig(max_cycles=1))
    assert err.value.residual > 0
    assert "residual" in str(err.value)


@pytest.mark.parametrize("kw", [{"tol": 0}, {"ttc_cap": -1}, {"scheme": "weno"},
                                {"wall_rule": "x"}, {"schedule": (0, 1)}])
def test_solve_config_validation(kw):
    with pytest.raises(ValidationError):
        SolveConfig(**kw)


def test_dissipation_bounds_must_dominate():
    with pytest.raises(ValidationError):
        solve_ttr(ROOM.grid(0.6, 3, 8), B, GOAL, ROOM, SolveConfig(dissipation_bounds=B0))


def test_sweep_order_independence():
    g = ROOM.grid(B.v_max, 4, 12)
    cfg = SolveConfig(tol=1e-4)
    perm = tuple(np.random.default_rng(5).permutation(16))
    a = solve_ttr(g, B, GOAL, ROOM, cfg).values
    b = solve_ttr(g, B, GOAL, ROOM, SolveConfig(tol=1e-4, schedule=perm)).values
    fin = a < UNREACHABLE
    assert np.array_equal(fin, b < UNREACHABLE)
    assert np.max(np.abs(a[fin] - b[fin])) <= 2 * cfg.tol * max(1.0, a[fin].max())


def straight_line_oracle(dist, v0, bounds, dt=0.01):
    """Minimum time along a straight line with speed actions {-a, 0, a}, by BFS over (x, v)."""
    dv = bounds.a_max * dt
    nv = int(round(bounds.v_max / dv))
    seen = {(0.0, int(round(v0 / dv)))}
    frontier = list(seen)
    t = 0.0
    while frontier:
        t += dt
        nxt = set()
        for x, iv in frontier:
            for s in (-1, 0, 1):
                jv = min(max(iv + s, 0), nv)
                xn = round(x + 0.5 * (iv + jv) * dv * dt, 9)
                if xn >= dist:
                    return t
                nxt.add((xn, jv))
        # keep only the farthest position per speed
        best = {}
        for x, iv in nxt:
            best[iv] = max(best.get(iv, -1.0), x)
        frontier = [(x, iv) for iv, x in best.items()]
    return np.inf


def test_corridor_time_to_reach():
    occ = np.zeros((104, 12), dtype=bool)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    m = OccupancyMap(occ)
    goal = GoalSpec(9.0, 0.6, 0.3)
    g = m.grid(B0.v_max, 7, 24)
    ttr = solve_ttr(g, B0, goal, m)
    start = (goal.x - goal.radius - 3.0, 0.6, B0.v_max, 0.0)
    expected = straight_line_oracle(3.0, B0.v_max, B0)
    assert expected == pytest.approx(5.0, abs=0.02)
    assert abs(interpolate(ttr, start) - expected) <= 0.15 * expected


def brute_ttc(d0, bounds, horizon=4.0, seg=0.2, depth=5, dt=0.005):
    """Longest survival in front of a plane wall over piecewise-constant controls.

    After ``depth`` segments the robot brakes straight; the search is
    exhaustive over the 9 corner controls per segment.
    """
    acts = [(a, w) for a in (-bounds.a_max, 0, bounds.a_max)
            for w in (-bounds.omega_max, 0, bounds.omega_max)]

    def survive(seq):
        x, v, phi, t = 0.0, bounds.v_max, 0.0, 0.0
        for a, w in seq:
            for _ in range(int(round(seg / dt))):
                x += v * np.cos(phi) * dt
                v = min(max(v + a * dt, 0.0), bounds.v_max)
                phi += w * dt
                t += dt
                if x >= d0:
                    return t
                if t >= horizon:
                    return horizon
        return horizon

    tail = [(-bounds.a_max, 0.0)] * int(round(horizon / seg))
    return max(survive(list(s) + tail) for s in itertools.product(acts, repeat=depth))


@pytest.mark.xfail(strict=True, reason="grid dissipation inflates TTC in front of a wall "
                   "(about 2.0 s against a 0.72 s exhaustive rollout at 0.1 m, 24 headings)")
def test_ttc_matches_brute_force_rollout():
    occ = np.zeros((20, 10), dtype=bool)
    occ[-1, :] = True
    m = OccupancyMap(occ)
    g = m.grid(B0.v_max, 7, 24)
    ttc = solve_ttc(g, B0, m)
    wall = m.centers(0)[-1] - 0.5 * m.cell_size
    z = (wall - 0.3, 0.5, B0.v_max, 0.0)
    oracle = brute_ttc(0.3, B0)
    assert abs(interpolate(ttc, z) - oracle) <= 0.2 * oracle


_G = ROOM.grid(0.6, 3, 8)


@settings(max_examples=5, deadline=None)
@given(st.floats(0, 0.1), st.floats(0, 0.3))
def test_monotone_in_disturbance_property(dxy, dphi):
    hi = DynamicsBounds(dxy_max=dxy, dphi_max=dphi)
    cfg = SolveConfig(dissipation_bounds=DynamicsBounds(dxy_max=0.1, dphi_max=0.3))
    on = solve_ttr(_G, hi, GOAL, ROOM, cfg).values
    off = solve_ttr(_G, B0, GOAL, ROOM, cfg).values
    fin = off < UNREACHABLE
    assert np.all(on[fin] >= off[fin] - 2e-3)
