"""Scene generation, episodes, dataset files and metrics."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from reachnav.dynamics import VehicleState
from reachnav.errors import ValidationError
from reachnav.hj import GoalSpec
from reachnav.occupancy import OccupancyMap
from reachnav.planner import world_to_ego
from reachnav.grid import wrap_angle
from reachnav.sim.dataset import (CropSpec, egocentric_crop, generate_dataset, read_dataset,
                                  records_from_episode)
from reachnav.sim.episode import (Clearance, EpisodeConfig, Outcome, perturb_waypoint,
                                  run_episode)
from reachnav.sim.maps import Task, generate_map, generate_task
from reachnav.sim.metrics import (Difficulty, METRIC_COLUMNS, classify, compute_metrics,
                                  sweep_replan_frequency, trace_derivatives)


def open_room(nx=50, ny=24):
    occ = np.zeros((nx, ny), dtype=bool)
    occ[0] = occ[-1] = True
    occ[:, 0] = occ[:, -1] = True
    return OccupancyMap(occ, 0.1)


@pytest.fixture(scope="module")
def straight():
    """Goal disk centered 2 m ahead of a robot at rest in an open room."""
    m = open_room()
    cfg = EpisodeConfig(VehicleState(1.0, 1.2, 0.0, 0.0), GoalSpec(3.0, 1.2, 0.3))
    return m, cfg, run_episode(m, cfg)


# -- maps -------------------------------------------------------------------

def test_map_is_deterministic():
    a = generate_map("doorway", {"width": 0.6}, seed=7)
    b = generate_map("doorway", {"width": 0.6}, seed=7)
    assert a.to_bytes() == b.to_bytes()
    assert a.has_closed_border()


@pytest.mark.parametrize("kind", ["corridor", "doorway", "cluttered", "maze"])
def test_start_and_goal_connected(kind):
    task = generate_task(kind, seed=3)
    m = task.map
    lab, _ = ndimage.label(~m.occupied)
    s, g = m.cell_of(task.start.x, task.start.y), m.cell_of(task.goal.x, task.goal.y)
    assert lab[s] != 0 and lab[s] == lab[g]
    assert m.has_closed_border()


@pytest.mark.parametrize("n", [1, 3, 5])
def test_cluttered_places_n_disjoint_rectangles(n):
    m = generate_map("cluttered", {"n": n}, seed=11)
    inner = m.occupied[1:-1, 1:-1]
    lab, count = ndimage.label(inner)
    assert count == n
    for sl in ndimage.find_objects(lab):
        assert inner[sl].all()  # each component fills its bounding box


def test_map_rejects_narrow_opening():
    with pytest.raises(ValidationError):
        generate_map("doorway", {"width": 0.2}, seed=0)
    with pytest.raises(ValidationError):
        generate_map("volcano")


# -- episodes ---------------------------------------------------------------

def test_start_inside_goal_is_immediate_success():
    m = open_room()
    res = run_episode(m, EpisodeConfig(VehicleState(2.0, 1.2, 0.0, 0.0), GoalSpec(2.1, 1.2, 0.3)))
    assert res.outcome is Outcome.SUCCESS
    assert res.time == 0.0
    assert len(res.replans) == 0


def test_straight_goal_time_within_kinematic_bounds(straight):
    _, _, res = straight
    assert res.outcome is Outcome.SUCCESS
    assert 2.0 / 0.6 <= res.time <= 1.5 * 2.0 / 0.6


def test_episode_is_deterministic(straight):
    m, cfg, res = straight
    again = run_episode(m, cfg)
    assert again.outcome is res.outcome
    assert again.states.tobytes() == res.states.tobytes()
    assert again.controls.tobytes() == res.controls.tobytes()
    assert again.replans.tobytes() == res.replans.tobytes()


def test_success_trace_stays_in_free_space():
    task = generate_task("doorway", {"width": 0.6}, seed=1)
    res = run_episode(task.map, EpisodeConfig(task.start, task.goal))
    assert res.success
    assert not np.asarray(task.map.is_occupied(res.states[:, 0], res.states[:, 1])).any()
    assert task.goal.contains(*res.states[-1, :2])


def test_clearance_against_cell_squares():
    m = OccupancyMap.from_ascii("#####\n#...#\n#...#\n#...#\n#####")
    c = Clearance(m)
    # the interior spans 0.1..0.4 in both axes; its center is 0.15 from each wall face
    assert c([[0.25, 0.25]])[0] == pytest.approx(0.15)
    assert c([[0.12, 0.25]])[0] == pytest.approx(0.02)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 0.3), st.floats(0, 0.5), st.integers(0, 10_000))
def test_waypoint_noise_truncated_at_three_sigma(sp, sh, seed):
    rng = np.random.default_rng(seed)
    wp = np.array([1.0, 2.0, 0.3])
    state = np.array([0.5, 1.5, 0.2, 0.7])
    out = perturb_waypoint(wp, state, rng, sp, sh)
    assert np.abs(out[:2] - wp[:2]).max() <= 3 * sp * np.sqrt(2) + 1e-12
    assert abs(wrap_angle(out[2] - wp[2])) <= 3 * sh + 1e-12


# -- dataset ----------------------------------------------------------------

def test_dataset_one_record_per_replan(straight, tmp_path):
    m, cfg, res = straight
    task = Task("file", 0, m, cfg.start, cfg.goal)
    path = tmp_path / "a.bin"
    n = generate_dataset([task], path, replan_hz=cfg.replan_hz)
    assert n == len(res.replans) > 0
    spec, recs = read_dataset(path)
    assert spec == CropSpec()
    assert len(recs) == n
    for rec, row in zip(recs, res.replans):
        pose = (row[1], row[2], row[4])
        w = rec.waypoint_world(pose)
        assert np.allclose(w[:2], row[6:8], atol=1e-9)
        assert abs(wrap_angle(w[2] - row[8])) < 1e-9
        assert rec.v == row[3] and rec.omega == row[5]
        assert np.array_equal(rec.crop, egocentric_crop(m, pose))


def test_dataset_is_byte_identical(straight, tmp_path):
    m, cfg, _ = straight
    task = Task("file", 0, m, cfg.start, cfg.goal)
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    generate_dataset([task, task], a, seed=4, noise_pos=0.1, noise_heading=0.1)
    generate_dataset([task, task], b, seed=4, noise_pos=0.1, noise_heading=0.1)
    assert a.read_bytes() == b.read_bytes()


def test_records_label_in_robot_frame(straight):
    m, _, res = straight
    for rec, row in zip(records_from_episode(m, res, 0), res.replans):
        expect = world_to_ego(row[6:9], (row[1], row[2], row[4]))[0]
        assert np.allclose(rec.waypoint, expect, atol=1e-12)


def test_egocentric_crop_sees_wall_ahead():
    m = open_room()
    crop = egocentric_crop(m, (4.5, 1.2, 0.0), CropSpec(8, 8, 1.0, 1.0))
    # the wall face is 0.4 m ahead; beyond the map counts as occupied
    assert crop[-1].all() and not crop[0].any()


def test_dataset_rejects_garbage(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"nope")
    with pytest.raises(ValidationError):
        read_dataset(p)


# -- metrics ----------------------------------------------------------------

@pytest.mark.parametrize("d, cls", [(0.1, Difficulty.HARD), (0.19999, Difficulty.HARD),
                                    (0.2, Difficulty.MEDIUM), (0.25, Difficulty.MEDIUM),
                                    (0.3, Difficulty.MEDIUM), (0.30001, Difficulty.EASY)])
def test_difficulty_thresholds(d, cls):
    assert classify(d) is cls


def test_constant_velocity_trace_has_no_acceleration():
    t = np.arange(40) * 0.05
    states = np.column_stack([0.3 * t, 0.1 * t, np.full_like(t, 0.316), np.full_like(t, 0.32)])
    acc, jerk = trace_derivatives(states, 0.05)
    assert np.abs(acc).max() < 1e-9 and np.abs(jerk).max() < 1e-6


def test_metrics_time_over_successes_only(straight):
    _, _, res = straight
    fail = type(res)(Outcome.TIMEOUT, 60.0, res.states, res.controls, 0.1)
    m = compute_metrics([res, fail])
    assert m.success_rate == 50.0
    assert m.time_mean == res.time and m.time_std == 0.0
    assert m.difficulty[Difficulty.HARD] == (1, 0.0)
    assert m.outcomes[Outcome.TIMEOUT] == 1
    assert compute_metrics([res]).success_rate == 100.0
    with pytest.raises(ValidationError):
        compute_metrics([])


def test_sweep_row_count(straight):
    m, cfg, _ = straight
    task = Task("file", 0, m, cfg.start, cfg.goal)
    rows = sweep_replan_frequency([task], (2.0, 4.0), ("reach_dist", "heuristic"))
    assert [(f, v) for f, v, _ in rows] == [(2.0, "reach_dist"), (2.0, "heuristic"),
                                            (4.0, "reach_dist"), (4.0, "heuristic")]
    assert len(METRIC_COLUMNS) == 19
    with pytest.raises(ValidationError):
        sweep_replan_frequency([task], (0.0,))
