"""Suite metrics, difficulty classes and replanning-frequency sweeps."""

from __future__ import annotations

import csv
import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..cost import Provenance
from ..errors import ValidationError
from .episode import EpisodeConfig, ExpertSettings, Outcome, run_episode

HARD_BELOW = 0.2
EASY_ABOVE = 0.3

PAPER_FREQUENCIES = (0.67, 1.0, 2.0, 4.0, 6.67)


class Difficulty(enum.Enum):
    HARD = "hard"
    MEDIUM = "medium"
    EASY = "easy"


def classify(d_min):
    """Hard below 0.2 m, Easy above 0.3 m, Medium in between (both ends inclusive)."""
    if d_min < HARD_BELOW:
        return Difficulty.HARD
    if d_min > EASY_ABOVE:
        return Difficulty.EASY
    return Difficulty.MEDIUM


@dataclass(frozen=True)
class Metrics:
    n: int
    success_rate: float  # percent
    time_mean: float
    time_std: float
    accel_mean: float
    accel_std: float
    jerk_mean: float
    jerk_std: float
    difficulty: dict  # Difficulty -> (count, success percent)
    outcomes: dict  # Outcome -> count


def trace_derivatives(states, dt):
    """Planar acceleration and jerk magnitudes by finite differences of the positions."""
    p = np.asarray(states)[:, :2]
    vel = np.diff(p, axis=0) / dt
    acc = np.diff(vel, axis=0) / dt
    jerk = np.diff(acc, axis=0) / dt
    return np.linalg.norm(acc, axis=1), np.linalg.norm(jerk, axis=1)


def _mean_std(x):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    return float(x.mean()), float(x.std())


def compute_metrics(results, omap=None, dt=0.05):
    """Aggregate episode results; time, acceleration and jerk use successes only."""
    if not results:
        raise ValidationError("no results to aggregate")
    ok = [r for r in results if r.success]
    acc, jerk = [], []
    for r in ok:
        a, j = trace_derivatives(r.states, dt)
        acc.append(a)
        jerk.append(j)
    diff = {}
    for d in Difficulty:
        members = [r for r in results if classify(r.d_min) is d]
        rate = 100.0 * sum(r.success for r in members) / len(members) if members else float("nan")
        diff[d] = (len(members), rate)
    outcomes = {o: sum(r.outcome is o for r in results) for o in Outcome}
    return Metrics(
        len(results), 100.0 * len(ok) / len(results),
        *_mean_std([r.time for r in ok]),
        *_mean_std(np.concatenate(acc) if acc else []),
        *_mean_std(np.concatenate(jerk) if jerk else []),
        diff, outcomes)


def _one(args):
    task, cfg, settings = args
    return run_episode(task.map, cfg, settings=settings)


def run_suite(tasks, settings=ExpertSettings(), workers=1, seed=0, **episode_kw):
    """Run one episode per task; results come back in task order."""
    jobs = [(t, EpisodeConfig(t.start, t.goal, seed=seed + i, **episode_kw), settings)
            for i, t in enumerate(tasks)]
    if workers <= 1:
        return [_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_one, jobs))


COST_VARIANTS = {
    "reach_dist": (Provenance.REACHABILITY, True),
    "reach_nodist": (Provenance.REACHABILITY, False),
    "heuristic": (Provenance.HEURISTIC, False),
}


def sweep_replan_frequency(tasks, frequencies=PAPER_FREQUENCIES,
                           variants=("reach_dist", "heuristic"),
                           settings=ExpertSettings(), workers=1, seed=0, **episode_kw):
    """Metrics per (frequency, cost variant), frequency-major."""
    if not frequencies or any(f <= 0 for f in frequencies):
        raise ValidationError("frequencies must be positive")
    rows = []
    for f in frequencies:
        for name in variants:
            prov, dist = COST_VARIANTS[name]
            res = run_suite(tasks, settings, workers, seed, replan_hz=float(f), cost=prov,
                            disturbance=dist, **episode_kw)
            rows.append((float(f), name, compute_metrics(res)))
    return rows


METRIC_COLUMNS = ("variant", "replan_hz", "n", "success_pct", "time_mean", "time_std",
                  "accel_mean", "accel_std", "jerk_mean", "jerk_std",
                  "hard_n", "hard_success_pct", "medium_n", "medium_success_pct",
                  "easy_n", "easy_success_pct", "collisions", "timeouts", "plan_failures")


def metrics_row(variant, hz, m):
    def f(x):
        return "nan" if x != x else f"{x:.6f}"
    row = [variant, f"{hz:g}", str(m.n), f(m.success_rate), f(m.time_mean), f(m.time_std),
           f(m.accel_mean), f(m.accel_std), f(m.jerk_mean), f(m.jerk_std)]
    for d in Difficulty:
        cnt, rate = m.difficulty[d]
        row += [str(cnt), f(rate)]
    row += [str(m.outcomes[Outcome.COLLISION]), str(m.outcomes[Outcome.TIMEOUT]),
            str(m.outcomes[Outcome.PLAN_FAILURE])]
    return row


def write_metrics_csv(fh, rows, header_lines=()):
    for line in header_lines:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for variant, hz, m in rows:
        w.writerow(metrics_row(variant, hz, m))


def format_table(rows):
    head = f"{'variant':<14}{'Hz':>6}{'n':>5}{'succ%':>8}{'time':>14}{'accel':>14}{'jerk':>14}"
    lines = [head, "-" * len(head)]
    for variant, hz, m in rows:
        lines.append(f"{variant:<14}{hz:>6g}{m.n:>5}{m.success_rate:>8.1f}"
                     f"{m.time_mean:>7.2f}±{m.time_std:<6.2f}{m.accel_mean:>7.3f}±{m.accel_std:<6.3f}"
                     f"{m.jerk_mean:>7.2f}±{m.jerk_std:<6.2f}")
    return "\n".join(lines)

