"""Command-line front end.

    reachnav {solve,cost,plan,run,bench,dataset,sweep,export} [--config FILE] [--out DIR]
             [--seed N] [--workers N] [--quiet]

Exit status: 0 on success, 1 on invalid input, 2 on numerical failure.
Diagnostics go to stderr; results only to files under --out.  The value
cache directory is taken from REACHNAV_CACHE_DIR ("off" disables it).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import report
from .config import Config
from .cost import Provenance
from .errors import NumericalError, ReachNavError, ValidationError
from .hj import solve_ttc, solve_ttr
from .planner import evaluate_candidates, plan
from .sim.dataset import CropSpec, generate_dataset
from .sim.episode import build_cost_map, run_episode
from .sim.metrics import (COST_VARIANTS, METRIC_COLUMNS, compute_metrics, format_table,
                          metrics_row, run_suite, sweep_replan_frequency)

log = logging.getLogger("reachnav")

COMMANDS = ("solve", "cost", "plan", "run", "bench", "dataset", "sweep", "export")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # bad usage is an input error, not a numerical one
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario YAML file (defaults if omitted)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--seed", type=int, help="override scenario and suite seeds")
    common.add_argument("--workers", type=int, default=1, help="parallel episodes (bench, sweep)")
    common.add_argument("--quiet", action="store_true", help="only report errors")
    p = _Parser(prog="reachnav", description="Reachability-based navigation expert.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "solve": "solve the TTR and TTC value functions for the scenario",
        "cost": "build the configured cost map for the scenario",
        "plan": "single-shot plan from the scenario start",
        "run": "simulate one episode",
        "bench": "run the task suite for every cost variant",
        "dataset": "write the supervision dataset for the suite",
        "sweep": "replanning-frequency sweep over the suite",
        "export": "map and expert paths with and without disturbance (CSV and SVG)",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def _bounds_for(cfg, disturbance):
    b = cfg.settings.bounds
    return b if disturbance else b.without_disturbance()


def cmd_solve(cfg, out, args):
    task = cfg.scenario()
    s = cfg.settings
    dist = cfg.data["episode"]["disturbance"]
    grid = task.map.grid(s.bounds.v_max, s.nv, s.nphi)
    bounds = _bounds_for(cfg, dist)
    scfg = replace(s.solve, dissipation_bounds=s.bounds)
    ttr, r1 = solve_ttr(grid, bounds, task.goal, task.map, scfg, return_report=True)
    ttc, r2 = solve_ttc(grid, bounds, task.map, scfg, return_report=True)
    ttr.save(out / "ttr.vf")
    ttc.save(out / "ttc.vf")
    rows = [["TTR", i + 1, f"{r:.6e}"] for i, r in enumerate(r1.residuals)]
    rows += [["TTC", i + 1, f"{r:.6e}"] for i, r in enumerate(r2.residuals)]
    report.write_csv(out / "residuals.csv", ["field", "cycle", "residual"], rows, cfg.provenance())
    log.info("TTR converged in %d cycles, TTC in %d", r1.cycles, r2.cycles)


def _cost_map(cfg, task, **override):
    e = cfg.episode_kwargs(**override)
    return build_cost_map(task.map, task.goal, e["cost"], e["disturbance"], cfg.settings)


def cmd_cost(cfg, out, args):
    task = cfg.scenario()
    cm = _cost_map(cfg, task)
    cm.field.save(out / "cost.vf")
    g = cm.grid
    iphi = int(np.argmin(np.abs(g.axis(3) - task.start.phi)))
    cm.field.write_slice_csv(out / "cost_slice.csv", g.n[2] - 1, iphi)
    log.info("%s cost map written", cm.provenance.value)


def cmd_plan(cfg, out, args):
    task = cfg.scenario()
    cm = _cost_map(cfg, task)
    s = cfg.settings
    state = np.array(task.start)
    cands = evaluate_candidates(state, cm, s.planner, s.bounds)
    rows = [[i, *(report.fmt(c) for c in w), report.fmt(v), int(f),
             "inf" if not np.isfinite(c) else report.fmt(c)]
            for i, (w, v, f, c) in enumerate(zip(cands.waypoints, cands.speeds, cands.feasible,
                                                  cands.costs))]
    report.write_csv(out / "candidates.csv",
                     ["index", "x", "y", "theta", "v_end", "feasible", "cost"],
                     rows, cfg.provenance())
    wp, traj = plan(state, cm, s.planner, s.bounds)
    _write_traj(out / "trajectory.csv", traj.times, traj.states, traj.controls, cfg)
    log.info("chosen waypoint (%.3f, %.3f, %.3f)", wp.x, wp.y, wp.theta)


def _write_traj(path, t, states, controls, cfg):
    controls = np.vstack([controls, np.full((len(states) - len(controls), 2), np.nan)])
    rows = [[report.fmt(ti), *(report.fmt(c) for c in z), *("" if np.isnan(c) else report.fmt(c)
                                                         for c in u)]
            for ti, z, u in zip(t, states, controls)]
    report.write_csv(path, ["t", "x", "y", "v", "phi", "a", "omega"], rows, cfg.provenance())


def cmd_run(cfg, out, args):
    task = cfg.scenario()
    ecfg = cfg.episode_config(task)
    res = run_episode(task.map, ecfg, settings=cfg.settings)
    dt = ecfg.dt
    _write_traj(out / "trace.csv", dt * np.arange(len(res.states)), res.states, res.controls, cfg)
    report.write_csv(out / "summary.csv", ["outcome", "time", "d_min", "replans"],
                     [[res.outcome.value, report.fmt(res.time), report.fmt(res.d_min),
                       len(res.replans)]], cfg.provenance())
    cols = ["step", "x", "y", "v", "phi", "omega", "wp_x", "wp_y", "wp_theta",
            "exec_x", "exec_y", "exec_theta"]
    rows = [[int(r[0]), *(report.fmt(c) for c in r[1:])] for r in res.replans]
    report.write_csv(out / "replans.csv", cols, rows, cfg.provenance())
    log.info("%s after %.2f s, d_min %.3f m", res.outcome.value, res.time, res.d_min)


def _variants(names):
    bad = [n for n in names if n not in COST_VARIANTS]
    if bad:
        raise ValidationError(f"unknown cost variant(s) {bad}; choose from {list(COST_VARIANTS)}")
    return names


def cmd_bench(cfg, out, args):
    tasks = cfg.suite()
    seed = int(cfg.data["suite"]["seed"])
    hz = float(cfg.data["episode"]["replan_hz"])
    rows, episodes = [], []
    for name in _variants(cfg.data["bench"]["variants"]):
        prov, dist = COST_VARIANTS[name]
        kw = cfg.episode_kwargs(cost=prov, disturbance=dist)
        res = run_suite(tasks, cfg.settings, args.workers, seed, **kw)
        rows.append((hz, name, compute_metrics(res)))
        episodes += [[name, i, r.outcome.value, report.fmt(r.time), report.fmt(r.d_min)]
                     for i, r in enumerate(res)]
    head = cfg.provenance() + _artifact_notes(cfg)
    report.write_csv(out / "metrics.csv", METRIC_COLUMNS,
                     [metrics_row(v, f, m) for f, v, m in rows], head)
    report.write_csv(out / "episodes.csv", ["variant", "task", "outcome", "time", "d_min"],
                     episodes, cfg.provenance())
    table = format_table([(v, f, m) for f, v, m in rows])
    (out / "metrics.txt").write_text(table + "\n")
    report.plot_success(out / "success.png", rows)
    if not args.quiet:
        print(table, file=sys.stderr)


def _artifact_notes(cfg):
    c = cfg.data["cost"]
    return [f"heuristic lam1={c['lam1']} lam2={c['lam2']} (artifact defaults)",
            f"tracker Q={cfg.data['tracker']['q']} R={cfg.data['tracker']['r']} (artifact defaults)"]


def cmd_dataset(cfg, out, args):
    d = cfg.data["dataset"]
    spec = CropSpec(int(d["rows"]), int(d["cols"]), float(d["length"]), float(d["width"]))
    kw = cfg.episode_kwargs(replan_hz=float(d["replan_hz"]))
    n = generate_dataset(cfg.suite(), out / "dataset.bin", cfg.settings, spec,
                         seed=int(cfg.data["suite"]["seed"]), **kw)
    log.info("%d records written", n)


def cmd_sweep(cfg, out, args):
    sw = cfg.data["sweep"]
    kw = cfg.episode_kwargs()
    for k in ("replan_hz", "cost", "disturbance"):
        kw.pop(k)
    rows = sweep_replan_frequency(cfg.suite(), [float(f) for f in sw["frequencies"]],
                                  _variants(sw["variants"]), cfg.settings, args.workers,
                                  int(cfg.data["suite"]["seed"]), **kw)
    report.write_csv(out / "sweep.csv", METRIC_COLUMNS,
                     [metrics_row(v, f, m) for f, v, m in rows],
                     cfg.provenance() + _artifact_notes(cfg))
    (out / "sweep.txt").write_text(format_table([(v, f, m) for f, v, m in rows]) + "\n")
    report.plot_success(out / "sweep.png", rows)


def cmd_export(cfg, out, args):
    task = cfg.scenario()
    paths, rows = {}, []
    for label, dist in (("with disturbance", True), ("without disturbance", False)):
        ecfg = cfg.episode_config(task, cost=Provenance.REACHABILITY, disturbance=dist)
        res = run_episode(task.map, ecfg, settings=cfg.settings)
        paths[label] = res.states
        rows += [[label, k, report.fmt(z[0]), report.fmt(z[1])] for k, z in enumerate(res.states)]
        log.info("%s: %s, d_min %.3f m", label, res.outcome.value, res.d_min)
    report.write_csv(out / "paths.csv", ["label", "step", "x", "y"], rows, cfg.provenance())
    report.write_csv(out / "map.csv", ["ix", "iy", "x", "y"],
                     [[i, j, report.fmt(task.map.centers(0)[i]), report.fmt(task.map.centers(1)[j])]
                      for i, j in np.argwhere(task.map.occupied)], cfg.provenance())
    report.svg_overlay(out / "overlay.svg", task.map, paths, task.goal,
                       header_lines=cfg.provenance())
    report.plot_overlay(out / "overlay.png", task.map, paths, task.goal)


HANDLERS = {"solve": cmd_solve, "cost": cmd_cost, "plan": cmd_plan, "run": cmd_run,
            "bench": cmd_bench, "dataset": cmd_dataset, "sweep": cmd_sweep,
            "export": cmd_export}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.workers < 1:
            raise ValidationError("--workers must be >= 1")
        cfg = Config.load(args.config) if args.config else Config()
        cfg = cfg.with_seed(args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        HANDLERS[args.command](cfg, args.out, args)
    except NumericalError as exc:
        log.error("%s", exc)
        return 2
    except (ReachNavError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
