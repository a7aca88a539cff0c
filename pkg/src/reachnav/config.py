"""Scenario configuration files (YAML) and their resolved settings.

Every section is optional; missing keys take the defaults below and unknown
keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import copy
import hashlib
import json
from importlib import metadata
from pathlib import Path

import numpy as np
import yaml

from .cost import Provenance
from .dynamics import DynamicsBounds, VehicleState
from .errors import ValidationError
from .hj import GoalSpec, SolveConfig
from .occupancy import OccupancyMap
from .planner import PlannerConfig
from .sim.episode import EpisodeConfig, ExpertSettings
from .sim.maps import Task, generate_task

DEFAULTS = {
    "bounds": {"v_max": 0.6, "a_max": 0.4, "omega_max": 1.1, "dxy_max": 0.05, "dphi_max": 0.15},
    "grid": {"nv": 7, "nphi": 24},
    "solver": {"tol": 1e-3, "max_cycles": 500, "ttc_cap": 4.0, "scheme": "local",
               "wall_rule": "upwind"},
    "cost": {"alpha": 30.0, "lam1": 0.3, "lam2": 1.0},
    "planner": {"forward": [0.1, 1.0], "n_forward": 10, "lateral": [-0.6, 0.6], "n_lateral": 9,
                "heading": [-np.pi / 2, np.pi / 2], "n_heading": 7, "horizon": 1.5, "dt": 0.05,
                "terminal_speed": "search", "speed_floor": 0.1, "n_speed": 4},
    "tracker": {"q": [1.0, 1.0, 0.1, 0.5], "r": [0.1, 0.1]},
    "episode": {"replan_hz": 4.0, "timeout": 60.0, "cost": "reachability", "disturbance": True,
                "noise_pos": 0.0, "noise_heading": 0.0, "dt": 0.05,
                "rollout_disturbance": False},
    # single scene: either a generated task or a map file with start and goal
    "scenario": {"kind": "doorway", "params": {}, "seed": 0, "map": None, "start": None,
                 "goal": None},
    "suite": {"kind": "doorway", "params": {"width": 0.5}, "count": 10, "seed": 0},
    "bench": {"variants": ["reach_dist", "reach_nodist", "heuristic"]},
    "sweep": {"frequencies": [0.67, 1.0, 2.0, 4.0, 6.67], "variants": ["reach_dist", "heuristic"]},
    "dataset": {"replan_hz": 0.6666666666666666, "rows": 32, "cols": 32, "length": 4.5,
                "width": 4.5},
}

# sections whose contents are free-form mappings
_OPEN = {("scenario", "params"), ("suite", "params")}


def code_version():
    try:
        return metadata.version("reachnav")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _merge(base, over, path=()):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ValidationError(f"unknown config key {'.'.join(path + (str(k),))}")
        if isinstance(base[k], dict) and path + (k,) not in _OPEN:
            if not isinstance(v, dict):
                raise ValidationError(f"config key {'.'.join(path + (k,))} must be a mapping")
            out[k] = _merge(base[k], v, path + (k,))
        else:
            out[k] = v
    return out


class Config:
    """Resolved configuration plus the builders the CLI needs."""

    def __init__(self, data=None, source=None):
        self.data = _merge(DEFAULTS, data or {})
        self.source = source
        try:
            self.settings = self._settings()
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"bad config value: {exc}") from exc

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ValidationError(f"{path}: invalid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError(f"{path}: top level must be a mapping")
        return cls(data, source=path)

    def with_seed(self, seed):
        if seed is None:
            return self
        data = copy.deepcopy(self.data)
        data["scenario"]["seed"] = seed
        data["suite"]["seed"] = seed
        return Config(data, self.source)

    def digest(self):
        blob = json.dumps(self.data, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def provenance(self):
        return [f"reachnav {code_version()}", f"config sha256:{self.digest()}"]

    def _settings(self):
        d = self.data
        b = DynamicsBounds(**d["bounds"])
        s = d["solver"]
        p = d["planner"]
        return ExpertSettings(
            bounds=b, nv=int(d["grid"]["nv"]), nphi=int(d["grid"]["nphi"]),
            solve=SolveConfig(tol=s["tol"], max_cycles=int(s["max_cycles"]),
                              ttc_cap=s["ttc_cap"], scheme=s["scheme"],
                              wall_rule=s["wall_rule"]),
            alpha=d["cost"]["alpha"], lam1=d["cost"]["lam1"], lam2=d["cost"]["lam2"],
            planner=PlannerConfig(
                forward=tuple(p["forward"]), n_forward=int(p["n_forward"]),
                lateral=tuple(p["lateral"]), n_lateral=int(p["n_lateral"]),
                heading=tuple(p["heading"]), n_heading=int(p["n_heading"]),
                horizon=p["horizon"], dt=p["dt"], terminal_speed=p["terminal_speed"],
                speed_floor=p["speed_floor"], n_speed=int(p["n_speed"])),
            q_diag=tuple(d["tracker"]["q"]), r_diag=tuple(d["tracker"]["r"]))

    def episode_kwargs(self, **override):
        e = dict(self.data["episode"])
        e["cost"] = Provenance(e["cost"])
        e.update(override)
        return e

    def scenario(self):
        """The single scene used by solve/cost/plan/run/export."""
        sc = self.data["scenario"]
        if sc["map"] is None:
            return generate_task(sc["kind"], sc["params"], int(sc["seed"]))
        path = Path(sc["map"])
        if not path.is_absolute() and self.source is not None:
            path = self.source.parent / path
        if not path.exists():
            raise ValidationError(f"map file not found: {path}")
        if sc["start"] is None or sc["goal"] is None:
            raise ValidationError("a map scenario needs start and goal")
        start = VehicleState(*(float(c) for c in sc["start"]))
        goal = GoalSpec(*(float(c) for c in sc["goal"]))
        return Task("file", int(sc["seed"]), OccupancyMap.load(path), start, goal)

    def suite(self):
        su = self.data["suite"]
        n = int(su["count"])
        if n < 1:
            raise ValidationError("suite.count must be >= 1")
        return [generate_task(su["kind"], su["params"], int(su["seed"]) + i) for i in range(n)]

    def episode_config(self, task, **override):
        kw = self.episode_kwargs(**override)
        kw.setdefault("seed", int(self.data["scenario"]["seed"]))
        return EpisodeConfig(task.start, task.goal, **kw)
