"""Supervision dataset: egocentric occupancy crops paired with expert waypoints.

File layout (little endian):

    header   magic b"RNDS", u16 version, u16 crop rows, u16 crop cols,
             f64 window length ahead (m), f64 window width (m)
    records  u32 payload length, then the payload:
             u32 task index, u32 replan index,
             f64 v, f64 omega, f64 x_hat, f64 y_hat, f64 theta_hat,
             crop bits packed MSB first, row-major

Crop row r covers forward distance (r + 0.5) * length / rows from the robot,
column c covers lateral offset width / 2 - (c + 0.5) * width / cols (left
first).  The label waypoint is in the robot frame.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from ..planner import ego_to_world, world_to_ego
from .episode import EpisodeConfig, ExpertSettings, run_episode

log = logging.getLogger(__name__)

MAGIC = b"RNDS"
VERSION = 1
_HEADER = struct.Struct("<4sHHHdd")
_FIXED = struct.Struct("<IIddddd")
_LEN = struct.Struct("<I")


@dataclass(frozen=True)
class CropSpec:
    rows: int = 32
    cols: int = 32
    length: float = 4.5
    width: float = 4.5

    def __post_init__(self):
        if min(self.rows, self.cols) < 1 or min(self.length, self.width) <= 0:
            raise ValidationError("crop needs positive size")


@dataclass(frozen=True)
class SupervisionRecord:
    task: int
    replan: int
    crop: np.ndarray  # (rows, cols) bool
    v: float
    omega: float
    waypoint: tuple  # (x_hat, y_hat, theta_hat), robot frame

    def waypoint_world(self, pose):
        return ego_to_world(np.array(self.waypoint), pose)[0]


def egocentric_crop(omap, pose, spec=CropSpec()):
    """Occupancy sampled on a window ahead of the robot; off-map counts as occupied."""
    fwd = (np.arange(spec.rows) + 0.5) * spec.length / spec.rows
    lat = spec.width / 2 - (np.arange(spec.cols) + 0.5) * spec.width / spec.cols
    F, L = np.meshgrid(fwd, lat, indexing="ij")
    c, s = np.cos(pose[2]), np.sin(pose[2])
    X = pose[0] + c * F - s * L
    Y = pose[1] + s * F + c * L
    return np.asarray(omap.is_occupied(X, Y), dtype=bool)


def records_from_episode(omap, result, task_index, spec=CropSpec()):
    out = []
    for n, row in enumerate(result.replans):
        state = row[1:5]
        pose = (state[0], state[1], state[3])
        label = world_to_ego(row[6:9], pose)[0]
        out.append(SupervisionRecord(task_index, n, egocentric_crop(omap, pose, spec),
                                     float(state[2]), float(row[5]), tuple(float(c) for c in label)))
    return out


def encode_record(rec):
    payload = _FIXED.pack(rec.task, rec.replan, rec.v, rec.omega, *rec.waypoint)
    payload += np.packbits(np.asarray(rec.crop, dtype=bool).ravel()).tobytes()
    return _LEN.pack(len(payload)) + payload


def write_header(fh, spec):
    fh.write(_HEADER.pack(MAGIC, VERSION, spec.rows, spec.cols, spec.length, spec.width))


def read_dataset(path):
    """Return (CropSpec, list of SupervisionRecord)."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValidationError(f"{path}: too short for a dataset header")
    magic, version, rows, cols, length, width = _HEADER.unpack_from(data, 0)
    if magic != MAGIC or version != VERSION:
        raise ValidationError(f"{path}: not a supported dataset file")
    spec = CropSpec(rows, cols, length, width)
    off = _HEADER.size
    recs = []
    while off < len(data):
        (n,) = _LEN.unpack_from(data, off)
        off += _LEN.size
        if off + n > len(data):
            raise ValidationError(f"{path}: truncated record")
        task, rep, v, w, x, y, th = _FIXED.unpack_from(data, off)
        bits = np.frombuffer(data, dtype=np.uint8, count=n - _FIXED.size, offset=off + _FIXED.size)
        crop = np.unpackbits(bits)[: rows * cols].astype(bool).reshape(rows, cols)
        recs.append(SupervisionRecord(task, rep, crop, v, w, (x, y, th)))
        off += n
    return spec, recs


def generate_dataset(tasks, path, settings=ExpertSettings(), spec=CropSpec(), seed=0,
                     **episode_kw):
    """Run the expert on every task and stream one record per replan of each success.

    ``episode_kw`` is forwarded to EpisodeConfig (replan_hz, cost, noise, ...);
    task i uses seed ``seed + i``.  Returns the number of records written.
    """
    count = 0
    with open(path, "wb") as fh:
        write_header(fh, spec)
        for i, task in enumerate(tasks):
            cfg = EpisodeConfig(task.start, task.goal, seed=seed + i, **episode_kw)
            result = run_episode(task.map, cfg, settings=settings)
            if not result.success:
                log.info("task %d ended with %s; no records", i, result.outcome.value)
                continue
            for rec in records_from_episode(task.map, result, i, spec):
                fh.write(encode_record(rec))
                count += 1
    return count
