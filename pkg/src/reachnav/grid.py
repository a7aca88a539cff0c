"""Regular 4D grid over (x, y, v, phi) and scalar value fields on it.

Values are stored as float64 arrays of shape ``(nx, ny, nv, nphi)`` indexed
``[ix, iy, iv, iphi]``.  On disk the layout is x-fastest (Fortran order of
that array), which is what ``ValueField.save`` writes.
"""

from __future__ import annotations

import csv
import enum
import itertools
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GridMismatchError, OutOfDomainError, ValidationError

UNREACHABLE = 1.0e6
DIM_NAMES = ("x", "y", "v", "phi")
PHI = 3

_MAGIC = b"RNVF"
_VERSION = 1
_HEADER = struct.Struct("<4sH")
_DIM = struct.Struct("<ddI?")
_TAIL = struct.Struct("<Bd")


class FieldKind(enum.IntEnum):
    TTR = 1
    TTC = 2
    COST = 3


def wrap_angle(phi):
    """Wrap angles into [-pi, pi)."""
    return (np.asarray(phi, dtype=float) + np.pi) % (2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class Grid4D:
    lo: tuple
    hi: tuple
    n: tuple
    periodic: tuple

    @property
    def shape(self):
        return tuple(int(k) for k in self.n)

    @property
    def spacing(self):
        return np.array([
            (self.hi[i] - self.lo[i]) / (self.n[i] if self.periodic[i] else self.n[i] - 1)
            for i in range(4)
        ])

    def axis(self, dim):
        """Node coordinates along one dimension."""
        return self.lo[dim] + self.spacing[dim] * np.arange(self.n[dim])

    def neighbor(self, dim, index, step):
        """Index of the neighbor ``step`` nodes away, or None off a non-periodic edge."""
        j = index + step
        if self.periodic[dim]:
            return j % self.n[dim]
        return j if 0 <= j < self.n[dim] else None

    def mesh(self):
        return np.meshgrid(*(self.axis(d) for d in range(4)), indexing="ij")

    def same_as(self, other):
        return (
            self.n == other.n
            and self.periodic == other.periodic
            and np.allclose(self.lo, other.lo)
            and np.allclose(self.hi, other.hi)
        )


def build_grid(bounds, counts, periodic=(False, False, False, True)):
    """Validate per-dimension ranges and node counts and return a `Grid4D`.

    Only the heading dimension may be periodic, and it must be, covering
    [-pi, pi).  The speed dimension must start at zero.
    """
    bounds = [tuple(float(b) for b in pair) for pair in bounds]
    counts = tuple(int(c) for c in counts)
    periodic = tuple(bool(p) for p in periodic)
    if len(bounds) != 4 or len(counts) != 4 or len(periodic) != 4:
        raise ValidationError("grid needs exactly four dimensions (x, y, v, phi)")
    for name, (lo, hi), n in zip(DIM_NAMES, bounds, counts):
        if not hi > lo:
            raise ValidationError(f"zero-width or inverted range for {name}: [{lo}, {hi}]")
        if n < 2:
            raise ValidationError(f"{name} needs at least 2 cells, got {n}")
    if any(periodic[:3]):
        bad = [DIM_NAMES[i] for i in range(3) if periodic[i]]
        raise ValidationError(f"periodic flag only allowed on phi, not {bad}")
    if not periodic[PHI]:
        raise ValidationError("phi must be periodic")
    if not (np.isclose(bounds[PHI][0], -np.pi) and np.isclose(bounds[PHI][1], np.pi)):
        raise ValidationError("periodic phi must cover [-pi, pi)")
    if bounds[2][0] != 0.0:
        raise ValidationError("speed range must start at 0")
    lo = tuple(b[0] for b in bounds)
    hi = tuple(b[1] for b in bounds)
    return Grid4D(lo, hi, counts, periodic)


@dataclass(frozen=True)
class ValueField:
    grid: Grid4D
    values: np.ndarray
    kind: FieldKind
    sentinel: float = UNREACHABLE

    def __post_init__(self):
        if tuple(self.values.shape) != self.grid.shape:
            raise GridMismatchError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}")
        if self.values.flags.writeable:
            self.values.flags.writeable = False

    def unreachable_mask(self):
        return self.values >= self.sentinel

    def save(self, path):
        path = Path(path)
        with path.open("wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, _VERSION))
            for d in range(4):
                fh.write(_DIM.pack(self.grid.lo[d], self.grid.hi[d], self.grid.n[d],
                                   self.grid.periodic[d]))
            fh.write(_TAIL.pack(int(self.kind), self.sentinel))
            fh.write(np.asarray(self.values, dtype="<f8").ravel(order="F").tobytes())

    @classmethod
    def load(cls, path):
        data = Path(path).read_bytes()
        magic, version = _HEADER.unpack_from(data, 0)
        if magic != _MAGIC:
            raise ValidationError(f"{path}: not a value-field file")
        if version != _VERSION:
            raise ValidationError(f"{path}: unsupported version {version}")
        off = _HEADER.size
        lo, hi, n, per = [], [], [], []
        for _ in range(4):
            a, b, c, p = _DIM.unpack_from(data, off)
            off += _DIM.size
            lo.append(a), hi.append(b), n.append(c), per.append(p)
        kind, sentinel = _TAIL.unpack_from(data, off)
        off += _TAIL.size
        grid = Grid4D(tuple(lo), tuple(hi), tuple(n), tuple(per))
        count = int(np.prod(n))
        if len(data) - off != 8 * count:
            raise ValidationError(f"{path}: truncated payload")
        values = np.frombuffer(data, dtype="<f8", count=count, offset=off)
        values = values.reshape(grid.shape, order="F").astype(float)
        return cls(grid, values, FieldKind(kind), sentinel)

    def write_slice_csv(self, path, iv, iphi):
        """Write the (x, y) slice at fixed speed/heading node indices as long-form CSV."""
        xs, ys = self.grid.axis(0), self.grid.axis(1)
        v = self.grid.axis(2)[iv]
        phi = self.grid.axis(3)[iphi]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "v", "phi", "value"])
            for iy, y in enumerate(ys):
                for ix, x in enumerate(xs):
                    w.writerow([f"{x:.6g}", f"{y:.6g}", f"{v:.6g}", f"{phi:.6g}",
                                f"{self.values[ix, iy, iv, iphi]:.9g}"])


def _locate(grid, states, strict):
    """Per-dimension base index and fractional offset for each state.

    Returns (idx0, idx1, frac, inside) with arrays of shape (m, 4).
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    h = grid.spacing
    idx0 = np.empty(states.shape, dtype=np.int64)
    idx1 = np.empty(states.shape, dtype=np.int64)
    frac = np.empty(states.shape)
    inside = np.ones(len(states), dtype=bool)
    for d in range(4):
        n = grid.n[d]
        q = states[:, d]
        if grid.periodic[d]:
            s = (wrap_angle(q) - grid.lo[d]) / h[d]
            i0 = np.floor(s).astype(np.int64) % n
            t = s - np.floor(s)
            idx0[:, d] = i0
            idx1[:, d] = (i0 + 1) % n
            frac[:, d] = t
            continue
        s = (q - grid.lo[d]) / h[d]
        tol = 1e-9
        ok = (s >= -tol) & (s <= n - 1 + tol)
        inside &= ok
        s = np.clip(s, 0.0, n - 1)
        i0 = np.minimum(np.floor(s).astype(np.int64), n - 2)
        idx0[:, d] = i0
        idx1[:, d] = i0 + 1
        frac[:, d] = s - i0
    if strict and not inside.all():
        bad = states[~inside][0]
        raise OutOfDomainError(f"state {tuple(bad)} outside grid bounds")
    return idx0, idx1, frac, inside


def interpolate_many(field, states, outside=None, conservative=True):
    """Multilinear interpolation at many states, shape (m, 4) -> (m,).

    With ``conservative`` set, any corner carrying the sentinel that has a
    nonzero weight makes the result the sentinel.  States outside the grid in
    x, y or v raise unless ``outside`` gives a fill value.
    """
    idx0, idx1, frac, inside = _locate(field.grid, states, strict=outside is None)
    vals = field.values
    m = len(frac)
    acc = np.zeros(m)
    blocked = np.zeros(m, dtype=bool)
    for corner in itertools.product((0, 1), repeat=4):
        w = np.ones(m)
        ix = []
        for d, c in enumerate(corner):
            if c:
                w *= frac[:, d]
                ix.append(idx1[:, d])
            else:
                w *= 1.0 - frac[:, d]
                ix.append(idx0[:, d])
        corner_vals = vals[ix[0], ix[1], ix[2], ix[3]]
        if conservative:
            blocked |= (w > 0.0) & (corner_vals >= field.sentinel)
        acc += w * corner_vals
    if conservative:
        acc[blocked] = field.sentinel
    if outside is not None:
        acc[~inside] = outside
    return acc


def interpolate(field, state):
    """Value at one state, conservative near sentinel nodes; raises off-grid."""
    return float(interpolate_many(field, np.asarray(state, dtype=float)[None, :])[0])


def gradient_field(values, grid):
    """Finite-difference gradient at every node, shape (4, *grid.shape).

    Central differences in the interior, first-order one-sided at the edges of
    non-periodic dimensions, wrapped central differences in phi.
    """
    h = grid.spacing
    out = np.empty((4,) + values.shape)
    for d in range(4):
        if grid.periodic[d]:
            out[d] = (np.roll(values, -1, axis=d) - np.roll(values, 1, axis=d)) / (2 * h[d])
        else:
            out[d] = np.gradient(values, h[d], axis=d, edge_order=1)
    return out


def gradient(field, node_index):
    """Gradient (dV/dx, dV/dy, dV/dv, dV/dphi) at one node."""
    grid = field.grid
    node_index = tuple(int(i) for i in node_index)
    for d, i in enumerate(node_index):
        if not 0 <= i < grid.n[d]:
            raise ValidationError(f"node index {node_index} outside grid")
    vals = field.values
    h = grid.spacing
    g = np.empty(4)
    for d in range(4):
        i = node_index[d]
        up = grid.neighbor(d, i, +1)
        dn = grid.neighbor(d, i, -1)

        def at(j):
            idx = list(node_index)
            idx[d] = j
            return vals[tuple(idx)]

        if up is not None and dn is not None:
            g[d] = (at(up) - at(dn)) / (2 * h[d])
        elif up is not None:
            g[d] = (at(up) - at(i)) / h[d]
        else:
            g[d] = (at(i) - at(dn)) / h[d]
    return g
