"""2D occupancy maps: storage, ASCII/binary IO and the map-aligned 4D grid."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .grid import build_grid

_MAGIC = b"RNOM"
_VERSION = 1
_HEADER = struct.Struct("<4sHIIddd")


@dataclass(frozen=True)
class OccupancyMap:
    """Boolean occupancy indexed ``[ix, iy]``; cell (0, 0) has its lower-left corner at origin."""

    occupied: np.ndarray
    cell_size: float = 0.1
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        occ = np.asarray(self.occupied, dtype=bool)
        if occ.ndim != 2 or min(occ.shape) < 2:
            raise ValidationError("occupancy must be a 2D array of at least 2x2 cells")
        if self.cell_size <= 0:
            raise ValidationError("cell size must be positive")
        occ = occ.copy()
        occ.flags.writeable = False
        object.__setattr__(self, "occupied", occ)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self):
        return self.occupied.shape

    @property
    def extent(self):
        nx, ny = self.shape
        x0, y0 = self.origin
        return (x0, x0 + nx * self.cell_size, y0, y0 + ny * self.cell_size)

    def centers(self, axis):
        return self.origin[axis] + (np.arange(self.shape[axis]) + 0.5) * self.cell_size

    def cell_of(self, x, y):
        """Integer cell indices of world points (may fall outside the map)."""
        ix = np.floor((np.asarray(x) - self.origin[0]) / self.cell_size).astype(np.int64)
        iy = np.floor((np.asarray(y) - self.origin[1]) / self.cell_size).astype(np.int64)
        return ix, iy

    def is_occupied(self, x, y):
        """Occupancy at world points; anything off the map counts as occupied."""
        ix, iy = self.cell_of(x, y)
        nx, ny = self.shape
        inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        out = np.ones(np.shape(ix), dtype=bool)
        out[inside] = self.occupied[ix[inside], iy[inside]]
        return out if out.ndim else bool(out)

    def has_closed_border(self):
        o = self.occupied
        return bool(o[0, :].all() and o[-1, :].all() and o[:, 0].all() and o[:, -1].all())

    def grid(self, v_max, nv=7, nphi=24):
        """4D grid whose (x, y) nodes sit on the cell centers."""
        xs, ys = self.centers(0), self.centers(1)
        return build_grid(
            [(xs[0], xs[-1]), (ys[0], ys[-1]), (0.0, v_max), (-np.pi, np.pi)],
            [len(xs), len(ys), nv, nphi],
        )

    # -- IO ---------------------------------------------------------------

    @classmethod
    def from_ascii(cls, text, cell_size=0.1, origin=(0.0, 0.0)):
        """Parse ``#``/``.`` art; the first line is the top row (largest y)."""
        rows = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        if not rows or len({len(r) for r in rows}) != 1:
            raise ValidationError("ASCII map rows must be non-empty and equal length")
        bad = set("".join(rows)) - set("#.")
        if bad:
            raise ValidationError(f"unexpected characters in ASCII map: {sorted(bad)}")
        arr = np.array([[c == "#" for c in r] for r in rows], dtype=bool)
        return cls(arr[::-1].T, cell_size, origin)

    def to_ascii(self):
        return "\n".join("".join("#" if c else "." for c in row) for row in self.occupied.T[::-1])

    def to_bytes(self):
        nx, ny = self.shape
        head = _HEADER.pack(_MAGIC, _VERSION, nx, ny, self.cell_size, *self.origin)
        # rows of constant y, x fastest
        return head + np.packbits(self.occupied.T.ravel()).tobytes()

    @classmethod
    def from_bytes(cls, data):
        if len(data) < _HEADER.size:
            raise ValidationError("map file too short")
        magic, version, nx, ny, cell, ox, oy = _HEADER.unpack_from(data, 0)
        if magic != _MAGIC or version != _VERSION:
            raise ValidationError("not a supported occupancy-map file")
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size))
        if bits.size < nx * ny:
            raise ValidationError("map file payload truncated")
        occ = bits[: nx * ny].astype(bool).reshape(ny, nx).T
        return cls(occ, cell, (ox, oy))

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path):
        path = Path(path)
        if path.suffix in (".txt", ".ascii"):
            return cls.from_ascii(path.read_text())
        return cls.from_bytes(path.read_bytes())
