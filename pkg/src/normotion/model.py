"""Core domain types: trajectories, the spatial grid, velocity fields and zones.

Positions are meters in a fixed world frame, velocities m/s. The grid is an
axis-aligned partition of the environment into square cells, indexed row-major
with row 0 at the minimum-y edge. All types are immutable after construction
and safe to share across concurrent readers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

STRAIGHT = "straight"
CURVE = "curve"

_TIME_TOL = 1e-9


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Trajectory:
    """Timestamped 2D positions of one agent sampled at a fixed interval.

    k are integer time indices (strictly increasing), t seconds, pos meters.
    Consecutive t differences must equal dt times the index step within 1e-9.
    """

    k: np.ndarray
    t: np.ndarray
    pos: np.ndarray
    dt: float
    frame_id: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "k", _frozen(self.k, dtype=np.int64))
        object.__setattr__(self, "t", _frozen(self.t))
        object.__setattr__(self, "pos", _frozen(self.pos))
        if self.frame_id is not None:
            object.__setattr__(self, "frame_id", _frozen(self.frame_id, dtype=np.int64))
        if self.pos.ndim != 2 or self.pos.shape[1] != 2:
            raise ValueError(f"pos must be (K, 2), got {self.pos.shape}")
        n = len(self.pos)
        if len(self.k) != n or len(self.t) != n:
            raise ValueError("k, t and pos must have equal length")
        if self.frame_id is not None and len(self.frame_id) != n:
            raise ValueError("frame_id must match sample count")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if n > 1:
            dk = np.diff(self.k)
            if np.any(dk <= 0):
                raise ValueError("time indices must be strictly increasing")
            if np.max(np.abs(np.diff(self.t) - dk * self.dt)) > _TIME_TOL:
                raise ValueError("t differences inconsistent with dt")

    def __len__(self) -> int:
        return len(self.pos)


@dataclass(frozen=True)
class SpatialGrid:
    """Axis-aligned grid of square cells covering the environment.

    Cell index m = row * width + col with m in [0, M). Row 0 sits at origin y,
    column 0 at origin x.
    """

    origin: tuple[float, float]
    cell_size: float
    width: int
    height: int

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must contain at least one cell")

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the covered rectangle."""
        x0, y0 = self.origin
        return (x0, y0, x0 + self.width * self.cell_size, y0 + self.height * self.cell_size)

    def index(self, row: int, col: int) -> int:
        return row * self.width + col

    def rowcol(self, m: int) -> tuple[int, int]:
        return divmod(m, self.width)

    def cell_center(self, m: int) -> np.ndarray:
        row, col = self.rowcol(m)
        x0, y0 = self.origin
        return np.array([x0 + (col + 0.5) * self.cell_size, y0 + (row + 0.5) * self.cell_size])

    def cell_centers(self) -> np.ndarray:
        """(M, 2) array of all cell centers in index order."""
        x0, y0 = self.origin
        cols = np.arange(self.width)
        rows = np.arange(self.height)
        cx = x0 + (cols + 0.5) * self.cell_size
        cy = y0 + (rows + 0.5) * self.cell_size
        gx, gy = np.meshgrid(cx, cy)
        return np.column_stack([gx.ravel(), gy.ravel()])


def locate_cell(grid: SpatialGrid, pos) -> Optional[int]:
    """Map a position to its containing cell index, or None if out of bounds.

    Points exactly on an interior edge belong to the lower-index cell; the
    far outer edge therefore maps into the last cell on that axis.
    """
    x, y = float(pos[0]), float(pos[1])
    x0, y0, x1, y1 = grid.bounds
    if x < x0 or x > x1 or y < y0 or y > y1:
        return None

    def axis_index(v: float, lo: float, n: int) -> int:
        frac = (v - lo) / grid.cell_size
        i = int(np.floor(frac))
        if i == frac and i > 0:
            i -= 1  # edge point: lower-index cell
        return min(i, n - 1)

    col = axis_index(x, x0, grid.width)
    row = axis_index(y, y0, grid.height)
    return grid.index(row, col)


def derive_velocities(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Forward-difference velocities aligned with the position where motion starts.

    Returns (positions, velocities), both (K-1, 2); the last sample is dropped
    because it has no forward difference.
    """
    if len(traj) < 2:
        raise ValueError("insufficient samples")
    dk = np.diff(traj.k)
    vel = np.diff(traj.pos, axis=0) / (dk[:, None] * traj.dt)
    return traj.pos[:-1], vel


@dataclass(frozen=True)
class VelocityField:
    """Per-cell velocity estimate with predictive uncertainty.

    mask is True where the estimate has sufficient evidence; cells with
    mask False are excluded from all downstream zoning.
    """

    grid: SpatialGrid
    mean: np.ndarray      # (M, 2) m/s
    variance: np.ndarray  # (M, 2) (m/s)^2
    mask: np.ndarray      # (M,) bool

    def __post_init__(self):
        m = self.grid.n_cells
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "variance", _frozen(self.variance))
        object.__setattr__(self, "mask", _frozen(self.mask, dtype=bool))
        if self.mean.shape != (m, 2) or self.variance.shape != (m, 2):
            raise ValueError("mean and variance must be (M, 2)")
        if self.mask.shape != (m,):
            raise ValueError("mask must be (M,)")
        if np.any(self.variance < 0):
            raise ValueError("variance must be nonnegative")


@dataclass(frozen=True)
class Zone:
    """4-connected grid region with quasi-constant velocity u."""

    id: int
    cells: tuple[int, ...]
    u: np.ndarray  # (2,) m/s
    group: str     # STRAIGHT or CURVE

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(int(c) for c in self.cells))
        object.__setattr__(self, "u", _frozen(self.u))
        if self.id < 1:
            raise ValueError("zone ids start at 1")
        if not self.cells:
            raise ValueError("zone must contain at least one cell")
        if self.group not in (STRAIGHT, CURVE):
            raise ValueError(f"unknown zone group {self.group!r}")

    @property
    def n_cells(self) -> int:
        return len(self.cells)


@dataclass(frozen=True)
class ZoneMap:
    """Partition of the evidenced cells into zones.

    cell_to_zone holds a zone id per cell, 0 where the cell belongs to no
    zone (masked out or outside all zones).
    """

    zones: tuple[Zone, ...]
    cell_to_zone: np.ndarray  # (M,) int, 0 = none

    def __post_init__(self):
        object.__setattr__(self, "zones", tuple(self.zones))
        object.__setattr__(self, "cell_to_zone", _frozen(self.cell_to_zone, dtype=np.int64))
        ids = {z.id for z in self.zones}
        if len(ids) != len(self.zones):
            raise ValueError("duplicate zone ids")
        referenced = set(np.unique(self.cell_to_zone)) - {0}
        if not referenced <= ids:
            raise ValueError("cell_to_zone references unknown zone ids")
        for z in self.zones:
            if not all(self.cell_to_zone[c] == z.id for c in z.cells):
                raise ValueError(f"zone {z.id} cells disagree with cell_to_zone")
        n_assigned = int(np.count_nonzero(self.cell_to_zone))
        if sum(z.n_cells for z in self.zones) != n_assigned:
            raise ValueError("zones overlap or omit assigned cells")

    def zone_by_id(self, zone_id: int) -> Zone:
        for z in self.zones:
            if z.id == zone_id:
                return z
        raise KeyError(zone_id)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Write `k,t,x,y[,frame_id]` rows, UTF-8, '.' decimal separator."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        if traj.frame_id is not None:
            w.writerow(["k", "t", "x", "y", "frame_id"])
            for i in range(len(traj)):
                w.writerow([int(traj.k[i]), repr(float(traj.t[i])),
                            repr(float(traj.pos[i, 0])), repr(float(traj.pos[i, 1])),
                            int(traj.frame_id[i])])
        else:
            w.writerow(["k", "t", "x", "y"])
            for i in range(len(traj)):
                w.writerow([int(traj.k[i]), repr(float(traj.t[i])),
                            repr(float(traj.pos[i, 0])), repr(float(traj.pos[i, 1]))])


def read_trajectory_csv(path, dt: Optional[float] = None) -> Trajectory:
    """Read a trajectory written by write_trajectory_csv.

    dt is inferred from the first index step unless given explicitly.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or header[:4] != ["k", "t", "x", "y"]:
            raise ValueError(f"{path}: expected header k,t,x,y[,frame_id]")
        has_frames = len(header) > 4 and header[4] == "frame_id"
        ks, ts, xs, ys, fids = [], [], [], [], []
        for row in reader:
            if not row:
                continue
            ks.append(int(row[0]))
            ts.append(float(row[1]))
            xs.append(float(row[2]))
            ys.append(float(row[3]))
            if has_frames:
                fids.append(int(row[4]))
    if len(ks) < 2 and dt is None:
        raise ValueError(f"{path}: need at least 2 rows to infer dt")
    if dt is None:
        dt = (ts[1] - ts[0]) / (ks[1] - ks[0])
    return Trajectory(
        k=np.array(ks), t=np.array(ts), pos=np.column_stack([xs, ys]), dt=float(dt),
        frame_id=np.array(fids) if has_frames else None,
    )
