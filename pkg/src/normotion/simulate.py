"""Synthetic patrol scenarios: rounded-rectangle laps, avoidance detours, and
a minimal ray-cast first-person renderer.

The agent patrols the perimeter of a rectangle inset from the arena walls,
corners rounded at a fixed radius, at constant speed. An avoidance maneuver
replaces part of one straight segment with a raised-cosine lateral detour
around a static obstacle, returning smoothly to the perimeter. Rendering is
deliberately minimal (flat shading, checkered floor) so downstream detectors
must rely on geometry and motion, not texture realism.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .model import Trajectory

# renderer constants (meters)
CAM_HEIGHT = 1.2
WALL_HEIGHT = 2.2
OBSTACLE_HEIGHT = 1.7
CHECKER_SIZE = 1.0
HFOV_DEG = 130.0

FLOOR_DARK, FLOOR_LIGHT, WALL_GRAY, OBSTACLE_GRAY, SKY_GRAY = 95, 160, 60, 25, 230
SENSOR_NOISE = 0.0  # gray levels; keyed to the pose, see render_frame


def _pose_key(x: float, y: float, heading: float) -> np.random.SeedSequence:
    q = [int(round(x * 1e6)), int(round(y * 1e6)), int(round(heading * 1e6))]
    return np.random.SeedSequence([abs(v) % (2**31) for v in q])


@dataclass(frozen=True)
class SceneSpec:
    """Geometry and sampling of one patrol scenario.

    The patrol path is the perimeter of the arena rectangle inset by margin.
    obstacles holds (x, y, radius) of static obstacles, e.g. a pedestrian.
    """

    arena_width: float = 20.0
    arena_height: float = 14.0
    margin: float = 2.0
    lap_speed: float = 1.0
    n_laps: int = 1
    corner_radius: float = 1.5
    noise_std: float = 0.002
    dt: float = 0.1
    seed: int = 0
    obstacles: tuple[tuple[float, float, float], ...] = ()
    detour_arc: float = 1.4

    def __post_init__(self):
        if self.lap_speed <= 0:
            raise ValueError("lap_speed must be positive")
        if self.corner_radius < 0:
            raise ValueError("corner_radius must be nonnegative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        w = self.arena_width - 2 * self.margin
        h = self.arena_height - 2 * self.margin
        if w <= 2 * self.corner_radius or h <= 2 * self.corner_radius:
            raise ValueError("arena too small for the patrol path")


class PerimeterPath:
    """Arc-length parametrization of the rounded-rectangle patrol loop.

    Counterclockwise, starting at the beginning of the bottom straight.
    The inward normal (toward the arena interior) is the tangent rotated
    +90 degrees.
    """

    def __init__(self, spec: SceneSpec):
        m, rc = spec.margin, spec.corner_radius
        self.x0, self.y0 = m, m
        self.x1, self.y1 = spec.arena_width - m, spec.arena_height - m
        self.rc = rc
        w = self.x1 - self.x0
        h = self.y1 - self.y0
        ls_w = w - 2 * rc   # straight lengths
        ls_h = h - 2 * rc
        arc = 0.5 * np.pi * rc
        # segment list: (length, kind, anchor); kinds: straight, corner
        self.segments = []
        cum = 0.0
        corners = [(self.x1 - rc, self.y0 + rc, -0.5 * np.pi),
                   (self.x1 - rc, self.y1 - rc, 0.0),
                   (self.x0 + rc, self.y1 - rc, 0.5 * np.pi),
                   (self.x0 + rc, self.y0 + rc, np.pi)]
        straights = [((self.x0 + rc, self.y0), (1.0, 0.0)),
                     ((self.x1, self.y0 + rc), (0.0, 1.0)),
                     ((self.x1 - rc, self.y1), (-1.0, 0.0)),
                     ((self.x0, self.y1 - rc), (0.0, -1.0))]
        for i in range(4):
            length = ls_w if i % 2 == 0 else ls_h
            self.segments.append((cum, length, "straight", straights[i]))
            cum += length
            self.segments.append((cum, arc, "corner", corners[i]))
            cum += arc
        self.length = cum

    def point(self, s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Position, unit tangent and inward unit normal at arc length s."""
        s = float(s) % self.length
        seg = self.segments[-1]
        for cand in self.segments:
            if cand[0] <= s < cand[0] + cand[1]:
                seg = cand
                break
        start, length, kind, anchor = seg
        local = min(s - start, length)
        if kind == "straight":
            (px, py), (tx, ty) = anchor
            p = np.array([px + tx * local, py + ty * local])
            t = np.array([tx, ty])
        else:
            cx, cy, a0 = anchor
            a = a0 + local / self.rc
            p = np.array([cx + self.rc * np.cos(a), cy + self.rc * np.sin(a)])
            t = np.array([-np.sin(a), np.cos(a)])
        n = np.array([-t[1], t[0]])  # +90 deg: interior side for CCW
        return p, t, n

    def project(self, pos) -> float:
        """Arc length of the path point nearest to pos (coarse 1 cm scan)."""
        ss = np.arange(0.0, self.length, 0.01)
        pts = np.array([self.point(s)[0] for s in ss])
        d2 = np.sum((pts - np.asarray(pos)) ** 2, axis=1)
        return float(ss[np.argmin(d2)])


@dataclass(frozen=True)
class Avoidance:
    """One lateral detour: lap index, apex depth (m), centered on the obstacle."""

    lap: int
    depth: float


def _detour_offset(s_on_lap: float, s_center: float, arc: float, depth: float) -> float:
    """Raised-cosine lateral offset, C1 at both ends, apex = depth at center."""
    lo = s_center - arc / 2.0
    if s_on_lap < lo or s_on_lap > lo + arc:
        return 0.0
    phase = (s_on_lap - lo) / arc
    return depth * 0.5 * (1.0 - np.cos(2.0 * np.pi * phase))


def simulate_trajectory(spec: SceneSpec, avoidance: Optional[Avoidance] = None,
                        ) -> tuple[Trajectory, np.ndarray]:
    """Constant-speed traversal of the patrol loop with i.i.d. position noise.

    Returns the trajectory and a boolean in-detour label per sample (all False
    without avoidance). Deterministic given spec.seed.
    """
    path = PerimeterPath(spec)
    if avoidance is not None:
        half_w = min(spec.arena_width, spec.arena_height) / 2.0
        if avoidance.depth >= half_w:
            raise ValueError("detour depth must stay below the arena half-width")
        if not spec.obstacles:
            raise ValueError("avoidance requires an obstacle to avoid")
        s_center = path.project(spec.obstacles[0][:2])
        lo = s_center - spec.detour_arc / 2.0
        hi = s_center + spec.detour_arc / 2.0
        seg = _segment_of(path, s_center)
        if seg[2] != "straight" or lo < seg[0] or hi > seg[0] + seg[1]:
            raise ValueError("detour must fit inside one straight segment")

    step = spec.lap_speed * spec.dt
    n_per_lap = int(np.ceil(path.length / step))  # closure gap stays below one step
    total = n_per_lap * spec.n_laps
    rng = np.random.default_rng(spec.seed)
    noise = rng.normal(0.0, spec.noise_std, size=(total, 2)) if spec.noise_std > 0 \
        else np.zeros((total, 2))

    pos = np.empty((total, 2))
    in_detour = np.zeros(total, dtype=bool)
    for i in range(total):
        lap, j = divmod(i, n_per_lap)
        s = j * step
        p, t, n = path.point(s)
        if avoidance is not None and lap == avoidance.lap:
            off = _detour_offset(s, s_center, spec.detour_arc, avoidance.depth)
            if off != 0.0:
                p = p + off * n
                in_detour[i] = True
        pos[i] = p + noise[i]

    ks = np.arange(total)
    return Trajectory(k=ks, t=ks * spec.dt, pos=pos, dt=spec.dt, frame_id=ks), in_detour


def _segment_of(path: PerimeterPath, s: float):
    s = s % path.length
    for seg in path.segments:
        if seg[0] <= s < seg[0] + seg[1]:
            return seg
    return path.segments[-1]


def headings(traj: Trajectory) -> np.ndarray:
    """Per-sample heading angle from forward velocity differences.

    A zero-velocity sample reuses the previous heading; the last sample always
    does. Heading is undefined only when the very first step has zero velocity.
    """
    if len(traj) < 2:
        raise ValueError("need at least 2 samples to derive headings")
    d = np.diff(traj.pos, axis=0)
    out = np.empty(len(traj))
    prev = None
    for i in range(len(traj) - 1):
        if np.hypot(d[i, 0], d[i, 1]) > 0:
            prev = np.arctan2(d[i, 1], d[i, 0])
        elif prev is None:
            raise ValueError("heading undefined: zero velocity at first sample")
        out[i] = prev
    out[-1] = prev
    return out


def render_frame(cam_pos, heading: float, spec: SceneSpec, H: int, W: int,
                 obstacles: Sequence[tuple[float, float, float]] = (),
                 sensor_noise: float = SENSOR_NOISE) -> np.ndarray:
    """Ray-cast one first-person frame (uint8 grayscale, H x W).

    Surfaces: checkered floor, arena walls, vertical obstacle cylinders, sky.
    The nearest hit along each ray wins, so occlusion ordering is exact.
    Sensor noise is keyed to the pose alone, so identical poses render
    byte-identical frames while any movement refreshes the grain.
    """
    cx, cy = float(cam_pos[0]), float(cam_pos[1])
    f = np.array([np.cos(heading), np.sin(heading), 0.0])
    right = np.array([np.sin(heading), -np.cos(heading), 0.0])
    up = np.array([0.0, 0.0, 1.0])

    tan_h = np.tan(np.radians(HFOV_DEG) / 2.0)
    tan_v = tan_h * H / W
    us = ((np.arange(W) + 0.5) / W * 2.0 - 1.0) * tan_h
    vs = (1.0 - (np.arange(H) + 0.5) / H * 2.0) * tan_v
    U, V = np.meshgrid(us, vs)
    dirs = f[None, None, :] + U[:, :, None] * right[None, None, :] + V[:, :, None] * up[None, None, :]
    dx, dy, dz = dirs[:, :, 0], dirs[:, :, 1], dirs[:, :, 2]

    t_best = np.full((H, W), np.inf)
    shade = np.full((H, W), SKY_GRAY, dtype=np.uint8)
    eps = 1e-9

    def consider(t, hit_ok, gray):
        t = np.where(hit_ok & (t > eps), t, np.inf)
        closer = t < t_best
        t_best[closer] = t[closer]
        if np.isscalar(gray):
            shade[closer] = gray
        else:
            shade[closer] = gray[closer]

    # floor z=0, camera at CAM_HEIGHT
    with np.errstate(divide="ignore", invalid="ignore"):
        t_floor = -CAM_HEIGHT / dz
    fx = cx + t_floor * dx
    fy = cy + t_floor * dy
    checker = ((np.floor(fx / CHECKER_SIZE) + np.floor(fy / CHECKER_SIZE)) % 2).astype(int)
    floor_gray = np.where(checker == 0, FLOOR_DARK, FLOOR_LIGHT).astype(np.uint8)
    consider(t_floor, dz < 0, floor_gray)

    # four walls on the arena rectangle
    for axis, coord, lo, hi in ((0, 0.0, 0.0, spec.arena_height),
                                (0, spec.arena_width, 0.0, spec.arena_height),
                                (1, 0.0, 0.0, spec.arena_width),
                                (1, spec.arena_height, 0.0, spec.arena_width)):
        d_axis = dx if axis == 0 else dy
        c_axis = cx if axis == 0 else cy
        with np.errstate(divide="ignore", invalid="ignore"):
            t_wall = (coord - c_axis) / d_axis
        ox = cx + t_wall * dx
        oy = cy + t_wall * dy
        oz = CAM_HEIGHT + t_wall * dz
        other = oy if axis == 0 else ox
        ok = (np.abs(d_axis) > eps) & (other >= lo) & (other <= hi) & (oz >= 0) & (oz <= WALL_HEIGHT)
        consider(t_wall, ok, WALL_GRAY)

    # obstacle cylinders, with a fixed surface checker so their patches carry
    # local texture like the rest of the scene
    for (px, py, pr) in obstacles:
        ex, ey = cx - px, cy - py
        a = dx * dx + dy * dy
        b = 2 * (ex * dx + ey * dy)
        c = ex * ex + ey * ey - pr * pr
        disc = b * b - 4 * a * c
        with np.errstate(invalid="ignore", divide="ignore"):
            root = np.sqrt(np.maximum(disc, 0.0))
            t_cyl = (-b - root) / (2 * a)
        hx = cx + t_cyl * dx
        hy = cy + t_cyl * dy
        oz = CAM_HEIGHT + t_cyl * dz
        ok = (disc > 0) & (a > eps) & (oz >= 0) & (oz <= OBSTACLE_HEIGHT)
        with np.errstate(invalid="ignore"):
            phi = np.arctan2(hy - py, hx - px)
        stripe = (np.floor(oz / 0.2) + np.floor((phi + np.pi) / 0.6)) % 2
        gray = np.where(stripe == 0, OBSTACLE_GRAY, OBSTACLE_GRAY + 50).astype(np.uint8)
        consider(t_cyl, ok, gray)

    if sensor_noise > 0:
        rng = np.random.default_rng(_pose_key(cx, cy, heading))
        grain = rng.normal(0.0, sensor_noise, size=shade.shape)
        shade = np.clip(shade.astype(float) + grain, 0, 255).astype(np.uint8)
    return shade


def render_fpv(traj: Trajectory, spec: SceneSpec, H: int, W: int, out_dir,
               obstacle_frames: Optional[tuple[int, int]] = None) -> list[Path]:
    """Render every sample's forward view to `frame_%06d.png` under out_dir.

    obstacle_frames bounds the frame indices (inclusive) where obstacles are
    drawn; None draws them in every frame. Deterministic byte-for-byte.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    angles = headings(traj)
    paths = []
    for i in range(len(traj)):
        visible = spec.obstacles
        if obstacle_frames is not None and not (obstacle_frames[0] <= i <= obstacle_frames[1]):
            visible = ()
        frame = render_frame(traj.pos[i], angles[i], spec, H, W, visible)
        fid = int(traj.frame_id[i]) if traj.frame_id is not None else i
        p = out_dir / f"frame_{fid:06d}.png"
        Image.fromarray(frame, "L").save(p, format="PNG")
        paths.append(p)
    return paths


def write_labels_csv(in_detour: np.ndarray, path) -> None:
    """Ground-truth `k,in_detour` labels (1 = inside the detour window)."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["k", "in_detour"])
        for k, flag in enumerate(in_detour):
            w.writerow([k, 1 if flag else 0])


def read_labels_csv(path) -> np.ndarray:
    import csv

    flags = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            flags.append(row["in_detour"] == "1")
    return np.array(flags, dtype=bool)
