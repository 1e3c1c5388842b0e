"""Velocity-field image encoding and superpixel zoning.

The field's two channels are mapped to the R and B bytes of an RGB image
(G stays 0) with a symmetric range around zero, so "no motion" sits at
mid-gray and opposite travel directions get symmetric colors. A grid-seeded
SLIC pass over (color, position) features partitions the evidenced cells
into zones; a post-pass restores 4-connectivity and absorbs tiny regions.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .kalman import ZoneDynamics
from .model import CURVE, STRAIGHT, VelocityField, Zone, ZoneMap

_SPEED_EPS = 1e-9  # below this a cell has no usable direction


@dataclass(frozen=True)
class SlicParams:
    n_superpixels: int = 16
    compactness: float = 10.0
    max_iters: int = 10
    min_zone_cells: int = 4
    straight_threshold: float = 0.008  # circular variance below this = straight

    def __post_init__(self):
        if self.n_superpixels < 1:
            raise ValueError("n_superpixels must be >= 1")
        if self.compactness <= 0:
            raise ValueError("compactness must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class VelocityImage:
    """8-bit RGB encoding of a velocity field.

    R carries vx, B carries vy, G is zero everywhere. norm holds the
    per-channel half-range (vmax_x, vmax_y) so that byte 0 = -vmax and
    byte 255 = +vmax.
    """

    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8
    norm: tuple[float, float]

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.uint8)
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)
        if px.shape != (self.height, self.width, 3):
            raise ValueError("pixels must be (height, width, 3)")

    def decode(self) -> np.ndarray:
        """(height, width, 2) velocities recovered from the byte channels."""
        out = np.empty((self.height, self.width, 2))
        for c, vmax in enumerate(self.norm):
            byte = self.pixels[:, :, 0 if c == 0 else 2].astype(float)
            out[:, :, c] = byte / 255.0 * (2.0 * vmax) - vmax
        return out


def _to_byte(v: np.ndarray, vmax: float) -> np.ndarray:
    if vmax == 0.0:
        return np.full(v.shape, 128, dtype=np.uint8)
    scaled = (v + vmax) / (2.0 * vmax) * 255.0
    return np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)  # round half up


def encode_image(field: VelocityField) -> VelocityImage:
    """Encode the field as an RGB image over the grid; masked cells encode as 0."""
    if not np.any(field.mask):
        raise ValueError("all cells are masked out")
    g = field.grid
    mean = field.mean.reshape(g.height, g.width, 2)
    mask = field.mask.reshape(g.height, g.width)
    vmax = tuple(float(np.max(np.abs(field.mean[field.mask, c]))) for c in range(2))
    px = np.zeros((g.height, g.width, 3), dtype=np.uint8)
    px[:, :, 0] = np.where(mask, _to_byte(mean[:, :, 0], vmax[0]), 0)
    px[:, :, 2] = np.where(mask, _to_byte(mean[:, :, 1], vmax[1]), 0)
    return VelocityImage(width=g.width, height=g.height, pixels=px, norm=vmax)


def _seed_centers(rows: np.ndarray, cols: np.ndarray, n: int) -> np.ndarray:
    """Indices (into the unmasked cell list) of the initial cluster centers.

    Lattice points at interval S over the unmasked bounding box are snapped
    to the nearest unmasked cell; duplicates collapse and any shortfall is
    filled by a uniform stride over the remaining cells. Fully deterministic.
    """
    n_cells = len(rows)
    n = min(n, n_cells)
    S = np.sqrt(n_cells / n)
    r0, r1 = rows.min(), rows.max()
    c0, c1 = cols.min(), cols.max()
    seeds: list[int] = []
    taken = set()
    rr = np.arange(r0 + S / 2, r1 + 1e-9, S)
    cc = np.arange(c0 + S / 2, c1 + 1e-9, S)
    for sr in rr:
        for sc in cc:
            d2 = (rows - sr) ** 2 + (cols - sc) ** 2
            j = int(np.argmin(d2))
            if d2[j] <= (2 * S) ** 2 and j not in taken:
                seeds.append(j)
                taken.add(j)
    if len(seeds) > n:
        keep = np.linspace(0, len(seeds) - 1, n).round().astype(int)
        seeds = [seeds[i] for i in sorted(set(keep.tolist()))]
    while len(seeds) < n:
        free = [j for j in range(n_cells) if j not in taken]
        if not free:
            break
        j = free[len(free) // 2]
        seeds.append(j)
        taken.add(j)
    return np.array(sorted(seeds), dtype=int)


def _connected_components(cells: set[int], width: int) -> list[list[int]]:
    """4-connected components of a cell set, each sorted, in deterministic order."""
    comps = []
    remaining = set(cells)
    for start in sorted(cells):
        if start not in remaining:
            continue
        stack = [start]
        remaining.discard(start)
        comp = []
        while stack:
            m = stack.pop()
            comp.append(m)
            r, c = divmod(m, width)
            for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                nm = nr * width + nc
                if 0 <= nc < width and nm in remaining:
                    remaining.discard(nm)
                    stack.append(nm)
        comps.append(sorted(comp))
    return comps


def segment(image: VelocityImage, mask: np.ndarray, params: SlicParams) -> ZoneMap:
    """SLIC-style clustering of the unmasked cells into zones.

    Distance is d_color^2 + (compactness / S)^2 * d_xy^2 with S the expected
    superpixel interval. After clustering, clusters are split into 4-connected
    regions and regions below min_zone_cells merge into their most
    color-similar neighbor. Deterministic: no randomness anywhere.
    """
    mask = np.asarray(mask, dtype=bool).reshape(image.height, image.width)
    flat_mask = mask.ravel()
    if not flat_mask.any():
        raise ValueError("all cells are masked out")

    idx = np.flatnonzero(flat_mask)
    rows, cols = np.divmod(idx, image.width)
    color = image.pixels.reshape(-1, 3)[idx].astype(float)  # G is 0 everywhere
    n_cells = len(idx)
    n_sp = min(params.n_superpixels, n_cells)
    S = max(np.sqrt(n_cells / n_sp), 1.0)
    w_xy = (params.compactness / S) ** 2

    seed_idx = _seed_centers(rows, cols, n_sp)
    cen_color = color[seed_idx].copy()
    cen_pos = np.column_stack([rows, cols]).astype(float)[seed_idx].copy()

    pos = np.column_stack([rows, cols]).astype(float)
    for _ in range(params.max_iters):
        # window-limited assignment, classic SLIC: only cells within 2S of a center
        best_d = np.full(n_cells, np.inf)
        label = np.full(n_cells, -1, dtype=int)
        for ci in range(len(cen_pos)):
            near = np.max(np.abs(pos - cen_pos[ci]), axis=1) <= 2 * S
            if not near.any():
                continue
            dc2 = np.sum((color[near] - cen_color[ci]) ** 2, axis=1)
            ds2 = np.sum((pos[near] - cen_pos[ci]) ** 2, axis=1)
            d = dc2 + w_xy * ds2
            sel = np.flatnonzero(near)
            upd = d < best_d[sel]
            best_d[sel[upd]] = d[upd]
            label[sel[upd]] = ci
        orphan = label < 0
        if orphan.any():
            # fall back to nearest center spatially
            d2 = np.sum((pos[orphan, None, :] - cen_pos[None, :, :]) ** 2, axis=2)
            label[orphan] = np.argmin(d2, axis=1)
        new_color = np.empty_like(cen_color)
        new_pos = np.empty_like(cen_pos)
        alive = []
        for ci in range(len(cen_pos)):
            members = label == ci
            if not members.any():
                continue
            new_color[ci] = color[members].mean(axis=0)
            new_pos[ci] = pos[members].mean(axis=0)
            alive.append(ci)
        if len(alive) < len(cen_pos):
            cen_color = new_color[alive]
            cen_pos = new_pos[alive]
            remap = {old: new for new, old in enumerate(alive)}
            label = np.array([remap[l] for l in label])
        else:
            cen_color, cen_pos = new_color, new_pos

    # split clusters into 4-connected regions
    regions: list[list[int]] = []
    for ci in range(len(cen_pos)):
        members = set(idx[label == ci].tolist())
        if members:
            regions.extend(_connected_components(members, image.width))
    regions.sort(key=lambda comp: comp[0])

    region_of = {}
    for ri, comp in enumerate(regions):
        for m in comp:
            region_of[m] = ri
    mean_color = {ri: color[np.isin(idx, comp)].mean(axis=0) for ri, comp in enumerate(regions)}

    def neighbors(ri: int) -> list[int]:
        out = set()
        for m in regions[ri]:
            r, c = divmod(m, image.width)
            for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                nm = nr * image.width + nc
                if 0 <= nr < image.height and 0 <= nc < image.width and nm in region_of:
                    rj = region_of[nm]
                    if rj != ri:
                        out.add(rj)
        return sorted(out)

    # absorb regions below the size floor into their most color-similar neighbor
    while True:
        small = [ri for ri, comp in enumerate(regions)
                 if comp and len(comp) < params.min_zone_cells and neighbors(ri)]
        if not small:
            break
        ri = min(small, key=lambda r: (len(regions[r]), regions[r][0]))
        nbrs = neighbors(ri)
        dists = [(float(np.sum((mean_color[ri] - mean_color[rj]) ** 2)), rj) for rj in nbrs]
        _, rj = min(dists)
        merged = sorted(regions[rj] + regions[ri])
        regions[rj] = merged
        for m in regions[ri]:
            region_of[m] = rj
        regions[ri] = []
        sel = np.isin(idx, merged)
        mean_color[rj] = color[sel].mean(axis=0)

    regions = [comp for comp in regions if comp]
    regions.sort(key=lambda comp: comp[0])

    decoded = image.decode().reshape(-1, 2)
    cell_to_zone = np.zeros(image.width * image.height, dtype=np.int64)
    zones = []
    for zi, comp in enumerate(regions, start=1):
        vels = decoded[comp]
        u = vels.mean(axis=0)
        zones.append(Zone(id=zi, cells=tuple(comp), u=u,
                          group=_direction_group(vels, params.straight_threshold)))
        cell_to_zone[comp] = zi
    return ZoneMap(zones=tuple(zones), cell_to_zone=cell_to_zone)


def _direction_group(vels: np.ndarray, threshold: float) -> str:
    """Straight when member directions barely spread, curve otherwise."""
    speeds = np.linalg.norm(vels, axis=1)
    ok = speeds > _SPEED_EPS
    if not ok.any():
        return STRAIGHT
    units = vels[ok] / speeds[ok, None]
    circ_var = 1.0 - float(np.linalg.norm(units.mean(axis=0)))
    return STRAIGHT if circ_var < threshold else CURVE


def zone_dynamics(zone: Zone, dt: float, q: float, r: float = 0.01) -> ZoneDynamics:
    """Linear per-zone transition: x_{k+1} = x_k + dt * u + w, cov(w) = q I."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if q < 0:
        raise ValueError("process noise q must be nonnegative")
    return ZoneDynamics(zone_id=zone.id, u=np.array(zone.u), dt=dt, q=q, r=r)


def write_image_png(image: VelocityImage, path) -> None:
    """Lossless 8-bit RGB export for visual inspection."""
    from PIL import Image

    Image.fromarray(np.asarray(image.pixels), "RGB").save(path, format="PNG")


def write_zone_map_csv(zmap: ZoneMap, width: int, path) -> None:
    """Export `row,col,zone_id` for every cell assigned to a zone."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["row", "col", "zone_id"])
        for m, zid in enumerate(zmap.cell_to_zone):
            if zid:
                w.writerow([m // width, m % width, int(zid)])


def zone_summary(zmap: ZoneMap) -> list[dict]:
    return [{"id": z.id, "n_cells": z.n_cells,
             "ux": float(z.u[0]), "uy": float(z.u[1]), "group": z.group}
            for z in zmap.zones]


def write_zone_summary_json(zmap: ZoneMap, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(zone_summary(zmap), f, indent=2)
        f.write("\n")
