"""End-to-end pipelines over the other modules.

Commands are pure functions of (config, inputs, seed): rerunning any of them
with identical inputs produces byte-identical outputs. The persisted
normality model is a versioned JSON manifest plus CSV payloads, chosen to be
human-diffable at desk scale.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import gp, kalman, simulate, zones
from .model import (SpatialGrid, VelocityField, Zone, ZoneMap,
                    read_trajectory_csv, write_trajectory_csv)

MODEL_FORMAT_VERSION = 1


class ConfigError(Exception):
    """Bad or unknown configuration; CLI exit code 2."""


class DataError(Exception):
    """Missing or malformed input data; CLI exit code 3."""


class ModelVersionError(Exception):
    """Persisted model format incompatible with this code; CLI exit code 4."""


@dataclass
class PipelineConfig:
    seed: int = 0
    data_dir: str = "data"
    model_dir: str = "model"
    out_dir: str = "out"

    grid_origin_x: float = 0.0
    grid_origin_y: float = 0.0
    grid_cell_size: float = 0.5
    grid_width: int = 40
    grid_height: int = 28

    gp_signal_std: float = 2.0       # m/s
    gp_length_scale: float = 0.0     # m; 0 = auto (2 * cell size)
    gp_noise_std: float = 0.2        # m/s
    gp_max_points: int = 1000

    mask_variance_threshold: float = 0.5

    slic_n_superpixels: int = 16
    slic_compactness: float = 10.0
    slic_max_iters: int = 10
    slic_min_zone_cells: int = 4
    slic_straight_threshold: float = 0.008

    kf_q: float = 0.0005   # (0.022 m)^2 per step
    kf_r: float = 0.01     # (0.1 m)^2
    kf_p0: float = 0.25    # (0.5 m)^2

    detector_xi_threshold: float = 0.4  # m
    fuse_y_threshold: float = float("nan")  # NaN = use the PL file's own flags

    scene_arena_width: float = 20.0
    scene_arena_height: float = 14.0
    scene_margin: float = 2.0
    scene_lap_speed: float = 1.0
    scene_n_laps: int = 10
    scene_test_n_laps: int = 4
    scene_corner_radius: float = 1.5
    scene_noise_std: float = 0.002
    scene_dt: float = 0.1
    scene_detour_arc: float = 1.4
    scene_detour_depth: float = 0.85
    scene_avoidance_lap: int = 1
    scene_obstacle_x: float = float("nan")  # NaN = middle of the bottom straight
    scene_obstacle_y: float = float("nan")
    scene_obstacle_radius: float = 0.45
    scene_render_frames: bool = False
    scene_frame_width: int = 64
    scene_frame_height: int = 64


_KEYMAP = {
    "seed": "seed",
    "paths.data_dir": "data_dir",
    "paths.model_dir": "model_dir",
    "paths.out_dir": "out_dir",
    "grid.origin_x": "grid_origin_x",
    "grid.origin_y": "grid_origin_y",
    "grid.cell_size": "grid_cell_size",
    "grid.width": "grid_width",
    "grid.height": "grid_height",
    "gp.signal_std": "gp_signal_std",
    "gp.length_scale": "gp_length_scale",
    "gp.noise_std": "gp_noise_std",
    "gp.max_points": "gp_max_points",
    "mask.variance_threshold": "mask_variance_threshold",
    "slic.n_superpixels": "slic_n_superpixels",
    "slic.compactness": "slic_compactness",
    "slic.max_iters": "slic_max_iters",
    "slic.min_zone_cells": "slic_min_zone_cells",
    "slic.straight_threshold": "slic_straight_threshold",
    "kf.q": "kf_q",
    "kf.r": "kf_r",
    "kf.p0": "kf_p0",
    "detector.xi_threshold": "detector_xi_threshold",
    "fuse.y_threshold": "fuse_y_threshold",
    "scene.arena_width": "scene_arena_width",
    "scene.arena_height": "scene_arena_height",
    "scene.margin": "scene_margin",
    "scene.lap_speed": "scene_lap_speed",
    "scene.n_laps": "scene_n_laps",
    "scene.test_n_laps": "scene_test_n_laps",
    "scene.corner_radius": "scene_corner_radius",
    "scene.noise_std": "scene_noise_std",
    "scene.dt": "scene_dt",
    "scene.detour_arc": "scene_detour_arc",
    "scene.detour_depth": "scene_detour_depth",
    "scene.avoidance_lap": "scene_avoidance_lap",
    "scene.obstacle_x": "scene_obstacle_x",
    "scene.obstacle_y": "scene_obstacle_y",
    "scene.obstacle_radius": "scene_obstacle_radius",
    "scene.render_frames": "scene_render_frames",
    "scene.frame_width": "scene_frame_width",
    "scene.frame_height": "scene_frame_height",
}

_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _parse_value(attr: str, raw: str):
    ftype = _FIELD_TYPES[attr]
    raw = raw.strip()
    try:
        if ftype == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        return raw
    except ValueError as e:
        raise ConfigError(f"cannot parse {attr}={raw!r} as {ftype}") from e


def load_config(path=None, overrides: Optional[dict] = None) -> PipelineConfig:
    """Load a flat `dotted.key=value` file; '#' starts a comment line."""
    cfg = PipelineConfig()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected key=value, got {line!r}")
            key, raw = line.split("=", 1)
            key = key.strip()
            if key not in _KEYMAP:
                raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
            attr = _KEYMAP[key]
            setattr(cfg, attr, _parse_value(attr, raw))
    for key, value in (overrides or {}).items():
        attr = _KEYMAP.get(key, key if key in _FIELD_TYPES else None)
        if attr is None:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, attr, value)
    _validate(cfg)
    return cfg


def _validate(cfg: PipelineConfig) -> None:
    if cfg.detector_xi_threshold <= 0:
        raise ConfigError("detector.xi_threshold must be positive")
    if cfg.grid_cell_size <= 0 or cfg.grid_width < 1 or cfg.grid_height < 1:
        raise ConfigError("invalid grid spec")
    if cfg.gp_signal_std <= 0 or cfg.gp_noise_std <= 0 or cfg.gp_length_scale < 0:
        raise ConfigError("gp hyperparameters must be positive")
    if not 0 < cfg.mask_variance_threshold <= 1:
        raise ConfigError("mask.variance_threshold must be in (0, 1]")


def config_as_dict(cfg: PipelineConfig) -> dict:
    """Dotted-key snapshot, in fixed key order."""
    out = {}
    for key, attr in _KEYMAP.items():
        v = getattr(cfg, attr)
        out[key] = v
    return out


def grid_from_config(cfg: PipelineConfig) -> SpatialGrid:
    return SpatialGrid(origin=(cfg.grid_origin_x, cfg.grid_origin_y),
                       cell_size=cfg.grid_cell_size,
                       width=cfg.grid_width, height=cfg.grid_height)


def hyper_from_config(cfg: PipelineConfig) -> gp.GpHyper:
    ell = cfg.gp_length_scale if cfg.gp_length_scale > 0 else 2.0 * cfg.grid_cell_size
    return gp.GpHyper(signal_var=cfg.gp_signal_std**2, length_scale=ell,
                      noise_var=cfg.gp_noise_std**2)


def scene_from_config(cfg: PipelineConfig, n_laps: int, seed: int,
                      with_obstacle: bool) -> simulate.SceneSpec:
    obstacles = ()
    if with_obstacle:
        ox = cfg.scene_obstacle_x
        oy = cfg.scene_obstacle_y
        if math.isnan(ox):
            ox = cfg.scene_arena_width / 2.0
        if math.isnan(oy):
            oy = cfg.scene_margin
        obstacles = ((ox, oy, cfg.scene_obstacle_radius),)
    return simulate.SceneSpec(
        arena_width=cfg.scene_arena_width, arena_height=cfg.scene_arena_height,
        margin=cfg.scene_margin, lap_speed=cfg.scene_lap_speed, n_laps=n_laps,
        corner_radius=cfg.scene_corner_radius, noise_std=cfg.scene_noise_std,
        dt=cfg.scene_dt, seed=seed, obstacles=obstacles,
        detour_arc=cfg.scene_detour_arc)


@dataclass(frozen=True)
class NormalityModel:
    """Everything detect needs: field, zones, per-zone dynamics, provenance."""

    field: VelocityField
    image: zones.VelocityImage
    zmap: ZoneMap
    dyns: dict[int, kalman.ZoneDynamics]
    dt: float
    config: dict
    version: int = MODEL_FORMAT_VERSION

    def zone_groups(self) -> dict[str, list[int]]:
        """set1 = straight zones, set2 = curve zones."""
        return {
            "set1": [z.id for z in self.zmap.zones if z.group == "straight"],
            "set2": [z.id for z in self.zmap.zones if z.group == "curve"],
        }


def _json_dump(obj, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2)
        f.write("\n")


def save_model(model: NormalityModel, model_dir) -> None:
    model_dir = Path(model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    # runtime paths are environment, not model parameters; keep the
    # snapshot relocatable and reruns byte-identical
    snapshot = {k: v for k, v in model.config.items() if not k.startswith("paths.")}
    manifest = {
        "format_version": model.version,
        "dt": model.dt,
        "grid": {
            "origin_x": model.field.grid.origin[0],
            "origin_y": model.field.grid.origin[1],
            "cell_size": model.field.grid.cell_size,
            "width": model.field.grid.width,
            "height": model.field.grid.height,
        },
        "norm": [model.image.norm[0], model.image.norm[1]],
        "zones": [
            {
                "id": z.id, "n_cells": z.n_cells,
                "ux": float(z.u[0]), "uy": float(z.u[1]),
                "group": z.group,
                "q": model.dyns[z.id].q, "r": model.dyns[z.id].r,
            }
            for z in model.zmap.zones
        ],
        "config": snapshot,
    }
    _json_dump(manifest, model_dir / "manifest.json")
    gp.write_field_csv(model.field, model_dir / "field.csv")
    zones.write_zone_map_csv(model.zmap, model.field.grid.width, model_dir / "zones.csv")
    zones.write_image_png(model.image, model_dir / "velocity_image.png")
    _json_dump(model.zone_groups(), model_dir / "zone_groups.json")


def load_model(model_dir) -> NormalityModel:
    model_dir = Path(model_dir)
    manifest_path = model_dir / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"no model manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    version = manifest.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelVersionError(
            f"model format {version} != supported {MODEL_FORMAT_VERSION}; retrain or migrate")

    g = manifest["grid"]
    grid = SpatialGrid(origin=(g["origin_x"], g["origin_y"]), cell_size=g["cell_size"],
                       width=g["width"], height=g["height"])

    mean = np.zeros((grid.n_cells, 2))
    var = np.zeros((grid.n_cells, 2))
    mask = np.zeros(grid.n_cells, dtype=bool)
    with open(model_dir / "field.csv", newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            m = int(row["row"]) * grid.width + int(row["col"])
            mean[m] = (float(row["mean_vx"]), float(row["mean_vy"]))
            var[m] = (float(row["var_vx"]), float(row["var_vy"]))
            mask[m] = row["masked"] == "0"
    field_ = VelocityField(grid=grid, mean=mean, variance=var, mask=mask)

    cells_by_zone: dict[int, list[int]] = {}
    cell_to_zone = np.zeros(grid.n_cells, dtype=np.int64)
    with open(model_dir / "zones.csv", newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            m = int(row["row"]) * grid.width + int(row["col"])
            zid = int(row["zone_id"])
            cells_by_zone.setdefault(zid, []).append(m)
            cell_to_zone[m] = zid

    dt = float(manifest["dt"])
    zone_list = []
    dyns = {}
    for zd in manifest["zones"]:
        zid = zd["id"]
        z = Zone(id=zid, cells=tuple(sorted(cells_by_zone.get(zid, ()))),
                 u=np.array([zd["ux"], zd["uy"]]), group=zd["group"])
        zone_list.append(z)
        dyns[zid] = kalman.ZoneDynamics(zone_id=zid, u=z.u, dt=dt, q=zd["q"], r=zd["r"])
    zmap = ZoneMap(zones=tuple(zone_list), cell_to_zone=cell_to_zone)

    from PIL import Image

    px = np.asarray(Image.open(model_dir / "velocity_image.png").convert("RGB"))
    image = zones.VelocityImage(width=grid.width, height=grid.height, pixels=px,
                                norm=(manifest["norm"][0], manifest["norm"][1]))
    return NormalityModel(field=field_, image=image, zmap=zmap, dyns=dyns, dt=dt,
                          config=manifest["config"], version=version)


def _lap_seed(base: int, scenario: int, lap: int) -> int:
    return base * 1_000_000 + scenario * 10_000 + lap


def cmd_simulate(cfg: PipelineConfig) -> dict:
    """Generate the training scenario (normal laps) and the test scenario
    (normal laps plus one avoidance lap) under data_dir."""
    data_dir = Path(cfg.data_dir)
    counts = {"train": 0, "test": 0}
    for scenario, sub, n_laps in ((1, "train", cfg.scene_n_laps),
                                  (2, "test", cfg.scene_test_n_laps)):
        sub_dir = data_dir / sub
        sub_dir.mkdir(parents=True, exist_ok=True)
        for lap in range(n_laps):
            avoid_here = sub == "test" and lap == cfg.scene_avoidance_lap
            spec = scene_from_config(cfg, n_laps=1,
                                     seed=_lap_seed(cfg.seed, scenario, lap),
                                     with_obstacle=avoid_here)
            avoidance = simulate.Avoidance(lap=0, depth=cfg.scene_detour_depth) \
                if avoid_here else None
            traj, in_detour = simulate.simulate_trajectory(spec, avoidance)
            stem = f"lap_{lap:02d}"
            write_trajectory_csv(traj, sub_dir / f"{stem}.csv")
            simulate.write_labels_csv(in_detour, sub_dir / f"{stem}_labels.csv")
            if cfg.scene_render_frames:
                window = None
                if avoid_here:
                    # the pedestrian steps onto the path exactly for the detour
                    ks = np.flatnonzero(in_detour)
                    window = (int(ks[0]), int(ks[-1]))
                simulate.render_fpv(traj, spec, cfg.scene_frame_height,
                                    cfg.scene_frame_width,
                                    sub_dir / "frames" / stem,
                                    obstacle_frames=window)
            counts[sub] += 1
    return counts


def _list_trajectories(dir_path: Path) -> list[Path]:
    return sorted(p for p in dir_path.glob("*.csv") if not p.name.endswith("_labels.csv"))


def cmd_train(cfg: PipelineConfig) -> NormalityModel:
    """derive velocities -> GP field -> encode -> segment -> per-zone dynamics."""
    train_dir = Path(cfg.data_dir) / "train"
    paths = _list_trajectories(train_dir) if train_dir.exists() else []
    if not paths:
        raise DataError(f"no trajectories in {train_dir}")
    try:
        trajs = [read_trajectory_csv(p) for p in paths]
    except ValueError as e:
        raise DataError(f"ingest: {e}") from e

    dts = {t.dt for t in trajs}
    if len({round(d, 12) for d in dts}) > 1:
        raise DataError(f"trajectories disagree on dt: {sorted(dts)}")
    dt = trajs[0].dt

    grid = grid_from_config(cfg)
    hyper = hyper_from_config(cfg)
    try:
        field_ = gp.build_field(trajs, grid, hyper, gp.MaskPolicy(cfg.mask_variance_threshold),
                                max_points=cfg.gp_max_points)
    except ValueError as e:
        raise DataError(f"field: {e}") from e
    try:
        image = zones.encode_image(field_)
        zmap = zones.segment(image, field_.mask, zones.SlicParams(
            n_superpixels=cfg.slic_n_superpixels, compactness=cfg.slic_compactness,
            max_iters=cfg.slic_max_iters, min_zone_cells=cfg.slic_min_zone_cells,
            straight_threshold=cfg.slic_straight_threshold))
    except ValueError as e:
        raise DataError(f"segment: {e}") from e
    dyns = {z.id: zones.zone_dynamics(z, dt=dt, q=cfg.kf_q, r=cfg.kf_r)
            for z in zmap.zones}
    model = NormalityModel(field=field_, image=image, zmap=zmap, dyns=dyns, dt=dt,
                           config=config_as_dict(cfg))
    save_model(model, cfg.model_dir)
    return model


def detect_summary(records: list[kalman.InnovationRecord]) -> dict:
    finite = [r.xi for r in records if not r.out_of_support]
    n = len(records)
    return {
        "n_records": n,
        "max_finite_xi": max(finite) if finite else None,
        "abnormal_fraction": (sum(1 for r in records if r.abnormal) / n) if n else 0.0,
        "n_out_of_support": sum(1 for r in records if r.out_of_support),
        "runs": [[a, b] for a, b in kalman.abnormal_runs(records)],
    }


def cmd_detect(cfg: PipelineConfig, traj_paths: Optional[list] = None) -> dict:
    """Score test trajectories against the persisted model; emit CSVs + summary."""
    model = load_model(cfg.model_dir)
    if traj_paths is None:
        test_dir = Path(cfg.data_dir) / "test"
        traj_paths = _list_trajectories(test_dir) if test_dir.exists() else []
    traj_paths = [Path(p) for p in traj_paths]
    if not traj_paths:
        raise DataError("no test trajectories")

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg_det = kalman.DetectorConfig(xi_threshold=cfg.detector_xi_threshold)
    summary = {"trajectories": []}
    for p in sorted(traj_paths):
        try:
            traj = read_trajectory_csv(p)
        except ValueError as e:
            raise DataError(f"{p}: {e}") from e
        records = kalman.run_bank(traj, model.zmap, model.field.grid, model.dyns,
                                  cfg_det, p0=cfg.kf_p0)
        kalman.write_innovations_csv(records, out_dir / f"innovations_{p.stem}.csv")
        entry = {"name": p.stem}
        entry.update(detect_summary(records))
        summary["trajectories"].append(entry)
    _json_dump(summary, out_dir / "detect_summary.json")
    return summary


def read_pl_scores(path) -> dict[int, dict]:
    """Read the PL score CSV; returns k -> {y_tilde (fused), abnormal, groups}.

    Rows are (k, group) pairs. When a fused_y column is present it is used
    directly; otherwise the bank fusion (min over groups) is applied here.
    """
    per_k: dict[int, dict] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        for row in reader:
            k = int(row["k"])
            e = per_k.setdefault(k, {"group_y": {}, "fused": None, "abnormal": None})
            y = float(row["y_tilde"])
            e["group_y"][row["group"]] = y
            if "fused_y" in row and row["fused_y"] != "":
                e["fused"] = float(row["fused_y"])
            if "abnormal" in row and row["abnormal"] != "":
                e["abnormal"] = row["abnormal"] == "1"
    for e in per_k.values():
        if e["fused"] is None:
            e["fused"] = min(e["group_y"].values())
    return per_k


def _intervals_from_flags(ks: list[int], flags: list[bool]) -> list[tuple[int, int]]:
    runs = []
    start = prev = None
    for k, f in zip(ks, flags):
        if f:
            if start is None or k != prev + 1:
                if start is not None:
                    runs.append((start, prev))
                start = k
            prev = k
        else:
            if start is not None:
                runs.append((start, prev))
                start = None
            prev = k
    if start is not None:
        runs.append((start, prev))
    return runs


def cmd_fuse(cfg: PipelineConfig, sl_path, pl_path=None) -> dict:
    """Join SL innovations with PL scores on k; emit the aligned CSV and stats.

    With no PL file the report still completes, PL columns left empty.
    """
    sl_path = Path(sl_path)
    if not sl_path.exists():
        raise DataError(f"SL score file not found: {sl_path}")
    records = kalman.read_innovations_csv(sl_path)
    if not records:
        raise DataError(f"{sl_path} is empty")

    pl = None
    if pl_path is not None:
        pl_path = Path(pl_path)
        if not pl_path.exists():
            raise DataError(f"PL score file not found: {pl_path}")
        pl = read_pl_scores(pl_path)
        sl_ks = {r.k for r in records}
        if not sl_ks & set(pl.keys()):
            raise DataError("SL and PL scores cover disjoint time ranges")

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fused_path = out_dir / f"fused_{sl_path.stem}.csv"
    y_thres = cfg.fuse_y_threshold
    with open(fused_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["k", "t", "xi", "sl_abnormal", "y_tilde", "pl_abnormal"])
        for r in records:
            y = pl.get(r.k) if pl else None
            if y is None:
                w.writerow([r.k, repr(r.t), repr(r.xi), 1 if r.abnormal else 0, "", ""])
            else:
                flag = y["abnormal"]
                if not math.isnan(y_thres):
                    flag = y["fused"] > y_thres
                w.writerow([r.k, repr(r.t), repr(r.xi), 1 if r.abnormal else 0,
                            repr(y["fused"]), 1 if flag else 0])

    stats = {"sl": {"runs": [[a, b] for a, b in kalman.abnormal_runs(records)]},
             "pl": None, "alignment": None}
    if pl:
        ks = sorted(pl.keys())
        flags = []
        for k in ks:
            flag = pl[k]["abnormal"]
            if not math.isnan(y_thres):
                flag = pl[k]["fused"] > y_thres
            flags.append(bool(flag))
        pl_runs = _intervals_from_flags(ks, flags)
        stats["pl"] = {"runs": [[a, b] for a, b in pl_runs]}
        sl_set = {r.k for r in records if r.abnormal}
        pl_set = {k for k, f in zip(ks, flags) if f}
        union = sl_set | pl_set
        stats["alignment"] = {
            "overlap_ratio": (len(sl_set & pl_set) / len(union)) if union else None,
            "peak_lag_steps": _peak_lag(records, pl),
        }
    _json_dump(stats, out_dir / f"fuse_stats_{sl_path.stem}.json")
    return stats


def _peak_lag(records, pl) -> Optional[int]:
    finite = [r for r in records if not r.out_of_support]
    if not finite or not pl:
        return None
    k_sl = max(finite, key=lambda r: r.xi).k
    k_pl = max(pl.keys(), key=lambda k: pl[k]["fused"])
    return int(k_sl) - int(k_pl)


def cmd_report(cfg: PipelineConfig) -> dict:
    """Summarize detect outputs: per-trajectory stats plus per-group medians."""
    out_dir = Path(cfg.out_dir)
    paths = sorted(out_dir.glob("innovations_*.csv"))
    if not paths:
        raise DataError(f"no innovation files in {out_dir}")
    model = load_model(cfg.model_dir)
    group_of = {z.id: z.group for z in model.zmap.zones}

    report = {"trajectories": []}
    for p in paths:
        records = kalman.read_innovations_csv(p)
        stem = p.stem.removeprefix("innovations_")
        entry = {"name": stem}
        entry.update(detect_summary(records))
        by_group = {"straight": [], "curve": []}
        for r in records:
            if r.zone_id is not None and not r.out_of_support:
                by_group[group_of[r.zone_id]].append(r.xi)
        entry["median_xi"] = {
            g: (float(np.median(v)) if v else None) for g, v in by_group.items()
        }
        labels_path = Path(cfg.data_dir) / "test" / f"{stem}_labels.csv"
        if labels_path.exists():
            flags = simulate.read_labels_csv(labels_path)
            window = np.flatnonzero(flags)
            if len(window):
                lo, hi = int(window[0]), int(window[-1])
                runs = kalman.abnormal_runs(records)
                inside = [[a, b] for a, b in runs if a >= lo and b <= hi]
                entry["detour"] = {"window": [lo, hi], "runs_inside": inside}
        report["trajectories"].append(entry)
    _json_dump(report, out_dir / "report.json")
    return report
