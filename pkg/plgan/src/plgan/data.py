"""Dataset assembly from the trajectory-level pipeline's file outputs.

A lap contributes (frame, flow, group) samples: frame k pairs with the flow
computed from frames k and k+1; its zone group comes from the innovation CSV
emitted by the trajectory-level detector (set1 = straight zones, set2 =
curves). Frames labeled in_detour are abnormal by definition and the loader
refuses them for training.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .flow import FramePair, compute_flow, flow_to_image

SET1, SET2 = "set1", "set2"


@dataclass(frozen=True)
class LapFiles:
    """File locations for one lap."""

    name: str
    frames_dir: Path
    labels_csv: Optional[Path] = None
    innovations_csv: Optional[Path] = None


def discover_laps(data_dir, innovations_dir=None) -> list[LapFiles]:
    """Locate lap frame directories plus their labels/innovations files.

    data_dir holds lap_XX.csv, lap_XX_labels.csv and frames/lap_XX/ as written
    by the simulator; innovations_dir holds innovations_lap_XX.csv as written
    by the detector.
    """
    data_dir = Path(data_dir)
    frames_root = data_dir / "frames"
    laps = []
    if not frames_root.exists():
        return laps
    for d in sorted(frames_root.iterdir()):
        if not d.is_dir():
            continue
        labels = data_dir / f"{d.name}_labels.csv"
        innovations = None
        if innovations_dir is not None:
            cand = Path(innovations_dir) / f"innovations_{d.name}.csv"
            innovations = cand if cand.exists() else None
        laps.append(LapFiles(name=d.name, frames_dir=d,
                             labels_csv=labels if labels.exists() else None,
                             innovations_csv=innovations))
    return laps


def load_frames(frames_dir) -> np.ndarray:
    """(K, H, W) uint8 stack of frame_%06d.png in index order."""
    paths = sorted(Path(frames_dir).glob("frame_*.png"))
    if not paths:
        raise ValueError(f"no frames under {frames_dir}")
    return np.stack([np.asarray(Image.open(p).convert("L")) for p in paths])


def load_zone_groups(path) -> dict[int, str]:
    """zone id -> set name from the zone-group manifest."""
    manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    out = {}
    for name in (SET1, SET2):
        for zid in manifest.get(name, []):
            out[int(zid)] = name
    return out


def load_frame_groups(innovations_csv, groups: dict[int, str]) -> dict[int, Optional[str]]:
    """frame index -> set name (None when the sample had no zone)."""
    out: dict[int, Optional[str]] = {}
    with open(innovations_csv, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            k = int(row["k"])
            zone = row["zone"]
            out[k] = groups.get(int(zone)) if zone else None
    return out


def load_labels(labels_csv) -> dict[int, bool]:
    out = {}
    with open(labels_csv, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            out[int(row["k"])] = row["in_detour"] == "1"
    return out


@dataclass
class SampleSet:
    """Aligned arrays for one lap: frames, flow images, group names, flags."""

    name: str
    ks: np.ndarray            # (N,) frame indices
    frames: np.ndarray        # (N, H, W) float32 in [0, 1]
    flows: np.ndarray         # (N, H, W, 3) float32 in [0, 1]
    groups: list[Optional[str]]
    in_detour: np.ndarray     # (N,) bool

    def __len__(self) -> int:
        return len(self.ks)


def build_samples(lap: LapFiles, groups: Optional[dict[int, str]] = None,
                  max_flow: float = 8.0,
                  flow_cache_dir=None) -> SampleSet:
    """Compute (frame, flow) pairs for one lap and attach groups/labels.

    Flow images are cached to flow_cache_dir keyed by lap name; the cache is
    safe to share across runs because flow depends only on the frames.
    """
    stack = load_frames(lap.frames_dir)
    n = len(stack) - 1  # last frame has no forward flow
    flows = None
    if flow_cache_dir is not None:
        cache = Path(flow_cache_dir) / f"{lap.name}_flow.npz"
        if cache.exists():
            cached = np.load(cache)
            if cached["flows"].shape[0] == n:
                flows = cached["flows"]
    if flows is None:
        flows = np.empty((n, stack.shape[1], stack.shape[2], 3), dtype=np.float32)
        for k in range(n):
            pair = FramePair(frame=stack[k], flow=compute_flow(stack[k], stack[k + 1]))
            flows[k] = flow_to_image(pair.flow, max_flow=max_flow)
        if flow_cache_dir is not None:
            Path(flow_cache_dir).mkdir(parents=True, exist_ok=True)
            np.savez_compressed(Path(flow_cache_dir) / f"{lap.name}_flow.npz", flows=flows)

    frame_groups: dict[int, Optional[str]] = {}
    if lap.innovations_csv is not None and groups is not None:
        frame_groups = load_frame_groups(lap.innovations_csv, groups)
    labels = load_labels(lap.labels_csv) if lap.labels_csv else {}

    ks = np.arange(n)
    return SampleSet(
        name=lap.name,
        ks=ks,
        frames=stack[:n].astype(np.float32) / 255.0,
        flows=flows.astype(np.float32),
        groups=[frame_groups.get(int(k)) for k in ks],
        in_detour=np.array([labels.get(int(k), False) for k in ks], dtype=bool),
    )


def training_split(samples: list[SampleSet], max_per_set: int = 400,
                   ) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Pool normal frames per set for training; detour frames are refused.

    Returns set name -> (frames (N,1,H,W), flows (N,3,H,W)) float32 stacks,
    capped by uniform stride at max_per_set.
    """
    for s in samples:
        if s.in_detour.any():
            raise ValueError(
                f"{s.name}: {int(s.in_detour.sum())} frames are labeled in_detour; "
                "training data must come from normal scenarios only")
    frames = {SET1: [], SET2: []}
    flows = {SET1: [], SET2: []}
    for s in samples:
        for i, g in enumerate(s.groups):
            if g is None:
                continue
            frames[g].append(s.frames[i])
            flows[g].append(s.flows[i])
    out = {}
    for name in (SET1, SET2):
        if not frames[name]:
            raise ValueError(f"no training frames for {name}")
        fr = np.stack(frames[name])[:, None, :, :]
        fl = np.stack(flows[name]).transpose(0, 3, 1, 2)
        if len(fr) > max_per_set:
            stride = int(np.ceil(len(fr) / max_per_set))
            fr, fl = fr[::stride], fl[::stride]
        out[name] = (fr, fl)
    return out
