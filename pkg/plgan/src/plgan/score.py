"""Discriminator-based abnormality scores.

Per frame and per set: the observation scores come from applying the patch
discriminators to the real (frame, flow) pair, the prediction scores from
applying them to the cross-channel reconstruction under the real condition,
so content the generators cannot reproduce degrades the prediction score.
The summed scores are min-max normalized into [0, 1] over the whole scored
sequence and differenced (observation minus prediction); the final per-frame
output is the minimum of the two sets' differences.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from .data import SET1, SET2, SampleSet

DEGENERATE_RANGE = 1e-9


@dataclass(frozen=True)
class PlScore:
    k: int
    group: str
    s_o: float
    s_f: float
    s_po: float
    s_pf: float
    y_tilde: float
    fused_y: float
    abnormal: bool


def raw_scores(bank, samples: SampleSet, batch_size: int = 32) -> dict[str, np.ndarray]:
    """(N, 4) array per set: columns s_o, s_f, s_po, s_pf."""
    frames = torch.from_numpy(samples.frames[:, None, :, :])
    flows = torch.from_numpy(samples.flows.transpose(0, 3, 1, 2))
    out = {}
    with torch.no_grad():
        for set_name in (SET1, SET2):
            g_f2o, d_f2o = bank[set_name]["f2o"]
            g_o2f, d_o2f = bank[set_name]["o2f"]
            cols = np.empty((len(samples), 4), dtype=np.float64)
            for i in range(0, len(samples), batch_size):
                fr = frames[i:i + batch_size]
                fl = flows[i:i + batch_size]
                p_o = g_f2o(fr)
                p_f = g_o2f(fl)
                cols[i:i + batch_size, 0] = d_f2o.score(fr, fl).numpy()
                cols[i:i + batch_size, 1] = d_o2f.score(fl, fr).numpy()
                cols[i:i + batch_size, 2] = d_f2o.score(fr, p_o).numpy()
                cols[i:i + batch_size, 3] = d_o2f.score(fl, p_f).numpy()
            out[set_name] = cols
    return out


def _minmax(a: np.ndarray) -> np.ndarray:
    span = a.max() - a.min()
    if span < DEGENERATE_RANGE:
        return np.zeros_like(a)
    return (a - a.min()) / span


def score_frames(bank, lap_samples: list[SampleSet],
                 threshold: Optional[float] = None,
                 calibration_lap: Optional[str] = None,
                 batch_size: int = 32) -> tuple[dict[str, list[PlScore]], float]:
    """Score every lap with both sets and fuse.

    Normalization spans the full scored sequence (all laps of this call).
    The abnormality threshold is either given or taken as the 90th percentile
    of the fused output over the calibration lap (default: the first lap).

    Returns (lap name -> PlScore rows, threshold).
    """
    if not lap_samples:
        raise ValueError("nothing to score")
    raw = {s.name: raw_scores(bank, s, batch_size) for s in lap_samples}

    bounds = {}  # lap -> (start, end) in the concatenated sequence
    start = 0
    for s in lap_samples:
        bounds[s.name] = (start, start + len(s))
        start += len(s)

    y_by_set = {}
    for set_name in (SET1, SET2):
        cols = np.vstack([raw[s.name][set_name] for s in lap_samples])
        s_obs = cols[:, 0] + cols[:, 1]
        s_pred = cols[:, 2] + cols[:, 3]
        y_by_set[set_name] = _minmax(s_obs) - _minmax(s_pred)
    fused = np.minimum(y_by_set[SET1], y_by_set[SET2])

    if threshold is None:
        name = calibration_lap or lap_samples[0].name
        if name not in bounds:
            raise ValueError(f"calibration lap {name!r} not among scored laps")
        lo, hi = bounds[name]
        threshold = float(np.percentile(fused[lo:hi], 90.0))

    result: dict[str, list[PlScore]] = {}
    for s in lap_samples:
        lo, hi = bounds[s.name]
        rows = []
        for i, k in enumerate(s.ks):
            j = lo + i
            for set_name in (SET1, SET2):
                c = raw[s.name][set_name][i]
                rows.append(PlScore(
                    k=int(k), group=set_name,
                    s_o=float(c[0]), s_f=float(c[1]),
                    s_po=float(c[2]), s_pf=float(c[3]),
                    y_tilde=float(y_by_set[set_name][j]),
                    fused_y=float(fused[j]),
                    abnormal=bool(fused[j] > threshold)))
        result[s.name] = rows
    return result, float(threshold)


def write_scores_csv(rows: list[PlScore], path) -> None:
    """`k,group,s_o,s_f,s_po,s_pf,y_tilde,fused_y,abnormal` (booleans 0/1)."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["k", "group", "s_o", "s_f", "s_po", "s_pf",
                    "y_tilde", "fused_y", "abnormal"])
        for r in rows:
            w.writerow([r.k, r.group, repr(r.s_o), repr(r.s_f), repr(r.s_po),
                        repr(r.s_pf), repr(r.y_tilde), repr(r.fused_y),
                        1 if r.abnormal else 0])


def read_scores_csv(path) -> list[PlScore]:
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            out.append(PlScore(
                k=int(row["k"]), group=row["group"],
                s_o=float(row["s_o"]), s_f=float(row["s_f"]),
                s_po=float(row["s_po"]), s_pf=float(row["s_pf"]),
                y_tilde=float(row["y_tilde"]), fused_y=float(row["fused_y"]),
                abnormal=row["abnormal"] == "1"))
    return out


def write_summary(result: dict[str, list[PlScore]], threshold: float, path) -> None:
    laps = {}
    for name, rows in sorted(result.items()):
        fused = [r.fused_y for r in rows[::2]]  # one fused value per frame
        laps[name] = {
            "n_frames": len(fused),
            "mean_fused_y": float(np.mean(fused)),
            "max_fused_y": float(np.max(fused)),
            "abnormal_fraction": float(np.mean([r.abnormal for r in rows[::2]])),
        }
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"threshold": threshold, "laps": laps}, f, indent=2)
        f.write("\n")
