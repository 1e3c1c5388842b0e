"""Per-zone Kalman filters over position with innovation-based abnormality.

State is the 2D position only. Transition per zone: x_{k+1} = x_k + dt * u_n + w
with w ~ N(0, q I); measurements z = x + v with v ~ N(0, r I), H = I. The
innovation norm xi = |z - x_pred| is the abnormality measure; a step is
abnormal when xi exceeds the detector threshold.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .model import SpatialGrid, Trajectory, ZoneMap, locate_cell

# Marker xi for samples in cells without a normality model. Kept finite so
# CSV round-trips; excluded from any statistics over regular records.
OUT_OF_SUPPORT_XI = float(np.finfo(np.float64).max)

_I2 = np.eye(2)


@dataclass(frozen=True)
class ZoneDynamics:
    """Quasi-constant-velocity transition parameters of one zone."""

    zone_id: int
    u: np.ndarray  # (2,) m/s
    dt: float      # s
    q: float       # process noise variance per step, m^2 (Q = q I)
    r: float       # measurement noise variance, m^2 (R = r I)

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        u.flags.writeable = False
        object.__setattr__(self, "u", u)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.q < 0:
            raise ValueError("q must be nonnegative")
        if self.r <= 0:
            raise ValueError("r must be positive")

    @property
    def Q(self) -> np.ndarray:
        return self.q * _I2

    @property
    def R(self) -> np.ndarray:
        return self.r * _I2


@dataclass(frozen=True)
class KfState:
    x: np.ndarray       # (2,) position estimate, m
    P: np.ndarray       # (2, 2) estimate covariance
    zone_id: int

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        P = np.array(self.P, dtype=float)
        x.flags.writeable = False
        P.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "P", P)


@dataclass(frozen=True)
class DetectorConfig:
    xi_threshold: float = 0.4  # meters

    def __post_init__(self):
        if self.xi_threshold <= 0:
            raise ValueError("xi_threshold must be positive")


@dataclass(frozen=True)
class InnovationRecord:
    k: int
    t: float
    zone_id: Optional[int]
    eps: np.ndarray  # (2,) innovation, m; nan when out of support
    xi: float        # |eps|, m
    abnormal: bool
    out_of_support: bool = False

    def __post_init__(self):
        eps = np.array(self.eps, dtype=float)
        eps.flags.writeable = False
        object.__setattr__(self, "eps", eps)


def kf_predict(state: KfState, dyn: ZoneDynamics) -> KfState:
    """One-step prediction: x <- x + dt u, P <- P + Q (identity transition)."""
    if state.zone_id != dyn.zone_id:
        raise ValueError(f"state zone {state.zone_id} != dynamics zone {dyn.zone_id}")
    return KfState(x=state.x + dyn.dt * dyn.u, P=state.P + dyn.Q, zone_id=state.zone_id)


def kf_update(state: KfState, z, dyn: ZoneDynamics, cfg: DetectorConfig,
              k: int = 0, t: float = 0.0) -> tuple[KfState, InnovationRecord]:
    """Measurement update with H = I; returns the new state and its innovation.

    Covariance uses the Joseph form, which stays PSD for any gain.
    """
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("measurement must be finite")
    eps = z - state.x
    S = state.P + dyn.R
    K = np.linalg.solve(S.T, state.P.T).T  # P S^-1
    x = state.x + K @ eps
    ImK = _I2 - K
    P = ImK @ state.P @ ImK.T + K @ dyn.R @ K.T
    xi = float(np.hypot(eps[0], eps[1]))
    rec = InnovationRecord(k=k, t=t, zone_id=state.zone_id, eps=eps, xi=xi,
                           abnormal=xi > cfg.xi_threshold)
    return KfState(x=x, P=P, zone_id=state.zone_id), rec


def run_bank(traj: Trajectory, zones: ZoneMap, grid: SpatialGrid,
             dyns: Mapping[int, ZoneDynamics], cfg: DetectorConfig,
             p0: float = 0.25) -> list[InnovationRecord]:
    """Score a trajectory against the per-zone filter bank.

    The active zone comes from the current measurement's cell; on a zone
    switch the state (x, P) is handed to the new zone's filter unchanged.
    Samples in cells without a zone yield an out-of-support record (abnormal
    by definition) and the filter re-initializes at the next supported sample.
    Emits one record per sample after the first.
    """
    def zone_at(p) -> Optional[int]:
        m = locate_cell(grid, p)
        if m is None:
            return None
        zid = int(zones.cell_to_zone[m])
        return zid if zid else None

    if all(locate_cell(grid, p) is None for p in traj.pos):
        raise ValueError("trajectory entirely outside grid bounds")

    records: list[InnovationRecord] = []
    state: Optional[KfState] = None
    for i in range(len(traj)):
        z = traj.pos[i]
        k, t = int(traj.k[i]), float(traj.t[i])
        zid = zone_at(z)
        if zid is None:
            if i > 0:
                records.append(InnovationRecord(
                    k=k, t=t, zone_id=None, eps=np.array([np.nan, np.nan]),
                    xi=OUT_OF_SUPPORT_XI, abnormal=True, out_of_support=True))
            state = None
            continue
        if state is None:
            state = KfState(x=z, P=p0 * _I2, zone_id=zid)
            if i > 0:
                records.append(InnovationRecord(
                    k=k, t=t, zone_id=zid, eps=np.zeros(2), xi=0.0, abnormal=False))
            continue
        dyn = dyns[zid]
        if state.zone_id != zid:
            state = KfState(x=state.x, P=state.P, zone_id=zid)  # handoff unchanged
        state = kf_predict(state, dyn)
        state, rec = kf_update(state, z, dyn, cfg, k=k, t=t)
        records.append(rec)
    return records


def write_innovations_csv(records, path) -> None:
    """Export `k,t,zone,eps_x,eps_y,xi,abnormal,out_of_support` (booleans as 0/1)."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["k", "t", "zone", "eps_x", "eps_y", "xi", "abnormal", "out_of_support"])
        for r in records:
            w.writerow([r.k, repr(r.t),
                        "" if r.zone_id is None else r.zone_id,
                        repr(float(r.eps[0])), repr(float(r.eps[1])), repr(r.xi),
                        1 if r.abnormal else 0, 1 if r.out_of_support else 0])


def read_innovations_csv(path) -> list[InnovationRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        for row in reader:
            out.append(InnovationRecord(
                k=int(row["k"]), t=float(row["t"]),
                zone_id=int(row["zone"]) if row["zone"] else None,
                eps=np.array([float(row["eps_x"]), float(row["eps_y"])]),
                xi=float(row["xi"]),
                abnormal=row["abnormal"] == "1",
                out_of_support=row["out_of_support"] == "1"))
    return out


def abnormal_runs(records) -> list[tuple[int, int]]:
    """Maximal [k_start, k_end] intervals of consecutive abnormal records."""
    runs = []
    start = None
    prev_k = None
    for r in records:
        if r.abnormal:
            if start is None or (prev_k is not None and r.k != prev_k + 1):
                if start is not None:
                    runs.append((start, prev_k))
                start = r.k
            prev_k = r.k
        else:
            if start is not None:
                runs.append((start, prev_k))
                start = None
            prev_k = r.k
    if start is not None:
        runs.append((start, prev_k))
    return runs
