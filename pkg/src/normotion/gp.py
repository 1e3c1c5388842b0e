"""Gaussian-process regression of velocity over the spatial grid.

Each velocity channel is a scalar GP with a squared-exponential kernel
k(a, b) = sf2 * exp(-|a - b|^2 / (2 l^2)) plus white observation noise sn2.
Inference is exact: a Cholesky factorization of (K + sn2 I) is cached at fit
time and reused for every prediction. No hyperparameter optimization is
performed; sf2, l and sn2 are configuration inputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist

from .model import SpatialGrid, Trajectory, VelocityField, derive_velocities

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GpHyper:
    """SE-kernel hyperparameters: signal variance, length scale, noise variance."""

    signal_var: float   # sf2, (m/s)^2
    length_scale: float  # l, m
    noise_var: float    # sn2, (m/s)^2

    def __post_init__(self):
        if self.signal_var <= 0 or self.length_scale <= 0 or self.noise_var <= 0:
            raise ValueError("hyperparameters must be positive")


@dataclass(frozen=True)
class MaskPolicy:
    """Cells whose posterior variance stays above threshold * sf2 are dropped."""

    variance_threshold: float = 0.5

    def __post_init__(self):
        if not 0 < self.variance_threshold <= 1:
            raise ValueError("variance_threshold must be in (0, 1]")


class GpModel:
    """Fitted scalar GP. Immutable; safe for concurrent predict calls."""

    def __init__(self, X: np.ndarray, y: np.ndarray, hyper: GpHyper,
                 L: np.ndarray, alpha: np.ndarray):
        self.X = X
        self.y = y
        self.hyper = hyper
        self._L = L          # lower Cholesky factor of K + sn2 I
        self._alpha = alpha  # (K + sn2 I)^-1 y
        for a in (self.X, self.y, self._L, self._alpha):
            a.flags.writeable = False

    @property
    def n_train(self) -> int:
        return len(self.y)


def _kernel(hyper: GpHyper, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d2 = cdist(A, B, "sqeuclidean")
    return hyper.signal_var * np.exp(-0.5 * d2 / hyper.length_scale**2)


def fit(positions, targets, hyper: GpHyper) -> GpModel:
    """Fit one velocity channel on (position, velocity-component) pairs.

    Raises on dimension mismatch, empty data, or a factorization failure
    (which signals ill-conditioning; there is no silent fallback).
    """
    X = np.atleast_2d(np.asarray(positions, dtype=float))
    y = np.asarray(targets, dtype=float).ravel()
    if X.ndim != 2 or X.shape[1] != 2:
        raise ValueError(f"positions must be (n, 2), got {X.shape}")
    if len(X) == 0:
        raise ValueError("training set is empty")
    if len(X) != len(y):
        raise ValueError(f"{len(X)} positions vs {len(y)} targets")

    K = _kernel(hyper, X, X)
    K[np.diag_indices_from(K)] += hyper.noise_var
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError as e:
        raise ValueError(f"kernel matrix factorization failed ({e}); "
                         "data or hyperparameters are ill-conditioned") from e
    alpha = solve_triangular(L.T, solve_triangular(L, y, lower=True), lower=False)
    return GpModel(X.copy(), y.copy(), hyper, L, alpha)


def predict(model: GpModel, query) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at the query points.

    Variance lies in [0, sf2] and does not depend on the targets; far from
    all training data the posterior reverts to the prior (mean 0, var sf2).
    """
    Q = np.atleast_2d(np.asarray(query, dtype=float))
    Ks = _kernel(model.hyper, Q, model.X)
    mean = Ks @ model._alpha
    V = solve_triangular(model._L, Ks.T, lower=True)
    var = model.hyper.signal_var - np.sum(V**2, axis=0)
    return mean, np.maximum(var, 0.0)


def pool_training_pairs(trajs: Sequence[Trajectory]) -> tuple[np.ndarray, np.ndarray]:
    """Pool (position, velocity) pairs from every trajectory with >= 2 samples."""
    ps, vs = [], []
    for traj in trajs:
        if len(traj) < 2:
            continue
        p, v = derive_velocities(traj)
        ps.append(p)
        vs.append(v)
    if not ps:
        raise ValueError("no trajectory with at least 2 samples")
    return np.vstack(ps), np.vstack(vs)


def _thin(traj: Trajectory, stride: int) -> Trajectory:
    idx = np.arange(0, len(traj), stride)
    if len(idx) < 2:
        idx = np.array([0, len(traj) - 1])
    return Trajectory(k=traj.k[idx], t=traj.t[idx], pos=traj.pos[idx], dt=traj.dt,
                      frame_id=None if traj.frame_id is None else traj.frame_id[idx])


def build_field(trajs: Sequence[Trajectory], grid: SpatialGrid, hyper: GpHyper,
                mask: MaskPolicy, max_points: int = 1000) -> VelocityField:
    """Fit independent GPs for the two velocity channels and evaluate the grid.

    A cell keeps evidence iff the larger of its two channel variances does not
    exceed variance_threshold * sf2. Above max_points the trajectories are
    thinned by uniform sample stride before velocities are derived; the
    approximation is logged, never silent. Thinning also lengthens the
    finite-difference baseline, which suppresses the anchor-correlated noise
    that i.i.d. position jitter injects into forward differences.
    """
    usable = [t for t in trajs if len(t) >= 2]
    if not usable:
        raise ValueError("no trajectory with at least 2 samples")
    n_pairs = sum(len(t) - 1 for t in usable)
    if n_pairs > max_points:
        stride = int(np.ceil(n_pairs / max_points))
        log.warning("thinning %d training pairs by sample stride %d (cap %d)",
                    n_pairs, stride, max_points)
        usable = [_thin(t, stride) for t in usable]
    P, V = pool_training_pairs(usable)

    centers = grid.cell_centers()
    mean = np.empty((grid.n_cells, 2))
    var = np.empty((grid.n_cells, 2))
    for c in range(2):
        m = fit(P, V[:, c], hyper)
        mean[:, c], var[:, c] = predict(m, centers)
    keep = np.max(var, axis=1) <= mask.variance_threshold * hyper.signal_var
    return VelocityField(grid=grid, mean=mean, variance=var, mask=keep)


def write_field_csv(field: VelocityField, path) -> None:
    """Export `row,col,mean_vx,mean_vy,var_vx,var_vy,masked` (masked: 1 = dropped)."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["row", "col", "mean_vx", "mean_vy", "var_vx", "var_vy", "masked"])
        for m in range(field.grid.n_cells):
            row, col = field.grid.rowcol(m)
            w.writerow([row, col,
                        repr(float(field.mean[m, 0])), repr(float(field.mean[m, 1])),
                        repr(float(field.variance[m, 0])), repr(float(field.variance[m, 1])),
                        0 if field.mask[m] else 1])
