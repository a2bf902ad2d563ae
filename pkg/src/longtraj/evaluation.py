"""Matching extracted trajectories to annotated ones: resampling, trajectory
distances, distance-matrix regularisation, assignment and FP/error curves."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .cell_grid import select_k
from .errors import LengthMismatch

METRICS = ("euclidean", "hausdorff", "dtw", "lcs")
REGULARISERS = ("none", "cluster_threshold", "quartile_threshold", "median_rls", "local_scaling_rls")


def resample(traj, n: int) -> np.ndarray:
    """``n`` points equally spaced in chord-length parameter along a cubic
    spline through ``traj``; the endpoints are kept exactly."""
    p = np.asarray(traj, dtype=np.float64).reshape(-1, 2)
    if n < 2 or len(p) < 2:
        raise ValueError("need at least 2 points and n >= 2")
    step = np.hypot(*np.diff(p, axis=0).T)
    keep = np.concatenate([[True], step > 1e-12])
    p = p[keep]
    if len(p) == 1:
        return np.repeat(p, n, axis=0)
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(p, axis=0).T))])
    t = np.linspace(0.0, s[-1], n)
    if len(p) == 2:
        out = p[0] + (t / s[-1])[:, None] * (p[1] - p[0])
    else:
        out = CubicSpline(s, p, axis=0)(t)
    out[0], out[-1] = p[0], p[-1]
    return out


def features(traj, diag: float = 1.0) -> np.ndarray:
    """``(n, 4)`` rows ``(x/diag, y/diag, dx, dy)`` with ``(dx, dy)`` the unit
    direction of the segment leaving each point (the last point repeats the
    previous one)."""
    p = np.asarray(traj, dtype=np.float64).reshape(-1, 2)
    d = np.diff(p, axis=0)
    nrm = np.hypot(d[:, 0], d[:, 1])
    u = np.where(nrm[:, None] > 0, d / np.where(nrm > 0, nrm, 1.0)[:, None], 0.0)
    u = np.vstack([u, u[-1:]]) if len(u) else np.zeros((len(p), 2))
    return np.hstack([p / diag, u])


def _check_equal(a, b):
    if len(a) != len(b):
        raise LengthMismatch(f"sequences of length {len(a)} and {len(b)}")


def euclidean(a, b) -> float:
    _check_equal(a, b)
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b), axis=1).mean())


def hausdorff(a, b) -> float:
    d = cdist(np.atleast_2d(a), np.atleast_2d(b))
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def dtw(a, b) -> float:
    """Minimum summed feature distance over monotone alignments (match,
    insertion and deletion steps, unit weights)."""
    _check_equal(a, b)
    d = cdist(np.atleast_2d(a), np.atleast_2d(b))
    n, m = d.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            acc[i, j] = d[i - 1, j - 1] + min(acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
    return float(acc[n, m])


def lcs(a, b, eps: float = 0.05) -> float:
    """``1 - LCS / n`` where two points match when their feature distance is at most ``eps``."""
    _check_equal(a, b)
    match = cdist(np.atleast_2d(a), np.atleast_2d(b)) <= eps
    n, m = match.shape
    L = np.zeros((n + 1, m + 1), dtype=np.int64)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            L[i, j] = L[i - 1, j - 1] + 1 if match[i - 1, j - 1] else max(L[i - 1, j], L[i, j - 1])
    return 1.0 - L[n, m] / n


def traj_distance(a, b, metric: str = "dtw", *, diag: float = 1.0, eps: float = 0.05,
                  n: int | None = None) -> float:
    """Distance between two point sequences after resampling to a common count
    (the smaller of the two unless ``n`` is given)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    k = n or max(2, min(len(a), len(b)))
    fa, fb = features(resample(a, k), diag), features(resample(b, k), diag)
    if metric == "euclidean":
        return euclidean(fa, fb)
    if metric == "hausdorff":
        return hausdorff(fa, fb)
    if metric == "dtw":
        return dtw(fa, fb)
    if metric == "lcs":
        return lcs(fa, fb, eps)
    raise ValueError(f"unknown metric {metric!r}")


def distance_matrix(annotated, extracted, metric: str = "dtw", *, diag: float = 1.0,
                    eps: float = 0.05) -> np.ndarray:
    """Raw distances; rows are annotated trajectories, columns extracted ones."""
    D = np.zeros((len(annotated), len(extracted)))
    for i, a in enumerate(annotated):
        for j, b in enumerate(extracted):
            D[i, j] = traj_distance(a, b, metric, diag=diag, eps=eps)
    return D


def minmax(D) -> np.ndarray:
    D = np.asarray(D, dtype=np.float64)
    if D.size == 0:
        return D.copy()
    lo, hi = D.min(), D.max()
    return np.zeros_like(D) if hi == lo else (D - lo) / (hi - lo)


def rls(u, sigma: float):
    """Robust rescaling ``u^2 / (sigma^2 + u^2)``."""
    u = np.asarray(u, dtype=np.float64)
    if sigma == 0:
        return (u != 0).astype(np.float64)
    # 1 / (1 + (sigma/u)^2) avoids 0/0 when both squares underflow
    out = np.zeros_like(u)
    nz = u != 0
    with np.errstate(over="ignore"):
        out[nz] = 1.0 / (1.0 + (sigma / u[nz]) ** 2)
    return out


def value_clusters(values, t_c: float = 0.01, seed: int = 0):
    """1-D k-means of the values with the compactness stopping rule.

    Returns a list of member arrays sorted by centre.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    k, centers, labels, _ = select_k(v, t_c, np.random.default_rng(seed))
    order = np.argsort(centers[:, 0])
    return [v[labels == j] for j in order if np.any(labels == j)]


def cluster_threshold(D, t_c: float = 0.01, seed: int = 0) -> float:
    """Largest value of the lowest-valued cluster."""
    return float(value_clusters(D, t_c, seed)[0].max())


def regularise(D, method: str = "median_rls", *, t_c: float = 0.01, seed: int = 0) -> np.ndarray:
    D = np.asarray(D, dtype=np.float64)
    if D.size == 0:
        raise ValueError("empty distance matrix")
    if method == "none":
        return D.copy()
    if method == "cluster_threshold":
        return np.minimum(D, cluster_threshold(D, t_c, seed))
    if method == "quartile_threshold":
        return np.minimum(D, float(np.percentile(D, 75)))
    if method == "median_rls":
        return rls(D, float(np.median(D)))
    if method == "local_scaling_rls":
        sigma = float(np.mean([c.max() for c in value_clusters(D, t_c, seed)]))
        return rls(D, sigma)
    raise ValueError(f"unknown regularisation {method!r}")


def hungarian_assign(D) -> list[tuple[int, int]]:
    """Minimum-cost one-to-one pairs ``(row, col)``; rectangular inputs are
    padded with a constant cost larger than any entry, padded matches dropped."""
    D = np.asarray(D, dtype=np.float64)
    r, c = D.shape
    if r == 0 or c == 0:
        return []
    n = max(r, c)
    pad = (D.max() + 1.0) if D.size else 1.0
    M = np.full((n, n), pad)
    M[:r, :c] = D
    rows, cols = linear_sum_assignment(M)
    return [(int(i), int(j)) for i, j in zip(rows, cols) if i < r and j < c]


@dataclass
class MatchReport:
    pairs: list
    distances: list
    threshold: float
    fp_rate: float
    fn_rate: float
    accumulated_error: float


def report_at(D_raw, pairs, tau: float) -> MatchReport:
    D_raw = np.asarray(D_raw, dtype=np.float64)
    dist = [float(D_raw[i, j]) for i, j in pairs]
    correct = [d for d in dist if d <= tau]
    total = len(pairs)
    fp = (total - len(correct)) / total if total else 0.0
    n_ann = D_raw.shape[0]
    fn = (n_ann - len(correct)) / n_ann if n_ann else 0.0
    return MatchReport(list(pairs), dist, float(tau), fp, fn, float(sum(correct)))


def fp_error_curve(D_raw, pairs, thresholds) -> list[MatchReport]:
    """One report per threshold, sorted by threshold."""
    return [report_at(D_raw, pairs, t) for t in sorted(float(t) for t in thresholds)]


@dataclass
class Evaluation:
    metric: str
    regularisation: str
    D_raw: np.ndarray
    D_reg: np.ndarray
    pairs: list
    default_tau: float
    curve: list = field(default_factory=list)

    def report(self) -> MatchReport:
        return report_at(self.D_raw, self.pairs, self.default_tau)


def evaluate(extracted, annotated, metric: str = "dtw", reg: str = "median_rls", *, diag: float = 1.0,
             eps: float = 0.05, thresholds=None, seed: int = 0) -> Evaluation:
    """Distance matrix, regularisation, assignment and FP/error curve."""
    D = minmax(distance_matrix(annotated, extracted, metric, diag=diag, eps=eps))
    if D.size == 0:
        return Evaluation(metric, reg, D, D, [], 0.0, [])
    R = regularise(D, reg, seed=seed)
    pairs = hungarian_assign(R)
    tau0 = cluster_threshold(D, seed=seed)
    if thresholds is None:
        thresholds = np.linspace(0.0, 1.0, 21)
    return Evaluation(metric, reg, D, R, pairs, tau0, fp_error_curve(D, pairs, thresholds))


def write_curve_csv(path, curve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "fp_rate", "acc_error"])
        for r in sorted(curve, key=lambda r: r.threshold):
            w.writerow([f"{r.threshold:.6g}", f"{r.fp_rate:.6g}", f"{r.accumulated_error:.6g}"])


def frame_diagonal(width: int, height: int) -> float:
    return math.hypot(width, height)
