"""Key-point sampling, median-kernel flow vectors and outlier filtering.

Flow vectors are held column-wise in :class:`FlowVectors` so that filters and
cell distribution stay vectorised; :meth:`FlowVectors.records` yields the
per-vector :class:`FlowVector` view when one is wanted.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateDistribution, DimensionMismatch
from .flow_io import FlowMap

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FlowVector:
    x: float
    y: float
    u: float
    v: float
    L: float
    theta: float
    t: int


def wrap_angle(u, v):
    """Angle of ``(u, v)`` against +x, mapped to ``[0, 2*pi)``."""
    a = np.arctan2(v, u)
    a = np.where(a < 0, a + TWO_PI, a)
    return np.where(a >= TWO_PI, 0.0, a)


class FlowVectors:
    """Column store of flow vectors ``(x, y, u, v, t)``."""

    __slots__ = ("x", "y", "u", "v", "t")

    def __init__(self, x=(), y=(), u=(), v=(), t=()):
        self.x = np.asarray(x, dtype=np.float64).ravel()
        self.y = np.asarray(y, dtype=np.float64).ravel()
        self.u = np.asarray(u, dtype=np.float64).ravel()
        self.v = np.asarray(v, dtype=np.float64).ravel()
        t = np.asarray(t, dtype=np.int64).ravel()
        if t.size == 1 and self.x.size != 1:
            t = np.full(self.x.size, int(t[0]), dtype=np.int64)
        self.t = t
        n = self.x.size
        if not all(a.size == n for a in (self.y, self.u, self.v, self.t)):
            raise DimensionMismatch("flow vector columns differ in length")

    @property
    def L(self) -> np.ndarray:
        return np.hypot(self.u, self.v)

    @property
    def theta(self) -> np.ndarray:
        return wrap_angle(self.u, self.v)

    def __len__(self):
        return self.x.size

    def __getitem__(self, idx) -> "FlowVectors":
        return FlowVectors(self.x[idx], self.y[idx], self.u[idx], self.v[idx], self.t[idx])

    @classmethod
    def concat(cls, parts) -> "FlowVectors":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls()
        return cls(*(np.concatenate([getattr(p, k) for p in parts]) for k in cls.__slots__))

    def records(self) -> list[FlowVector]:
        L, th = self.L, self.theta
        return [FlowVector(float(self.x[i]), float(self.y[i]), float(self.u[i]), float(self.v[i]),
                           float(L[i]), float(th[i]), int(self.t[i])) for i in range(len(self))]

    def to_csv(self, path) -> None:
        L, th = self.L, self.theta
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "u", "v", "L", "theta", "t"])
            for i in range(len(self)):
                w.writerow([repr(float(self.x[i])), repr(float(self.y[i])), repr(float(self.u[i])),
                            repr(float(self.v[i])), repr(float(L[i])), repr(float(th[i])), int(self.t[i])])

    @classmethod
    def from_csv(cls, path) -> "FlowVectors":
        with open(Path(path), newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(*( [float(r[k]) for r in rows] for k in ("x", "y", "u", "v")),
                   [int(r["t"]) for r in rows])


# --- sampling ---------------------------------------------------------------

def sample_keypoints(flow: FlowMap, strategy: str = "grid", step: int = 4,
                     min_mag: float = 0.0) -> np.ndarray:
    """Lattice key points as an ``(n, 2)`` array of ``(x, y)``.

    ``grid`` places one point at the centre of every full ``step``-sized
    block; ``motion_grid`` keeps only those where the flow magnitude is at
    least ``min_mag``.
    """
    if step < 1:
        raise ValueError("step must be >= 1")
    xs = step // 2 + step * np.arange(flow.width // step)
    ys = step // 2 + step * np.arange(flow.height // step)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()]).astype(np.float64)
    if strategy == "grid":
        return pts
    if strategy == "motion_grid":
        mag = flow.magnitude()[gy.ravel(), gx.ravel()]
        return pts[mag >= min_mag]
    raise ValueError(f"unknown sampling strategy {strategy!r}")


def build_flow_vectors(points, flow: FlowMap, K: int = 13, t: int = 0) -> FlowVectors:
    """One flow vector per point, displacement = component-wise median of the
    ``K x K`` neighbourhood clipped to the frame."""
    if K < 1 or K % 2 == 0:
        raise ValueError("K must be odd and >= 1")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if pts.size == 0:
        return FlowVectors()
    r = K // 2
    col = np.clip(np.rint(pts[:, 0]).astype(np.int64), 0, flow.width - 1)
    row = np.clip(np.rint(pts[:, 1]).astype(np.int64), 0, flow.height - 1)
    comps = []
    for c in (flow.u, flow.v):
        padded = np.pad(c, r, mode="constant", constant_values=np.nan)
        win = sliding_window_view(padded, (K, K))[row, col]
        comps.append(np.nanmedian(win.reshape(len(pts), -1), axis=1))
    return FlowVectors(pts[:, 0], pts[:, 1], comps[0], comps[1], t)


def dual_threshold(vectors: FlowVectors, lo: float = 0.05, hi: float = math.inf) -> FlowVectors:
    if not 0 <= lo < hi:
        raise ValueError("need 0 <= lo < hi")
    L = vectors.L
    return vectors[(L >= lo) & (L <= hi)]


# --- outlier bounds ---------------------------------------------------------

@dataclass(frozen=True)
class OutlierBounds:
    gamma: float
    chi_minus: float
    chi_plus: float
    rho: float
    s_minus: float
    s_plus: float
    ell_minus: float
    ell_plus: float
    lambda_minus: float
    lambda_plus: float
    degenerate: bool = False
    clamped: bool = False

    def keep(self, values) -> np.ndarray:
        values = np.asarray(values)
        return (values >= self.lambda_minus) & (values <= self.lambda_plus)

    @classmethod
    def pass_all(cls) -> "OutlierBounds":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -math.inf, math.inf, degenerate=True)


def freedman_diaconis_histogram(values):
    """Bin index per value and bin counts, Freedman-Diaconis width, anchored at min."""
    values = np.asarray(values, dtype=np.float64)
    q1, q3 = np.percentile(values, [25, 75])
    width = 2.0 * (q3 - q1) * values.size ** (-1.0 / 3.0)
    idx = np.floor((values - values.min()) / width).astype(np.int64)
    return idx, np.bincount(idx), width


def skew_chebyshev_bounds(magnitudes) -> OutlierBounds:
    """Asymmetric outlier thresholds from nonparametric skew and a log-histogram
    median/mode ratio.

    Raises :class:`DegenerateDistribution` when the standard deviation or the
    interquartile range of the log-magnitudes is zero.
    """
    m = np.asarray(magnitudes, dtype=np.float64).ravel()
    if m.size < 4:
        raise ValueError("need at least 4 magnitudes")
    if np.any(m <= 0) or not np.all(np.isfinite(m)):
        raise ValueError("magnitudes must be finite and > 0")
    mu, nu, sigma = m.mean(), np.median(m), m.std()
    lo, hi = m.min(), m.max()
    if sigma <= 0 or not sigma > 1e-12 * max(abs(mu), 1e-300):
        raise DegenerateDistribution("zero standard deviation")
    # log of the ratio to the minimum: histogram is exactly invariant to scaling
    with np.errstate(over="ignore"):
        logs = np.log(m / lo)
    if not np.all(np.isfinite(logs)):
        raise DegenerateDistribution("log-magnitude ratio overflows")
    q1, q3 = np.percentile(logs, [25, 75])
    if not 0 < q3 - q1 < np.inf:
        raise DegenerateDistribution("zero interquartile range of log-magnitudes")
    gamma = float(np.clip((mu - nu) / sigma, -1.0, 1.0))
    if gamma > 0:
        chi_m, chi_p = abs(gamma), 0.0
    elif gamma < 0:
        chi_m, chi_p = 0.0, abs(gamma)
    else:
        chi_m = chi_p = 0.0
    _, counts, width = freedman_diaconis_histogram(logs)
    med_bin = min(int(np.floor((np.median(logs) - logs.min()) / width)), counts.size - 1)
    rho = 1.0 - counts[med_bin] / counts.max()
    s_m, s_p = rho * chi_m, rho * chi_p
    ell_m, ell_p = sigma * s_m, sigma * s_p
    lam_m, lam_p = lo + ell_m, hi - ell_p
    clamped = False
    if lam_m > nu:
        lam_m, clamped = nu, True
    if lam_p < nu:
        lam_p, clamped = nu, True
    return OutlierBounds(gamma, chi_m, chi_p, float(rho), s_m, s_p, ell_m, ell_p,
                         float(lam_m), float(lam_p), clamped=clamped)


def outlier_keep_mask(magnitudes, method: str = "ours", k: float | None = None) -> np.ndarray:
    """Boolean keep-mask over ``magnitudes`` for one of the removal methods.

    ``ours`` and ``std3`` work on raw magnitudes; ``zscore`` (default k=3) and
    ``mzscore`` (default k=3.5) on log-magnitudes.  A degenerate sample keeps
    everything.
    """
    L = np.asarray(magnitudes, dtype=np.float64)
    if method == "ours":
        # zero-length vectors carry no direction; they never survive
        pos = L > 0
        keep = pos.copy()
        if pos.sum() < 4:
            return keep
        try:
            keep[pos] = skew_chebyshev_bounds(L[pos]).keep(L[pos])
        except DegenerateDistribution:
            pass
        return keep
    if L.size == 0:
        return np.ones(0, dtype=bool)
    if method == "std3":
        sd = L.std()
        return np.abs(L - L.mean()) <= (k or 3.0) * sd
    logs = np.log(np.maximum(L, np.finfo(float).tiny))
    if method == "zscore":
        sd = logs.std()
        if sd == 0:
            return np.ones(L.size, dtype=bool)
        return np.abs(logs - logs.mean()) / sd <= (k or 3.0)
    if method == "mzscore":
        med = np.median(logs)
        mad = np.median(np.abs(logs - med))
        if mad == 0:
            return np.ones(L.size, dtype=bool)
        return np.abs(0.6745 * (logs - med) / mad) <= (k or 3.5)
    raise ValueError(f"unknown outlier method {method!r}")


def remove_outliers(vectors: FlowVectors, method: str = "ours", k: float | None = None):
    """Split ``vectors`` into ``(kept, removed)``."""
    keep = outlier_keep_mask(vectors.L, method, k)
    return vectors[keep], vectors[~keep]


@dataclass(frozen=True)
class MaskRates:
    tp: float
    tn: float
    fp: float
    fn: float
    no_positives: bool = False
    no_negatives: bool = False

    @property
    def tb(self) -> float:
        return 0.5 * (self.tp + self.tn)


def classify_against_mask(kept: FlowVectors, removed: FlowVectors, mask) -> MaskRates:
    """Rates of a removal split against a foreground mask.

    A kept vector starting inside the mask is a true positive, a removed one
    starting outside is a true negative.  A class with no members gets rate
    1.0 and the matching ``no_*`` flag.
    """
    mask = np.asarray(mask, dtype=bool)

    def inside(vs):
        c = np.clip(np.rint(vs.x).astype(np.int64), 0, mask.shape[1] - 1)
        r = np.clip(np.rint(vs.y).astype(np.int64), 0, mask.shape[0] - 1)
        return mask[r, c]

    kin, rin = inside(kept), inside(removed)
    pos = int(kin.sum() + rin.sum())
    neg = int((~kin).sum() + (~rin).sum())
    tp = kin.sum() / pos if pos else 1.0
    tn = (~rin).sum() / neg if neg else 1.0
    return MaskRates(float(tp), float(tn), float(1.0 - tn) if neg else 0.0,
                     float(1.0 - tp) if pos else 0.0, pos == 0, neg == 0)


def filter_frame(flow: FlowMap, t: int = 0, *, step: int = 4, strategy: str = "grid", K: int = 13,
                 lo: float = 0.05, hi: float | None = None, method: str = "ours") -> FlowVectors:
    """Sample, build and filter the flow vectors of one frame."""
    if hi is None:
        hi = 0.5 * min(flow.width, flow.height)
    pts = sample_keypoints(flow, strategy, step)
    vecs = dual_threshold(build_flow_vectors(pts, flow, K, t), lo, hi)
    kept, _ = remove_outliers(vecs, method)
    return kept
