"""Spatiotemporal cells: vector distribution, orientation quantisation,
spatial clustering into dominant groups, fine-to-coarse levels and
neighbourhood entropy."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptyCell
from .sampling import TWO_PI, FlowVectors

N_BINS = 8
BIN_WIDTH = TWO_PI / N_BINS


@dataclass(frozen=True)
class VideoVolumeConfig:
    W: int
    H: int
    T: int
    n_w: int = 15
    n_h: int = 15
    n_tau: int = 5
    memory_cell: int = 3

    def __post_init__(self):
        for name in ("W", "H", "T", "n_w", "n_h", "n_tau", "memory_cell"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if self.n_w > self.W:
            raise ConfigError("n_w", f"cell width {self.n_w} exceeds frame width {self.W}")
        if self.n_h > self.H:
            raise ConfigError("n_h", f"cell height {self.n_h} exceeds frame height {self.H}")
        if self.n_tau > self.T:
            raise ConfigError("n_tau", f"mini-batch {self.n_tau} exceeds frame count {self.T}")

    @property
    def cols(self) -> int:
        return max(1, self.W // self.n_w)

    @property
    def rows(self) -> int:
        return max(1, self.H // self.n_h)


@dataclass(frozen=True)
class DominantGroup:
    x: float
    y: float
    n: int
    theta: float
    mag: float = 1.0  # mean member magnitude, used to rebuild a displacement

    @property
    def displacement(self) -> tuple[float, float]:
        return self.mag * math.cos(self.theta), self.mag * math.sin(self.theta)


@dataclass
class Cell:
    col: int
    row: int
    vectors: FlowVectors = field(default_factory=FlowVectors)
    groups: list = field(default_factory=list)
    entropy: float = 0.0

    @property
    def representative(self) -> DominantGroup | None:
        return self.groups[0] if self.groups else None


class CellGrid:
    """Row-major grid of :class:`Cell` covering a ``W x H`` frame."""

    def __init__(self, config: VideoVolumeConfig):
        self.config = config
        self.cells = [[Cell(c, r) for c in range(config.cols)] for r in range(config.rows)]

    @property
    def shape(self) -> tuple[int, int]:
        return self.config.rows, self.config.cols

    def __iter__(self):
        for row in self.cells:
            yield from row

    def __getitem__(self, rc) -> Cell:
        return self.cells[rc[0]][rc[1]]

    def index_of(self, x, y):
        """``(row, col)`` arrays for positions; the last cell absorbs remainder pixels."""
        cfg = self.config
        col = np.clip(np.floor(np.asarray(x) / cfg.n_w).astype(np.int64), 0, cfg.cols - 1)
        row = np.clip(np.floor(np.asarray(y) / cfg.n_h).astype(np.int64), 0, cfg.rows - 1)
        return row, col

    def add(self, vectors: FlowVectors) -> None:
        if not len(vectors):
            return
        row, col = self.index_of(vectors.x, vectors.y)
        key = row * self.config.cols + col
        order = np.argsort(key, kind="stable")
        keys, starts = np.unique(key[order], return_index=True)
        bounds = list(starts[1:]) + [len(order)]
        for k, s, e in zip(keys, starts, bounds):
            cell = self.cells[k // self.config.cols][k % self.config.cols]
            cell.vectors = FlowVectors.concat([cell.vectors, vectors[order[s:e]]])

    def count(self) -> int:
        return sum(len(c.vectors) for c in self)

    def to_json(self) -> str:
        out = []
        for c in self:
            out.append({"col": c.col, "row": c.row, "n_vectors": len(c.vectors),
                        "entropy": round(float(c.entropy), 6),
                        "groups": [{"x": round(g.x, 4), "y": round(g.y, 4), "n": g.n,
                                    "theta": round(g.theta, 6), "mag": round(g.mag, 6)} for g in c.groups]})
        return json.dumps(out)


def distribute(vectors: FlowVectors, config: VideoVolumeConfig) -> CellGrid:
    grid = CellGrid(config)
    grid.add(vectors)
    return grid


def orientation_bins(theta) -> np.ndarray:
    """8 bins of 45 degrees, bin 0 = [0, 45) degrees."""
    return np.clip(np.floor(np.asarray(theta) / BIN_WIDTH).astype(np.int64), 0, N_BINS - 1)


def quantise_orientations(vectors: FlowVectors) -> dict[int, FlowVectors]:
    """Orientation bins whose count is strictly above the median of the 8 counts.

    If no bin qualifies (all counts equal) every non-empty bin is returned.
    """
    if not len(vectors):
        raise EmptyCell("cannot quantise an empty cell")
    bins = orientation_bins(vectors.theta)
    counts = np.bincount(bins, minlength=N_BINS)
    chosen = np.flatnonzero(counts > np.median(counts))
    if chosen.size == 0:
        chosen = np.flatnonzero(counts > 0)
    return {int(b): vectors[bins == b] for b in chosen}


def circular_mean(theta) -> float:
    a = math.atan2(float(np.mean(np.sin(theta))), float(np.mean(np.cos(theta))))
    a = a + TWO_PI if a < 0 else a
    return 0.0 if a >= TWO_PI else a


def _lloyd(pts, centers, iters=100):
    for _ in range(iters):
        d = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        lab = d.argmin(1)
        new = centers.copy()
        for j in range(len(centers)):
            m = lab == j
            if m.any():
                new[j] = pts[m].mean(0)
        if np.allclose(new, centers, rtol=0, atol=1e-12):
            centers = new
            break
        centers = new
    d = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    lab = d.argmin(1)
    return centers, lab, float(d[np.arange(len(pts)), lab].sum())


def kmeans_path(points, k_max: int, rng=None):
    """Compactness ``C_k`` for ``k = 1..k_max`` with incremental seeding.

    Each ``k`` starts from the ``k-1`` solution plus one centre drawn with
    probability proportional to squared distance, so ``C_k`` never increases.
    Yields ``(k, centers, labels, C_k)``.
    """
    rng = np.random.default_rng(rng)
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    centers = pts.mean(0, keepdims=True)
    centers, lab, cost = _lloyd(pts, centers)
    yield 1, centers, lab, cost
    for k in range(2, k_max + 1):
        d = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(-1).min(1)
        if d.sum() <= 0:
            return
        pick = rng.choice(len(pts), p=d / d.sum())
        centers, lab, cost = _lloyd(pts, np.vstack([centers, pts[pick]]))
        yield k, centers, lab, cost


def select_k(points, t_c: float = 0.01, rng=None, k_cap: int | None = None):
    """Run k-means with growing ``k`` until one more cluster improves the
    compactness by less than ``t_c`` of the one-cluster compactness.

    Returns ``(k, centers, labels, costs)`` for the chosen ``k``.
    """
    if not 0 < t_c < 1:
        raise ValueError("t_c must lie in (0, 1)")
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    distinct = len(np.unique(pts, axis=0))
    k_max = distinct if k_cap is None else min(distinct, k_cap)
    costs = []
    prev = None
    for k, centers, lab, cost in kmeans_path(pts, max(k_max, 1), rng):
        costs.append(cost)
        if prev is not None:
            if (prev[3] - cost) / costs[0] < t_c:
                return prev[0], prev[1], prev[2], costs
        prev = (k, centers, lab, cost)
        if costs[0] == 0:
            break
    return prev[0], prev[1], prev[2], costs


def cluster_spatial(vectors: FlowVectors, t_c: float = 0.01, rng=None, k_cap: int | None = 32) -> list[DominantGroup]:
    """Dominant groups of one orientation bin, heaviest first."""
    if not len(vectors):
        return []
    pts = np.column_stack([vectors.x, vectors.y])
    k, centers, lab, _ = select_k(pts, t_c, rng, k_cap)
    theta, L = vectors.theta, vectors.L
    groups = []
    for j in range(k):
        m = lab == j
        if not m.any():
            continue
        groups.append(DominantGroup(float(pts[m, 0].mean()), float(pts[m, 1].mean()), int(m.sum()),
                                    circular_mean(theta[m]), float(L[m].mean())))
    return sorted(groups, key=lambda g: -g.n)


def quantise_and_cluster(grid: CellGrid, t_c: float = 0.01, seed: int = 0, batch: int = 0) -> None:
    """Fill ``groups`` of every non-empty cell (independent per cell)."""
    for cell in grid:
        if not len(cell.vectors):
            cell.groups = []
            continue
        groups = []
        for b, members in sorted(quantise_orientations(cell.vectors).items()):
            rng = np.random.default_rng([seed, batch, cell.row, cell.col, b])
            groups.extend(cluster_spatial(members, t_c, rng))
        cell.groups = sorted(groups, key=lambda g: -g.n)


@dataclass
class FineToCoarse:
    level_vectors: FlowVectors
    level_groups: list
    level_representative: list

    def samples(self, level: str = "groups") -> np.ndarray:
        """``(n, 4)`` rows ``(x, y, u, v)`` for one level of granularity."""
        if level == "vectors":
            v = self.level_vectors
            return np.column_stack([v.x, v.y, v.u, v.v]) if len(v) else np.zeros((0, 4))
        groups = {"groups": self.level_groups, "representative": self.level_representative}[level]
        return np.array([[g.x, g.y, *g.displacement] for g in groups]).reshape(-1, 4)

    @classmethod
    def merge(cls, parts) -> "FineToCoarse":
        parts = list(parts)
        return cls(FlowVectors.concat([p.level_vectors for p in parts]),
                   [g for p in parts for g in p.level_groups],
                   [g for p in parts for g in p.level_representative])


def fine_to_coarse(grid: CellGrid) -> FineToCoarse:
    vecs, groups, reps = [], [], []
    for cell in grid:
        if not len(cell.vectors):
            continue
        vecs.append(cell.vectors)
        groups.extend(cell.groups)
        if cell.representative is not None:
            reps.append(cell.representative)
    return FineToCoarse(FlowVectors.concat(vecs), groups, reps)


def entropy_bits(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(max(0.0, -(p * np.log2(p)).sum()))


def cell_entropy(grid: CellGrid, K_n: int = 3) -> np.ndarray:
    """Per-cell Shannon entropy (bits) of the 8-bin orientation histogram.

    Samples are the cell's own vectors plus the group prototypes of the other
    cells in its ``K_n x K_n`` neighbourhood; neighbours falling outside the
    grid are replaced by the cell's own vectors.
    """
    if K_n < 1 or K_n % 2 == 0:
        raise ValueError("K_n must be odd")
    rows, cols = grid.shape
    r = K_n // 2
    group_counts = np.zeros((rows, cols, N_BINS))
    own_counts = np.zeros((rows, cols, N_BINS))
    for cell in grid:
        if len(cell.vectors):
            own_counts[cell.row, cell.col] = np.bincount(orientation_bins(cell.vectors.theta), minlength=N_BINS)
        if cell.groups:
            group_counts[cell.row, cell.col] = np.bincount(
                orientation_bins([g.theta for g in cell.groups]), minlength=N_BINS)
    out = np.zeros((rows, cols))
    for i in range(rows):
        for j in range(cols):
            c = own_counts[i, j].copy()
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    if di == 0 and dj == 0:
                        continue
                    ii, jj = i + di, j + dj
                    if 0 <= ii < rows and 0 <= jj < cols:
                        c += group_counts[ii, jj]
                    else:
                        c += own_counts[i, j]
            out[i, j] = entropy_bits(c)
            grid[i, j].entropy = out[i, j]
    return out
