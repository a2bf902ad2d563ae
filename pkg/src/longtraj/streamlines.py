"""Combined vector field per memory window and farthest-point streamline
placement."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.spatial import cKDTree

from . import bspline
from .errors import EmptyInput
from .flow_io import FlowMap
from .integrate import bilinear, rkf45_step
from .sampling import outlier_keep_mask

TERMINATIONS = ("boundary", "near_other", "critical_point", "closed", "max_length")
CRITICAL_MAG = 1e-3


@dataclass
class VectorField:
    flow: FlowMap
    mask: np.ndarray  # True where the field is valid

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.flow.shape:
            raise ValueError("mask and flow differ in shape")
        # invalid pixels carry zero vectors
        u = np.where(self.mask, self.flow.u, 0.0)
        v = np.where(self.mask, self.flow.v, 0.0)
        self.flow = FlowMap(u, v)

    @property
    def width(self) -> int:
        return self.flow.width

    @property
    def height(self) -> int:
        return self.flow.height

    @classmethod
    def from_flow(cls, flow: FlowMap, min_mag: float = CRITICAL_MAG) -> "VectorField":
        return cls(flow, flow.magnitude() >= min_mag)


@dataclass(frozen=True)
class Streamline:
    points: np.ndarray  # (n, 2)
    seed: tuple[float, float]
    termination: str  # how the forward end stopped
    termination_back: str = "critical_point"

    def __len__(self):
        return len(self.points)

    def arc_length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def to_dict(self) -> dict:
        return {"seed": [round(self.seed[0], 4), round(self.seed[1], 4)],
                "termination": self.termination, "termination_back": self.termination_back,
                "points": np.round(self.points, 4).tolist()}


def streamlines_to_json(lines) -> str:
    return json.dumps([s.to_dict() for s in lines])


def _as_samples(level):
    if level is None:
        return np.zeros((0, 4))
    if hasattr(level, "samples"):
        return level.samples()
    return np.asarray(level, dtype=np.float64).reshape(-1, 4)


def build_combined_field(avg_streak, level, width: int, height: int, *, levels: int = 5,
                         lo: float = 0.05, hi: float | None = None, method: str = "ours",
                         stride: int = 1) -> VectorField:
    """Dense, filtered field of one memory window.

    ``avg_streak`` is a sequence of streak flows (``FlowMap`` or objects with a
    ``flow`` attribute) that are averaged; ``level`` holds ``(x, y, u, v)``
    samples (or a fine-to-coarse representation) that are superimposed on the
    averaged flow before a B-spline refit.  Pixels failing the magnitude
    thresholds or the outlier bounds are masked.
    """
    maps = [getattr(s, "flow", s) for s in avg_streak]
    if not maps:
        raise EmptyInput("empty memory window")
    u = np.mean([m.u for m in maps], axis=0)
    v = np.mean([m.v for m in maps], axis=0)
    extra = _as_samples(level)
    if hi is None:
        hi = 0.5 * min(width, height)
    if not extra.size and np.ptp(u) == 0 and np.ptp(v) == 0:
        fu, fv = u, v
    else:
        gy, gx = np.mgrid[0:height:stride, 0:width:stride]
        xs = np.concatenate([gx.ravel(), extra[:, 0]])
        ys = np.concatenate([gy.ravel(), extra[:, 1]])
        z = np.column_stack([np.concatenate([u[gy, gx].ravel(), extra[:, 2]]),
                             np.concatenate([v[gy, gx].ravel(), extra[:, 3]])])
        extent = (max(width - 1, 1e-9), max(height - 1, 1e-9))
        su, sv = bspline.fit(bspline.ScatteredSamples(np.clip(xs, 0, extent[0]), np.clip(ys, 0, extent[1]),
                                                      z, extent), levels)
        fu, fv = su.grid(width, height), sv.grid(width, height)
    mag = np.hypot(fu, fv)
    mask = (mag >= lo) & (mag <= hi)
    if mask.sum() >= 4:
        keep = outlier_keep_mask(mag[mask], method)
        m = mask.copy()
        m[mask] = keep
        mask = m
    return VectorField(FlowMap(fu, fv), mask)


class _Sampler:
    """Scalar bilinear lookup of the unit direction field (fast path for one point)."""

    def __init__(self, field: VectorField):
        self.u = field.flow.u
        self.v = field.flow.v
        self.mask = field.mask
        self.W, self.H = field.width, field.height

    def raw(self, x, y):
        W, H = self.W, self.H
        x = min(max(x, 0.0), W - 1.0)
        y = min(max(y, 0.0), H - 1.0)
        i0, j0 = int(x), int(y)
        i1, j1 = min(i0 + 1, W - 1), min(j0 + 1, H - 1)
        fx, fy = x - i0, y - j0
        u, v = self.u, self.v
        a, b, c, d = (1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy
        return (a * u[j0, i0] + b * u[j0, i1] + c * u[j1, i0] + d * u[j1, i1],
                a * v[j0, i0] + b * v[j0, i1] + c * v[j1, i0] + d * v[j1, i1])

    def direction(self, p, sign):
        out = np.empty_like(p)
        for r in range(len(p)):
            du, dv = self.raw(p[r, 0], p[r, 1])
            n = math.hypot(du, dv)
            if n < CRITICAL_MAG:
                out[r] = 0.0
            else:
                out[r, 0], out[r, 1] = sign * du / n, sign * dv / n
        return out

    def valid(self, x, y):
        if not (0.0 <= x <= self.W - 1 and 0.0 <= y <= self.H - 1):
            return False
        return bool(self.mask[int(round(y)), int(round(x))])

    def magnitude(self, x, y):
        return math.hypot(*self.raw(x, y))


class _Hash:
    def __init__(self, cell: float):
        self.cell = cell
        self.buckets: dict = {}

    def _key(self, x, y):
        return int(math.floor(x / self.cell)), int(math.floor(y / self.cell))

    def add(self, x, y, tag=0.0):
        self.buckets.setdefault(self._key(x, y), []).append((x, y, tag))

    def near(self, x, y, r):
        kx, ky = self._key(x, y)
        r2 = r * r
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for px, py, tag in self.buckets.get((kx + dx, ky + dy), ()):
                    if (px - x) ** 2 + (py - y) ** 2 < r2:
                        yield tag


def _step(sampler, p, sign, h, tol=1e-3):
    """Advance one point by arc length ``h`` on the unit direction field."""
    f = lambda q: sampler.direction(q, sign)  # noqa: E731
    q = p[None, :].astype(np.float64)
    done, hh = 0.0, h
    for _ in range(64):
        if done >= h - 1e-12:
            break
        hh = min(hh, h - done)
        y, err = rkf45_step(f, q, hh)
        if err.max() <= tol or hh <= 1e-3:
            q, done = y, done + hh
            hh *= 2.0
        else:
            hh *= 0.5
    return q[0]


def _trace(sampler, seed, sign, others, own, d_test, h, max_pts, start_arc):
    """Integrate from ``seed`` in direction ``sign``; returns (points, termination).

    Coming back near the seed switches to a closing mode that keeps stepping
    while the distance to the seed shrinks, then ends the curve as closed.
    """
    pts = []
    p = np.asarray(seed, dtype=np.float64)
    arc = 0.0
    gap = 3.0 * d_test
    closing = False
    while True:
        if len(pts) + start_arc >= max_pts:
            return pts, "max_length"
        q = _step(sampler, p, sign, h)
        if not (0.0 <= q[0] <= sampler.W - 1 and 0.0 <= q[1] <= sampler.H - 1):
            return pts, "boundary"
        if not sampler.valid(q[0], q[1]) or sampler.magnitude(q[0], q[1]) < CRITICAL_MAG:
            return pts, "critical_point"
        if np.hypot(*(q - p)) < 0.25 * h:
            return pts, "critical_point"
        arc += h
        d_seed = math.hypot(q[0] - seed[0], q[1] - seed[1])
        if closing:
            if d_seed >= math.hypot(p[0] - seed[0], p[1] - seed[1]):
                return pts, ("closed" if d_seed < 2.0 else "near_other")
            pts.append(q)
            p = q
            continue
        if any(True for _ in others.near(q[0], q[1], d_test)):
            return pts, "near_other"
        s = sign * arc
        hits = [t for t in own.near(q[0], q[1], d_test) if abs(s - t) > gap]
        if hits:
            if arc >= 8.0 and sign > 0 and min(abs(t) for t in hits) <= d_test:
                closing = True
                pts.append(q)
                p = q
                continue
            return pts, "near_other"
        pts.append(q)
        own.add(q[0], q[1], s)
        p = q


def seed_and_diffuse(field: VectorField, d_sep: float = 4.3, d_rat: float = 1.3, *,
                     h: float = 1.0, max_length: float | None = None,
                     max_seeds: int | None = None) -> list[Streamline]:
    """Farthest-point streamline placement.

    The next seed is the valid pixel farthest (Euclidean distance transform)
    from every placed streamline point, every invalid pixel and the frame
    border.  Seeding stops once that distance drops below ``d_sep``.  Each
    seed is integrated both ways until the curve leaves the frame, meets an
    invalid or near-zero region, comes within ``d_sep / d_rat`` of another
    streamline, returns to its seed, or reaches the maximum length.
    """
    if d_sep <= 0 or d_rat < 1:
        raise ValueError("need d_sep > 0 and d_rat >= 1")
    W, H = field.width, field.height
    d_test = d_sep / d_rat
    max_pts = int((max_length or 4 * (W + H)) / h)
    sampler = _Sampler(field)
    # obstacle image padded by one pixel so the frame border counts as an obstacle
    free = np.zeros((H + 2, W + 2), dtype=bool)
    free[1:-1, 1:-1] = field.mask & (field.flow.magnitude() >= CRITICAL_MAG)
    others = _Hash(d_test)
    lines: list[Streamline] = []
    budget = max_seeds if max_seeds is not None else W * H
    for _ in range(budget):
        if not free.any():
            break
        dist = distance_transform_edt(free)
        idx = int(np.argmax(dist))
        if dist.flat[idx] < d_sep:
            break
        r, c = divmod(idx, W + 2)
        seed = np.array([c - 1.0, r - 1.0])
        own = _Hash(d_test)
        own.add(seed[0], seed[1], 0.0)
        fwd, t_f = _trace(sampler, seed, 1.0, others, own, d_test, h, max_pts, 1)
        if t_f == "closed":
            bwd, t_b = [], "closed"
        else:
            bwd, t_b = _trace(sampler, seed, -1.0, others, own, d_test, h, max_pts, 1 + len(fwd))
        pts = np.array(bwd[::-1] + [seed] + fwd)
        free[r, c] = False
        if len(pts) < 2:
            continue  # seed not diffused
        for x, y in pts:
            others.add(x, y)
            free[int(round(y)) + 1, int(round(x)) + 1] = False
        lines.append(Streamline(pts, (float(seed[0]), float(seed[1])), t_f, t_b))
    return lines


def tangency_angles(line: Streamline, flow: FlowMap) -> np.ndarray:
    """Angle (rad) between the central-difference tangent and the field at interior points."""
    p = line.points
    if len(p) < 3:
        return np.zeros(0)
    d = p[2:] - p[:-2]
    q = p[1:-1]
    fu, fv = bilinear(flow.u, q[:, 0], q[:, 1]), bilinear(flow.v, q[:, 0], q[:, 1])
    dot = d[:, 0] * fu + d[:, 1] * fv
    nrm = np.hypot(d[:, 0], d[:, 1]) * np.hypot(fu, fv)
    return np.arccos(np.clip(dot / np.where(nrm > 0, nrm, 1.0), -1.0, 1.0))


def min_separation(lines) -> float:
    """Smallest distance between points of two different streamlines."""
    best = math.inf
    for i in range(len(lines) - 1):
        rest = np.vstack([s.points for s in lines[i + 1:]])
        d, _ = cKDTree(lines[i].points).query(rest, k=1)
        best = min(best, float(d.min()))
    return best
