"""Particle advection through mini-batch averaged flow, streaklines, streak flow
and B-spline interpolated sparse flow maps."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import bspline
from .flow_io import FlowMap
from .integrate import flow_sampler, rkf45

log = logging.getLogger(__name__)


class ParticleGrid:
    """Particles injected at fixed origins, one new particle per origin per step.

    ``pos[n, a]`` is the current position of the particle of age ``a`` (steps
    since injection) released at origin ``n``; only the newest ``max_len``
    particles of each origin are kept.  A particle that leaves the frame is
    frozen at its last in-frame position and marked dead.
    """

    def __init__(self, width: int, height: int, stride: int = 1, max_len: int = 10,
                 origins=None, tol: float = 1e-4):
        self.width, self.height = width, height
        if origins is None:
            gy, gx = np.mgrid[0:height:stride, 0:width:stride]
            origins = np.column_stack([gx.ravel(), gy.ravel()])
        self.origins = np.asarray(origins, dtype=np.float64).reshape(-1, 2)
        self.max_len = int(max_len)
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        self.tol = tol
        n = len(self.origins)
        self.pos = np.zeros((n, self.max_len, 2))
        self.pos[:, 0] = self.origins
        self.exists = np.zeros((n, self.max_len), dtype=bool)
        self.exists[:, 0] = True
        self.alive = self.exists.copy()
        self.steps = 0

    def inside(self, p):
        return ((p[..., 0] >= 0) & (p[..., 0] <= self.width - 1)
                & (p[..., 1] >= 0) & (p[..., 1] <= self.height - 1))

    def advect(self, avg_flow: FlowMap, dt: float = 1.0) -> "ParticleGrid":
        """Advance every live particle by ``dt`` through the stationary field,
        then inject a fresh particle at each origin."""
        live = self.alive
        if live.any():
            p = self.pos[live]
            q = rkf45(flow_sampler(avg_flow.u, avg_flow.v), p, dt, tol=self.tol)
            ok = self.inside(q)
            p[ok] = q[ok]
            self.pos[live] = p
            rows, cols = np.nonzero(live)
            self.alive[rows[~ok], cols[~ok]] = False
        self.pos = np.roll(self.pos, 1, axis=1)
        self.exists = np.roll(self.exists, 1, axis=1)
        self.alive = np.roll(self.alive, 1, axis=1)
        self.pos[:, 0] = self.origins
        self.exists[:, 0] = True
        self.alive[:, 0] = True
        self.steps += 1
        return self


def advect(particles: ParticleGrid, avg_flow: FlowMap) -> ParticleGrid:
    return particles.advect(avg_flow)


def advect_points(points, flow: FlowMap, steps: int = 1, dt: float = 1.0, tol: float = 1e-4) -> np.ndarray:
    """Positions of free particles after ``steps`` unit steps (no freezing)."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    f = flow_sampler(flow.u, flow.v)
    for _ in range(steps):
        p = rkf45(f, p, dt, tol=tol)
    return p


@dataclass(frozen=True)
class Streakline:
    origin: tuple[float, float]
    points: np.ndarray  # (k, 2), newest particle first


def collect_streaklines(particles: ParticleGrid) -> list[Streakline]:
    """One streakline per origin having at least two live particles."""
    out = []
    live = particles.alive & particles.exists
    counts = live.sum(axis=1)
    for n in np.flatnonzero(counts >= 2):
        pts = particles.pos[n][live[n]]
        out.append(Streakline(tuple(particles.origins[n]), pts.copy()))
    return out


@dataclass(frozen=True)
class StreakFlow:
    flow: FlowMap
    n_samples: int = 0
    insufficient: bool = False


def _fit_dense(x, y, du, dv, width, height, levels, min_samples=4) -> StreakFlow:
    if x.size < min_samples:
        log.debug("only %d samples, returning flagged zero map", x.size)
        return StreakFlow(FlowMap.zeros(width, height), int(x.size), True)
    extent = (max(width - 1, 1e-9), max(height - 1, 1e-9))
    x = np.clip(x, 0, extent[0])
    y = np.clip(y, 0, extent[1])
    su, sv = bspline.fit(bspline.ScatteredSamples(x, y, np.column_stack([du, dv]), extent), levels)
    return StreakFlow(FlowMap(su.grid(width, height), sv.grid(width, height)), int(x.size))


def streak_samples(streaklines) -> np.ndarray:
    """``(n, 4)`` rows ``(x, y, dx, dy)``: each particle position and the
    displacement to the next-older particle of the same streakline."""
    rows = [np.hstack([s.points[:-1], s.points[1:] - s.points[:-1]]) for s in streaklines if len(s.points) >= 2]
    return np.vstack(rows) if rows else np.zeros((0, 4))


def streak_flow(streaklines, width: int, height: int, levels: int = 5) -> StreakFlow:
    s = streak_samples(streaklines)
    return _fit_dense(s[:, 0], s[:, 1], s[:, 2], s[:, 3], width, height, levels)


def interpolate_sparse(samples, width: int, height: int, levels: int = 5) -> StreakFlow:
    """Dense map from ``(x, y, u, v)`` rows of one fine-to-coarse level."""
    s = np.asarray(samples, dtype=np.float64).reshape(-1, 4)
    return _fit_dense(s[:, 0], s[:, 1], s[:, 2], s[:, 3], width, height, levels, min_samples=1)
