"""Runge-Kutta-Fehlberg 4(5) integration of autonomous 2-D fields, plus the
bilinear sampler the integrators share."""
from __future__ import annotations

import numpy as np
from scipy.ndimage import map_coordinates

# Fehlberg tableau
_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_B4 = np.array([25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0])
_B5 = np.array([16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])


def bilinear(field: np.ndarray, x, y) -> np.ndarray:
    """Sample an ``(H, W)`` array at sub-pixel ``(x, y)``; edges are clamped."""
    coords = np.vstack([np.ravel(y), np.ravel(x)])
    return map_coordinates(field, coords, order=1, mode="nearest").reshape(np.shape(x))


def flow_sampler(u: np.ndarray, v: np.ndarray):
    """Right-hand side ``f(p) -> velocity`` for points ``p`` of shape ``(n, 2)``."""
    def f(p):
        return np.column_stack([bilinear(u, p[:, 0], p[:, 1]), bilinear(v, p[:, 0], p[:, 1])])
    return f


def rkf45_step(f, p: np.ndarray, h: float):
    """One Fehlberg step. Returns the 4th-order update and a per-row error estimate."""
    k = []
    for i in range(6):
        q = p.copy()
        for a, kj in zip(_A[i], k):
            q += h * a * kj
        k.append(f(q))
    k = np.stack(k)
    y4 = p + h * np.tensordot(_B4, k, axes=1)
    err = h * np.abs(np.tensordot(_B5 - _B4, k, axes=1)).max(axis=-1)
    return y4, err


def rkf45(f, p0, t_end: float = 1.0, tol: float = 1e-4, h0: float | None = None,
          h_min: float = 1e-6, max_steps: int = 10000) -> np.ndarray:
    """Integrate ``dp/dt = f(p)`` from 0 to ``t_end`` with adaptive steps.

    All rows share the step size; the step is accepted when the largest
    row error is within ``tol``.
    """
    p = np.array(p0, dtype=np.float64, copy=True)
    if p.size == 0 or t_end == 0:
        return p
    t = 0.0
    h = t_end if h0 is None else h0
    for _ in range(max_steps):
        if t >= t_end:
            break
        h = min(h, t_end - t)
        y, err = rkf45_step(f, p, h)
        emax = float(err.max()) if err.size else 0.0
        if emax <= tol or h <= h_min:
            p, t = y, t + h
        if emax == 0:
            h *= 2.0
        else:
            h *= min(2.0, max(0.1, 0.84 * (tol / emax) ** 0.25))
        h = max(h, h_min)
    return p
