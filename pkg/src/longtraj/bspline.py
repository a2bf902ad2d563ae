"""Multilevel cubic B-spline approximation of scattered data.

Each level owns a uniform control lattice with twice the cells of the level
below and fits the residual left by the coarser levels, so the composite
surface refines from a smooth global trend to local detail.  The per-level fit
is a least-squares solve with a small bending-energy penalty on the control
lattice; the penalty vanishes on affine lattices, which keeps planes (and
constants) exact.  A much weaker membrane term settles whatever the data
leave free, so a lone sample yields a constant surface.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import factorized

from .errors import EmptyInput, OutOfDomain


def _basis(t):
    """Uniform cubic B-spline weights for local parameter ``t`` in [0, 1]."""
    t = np.asarray(t, dtype=np.float64)
    t2, t3 = t * t, t * t * t
    return np.stack([(1 - t) ** 3 / 6.0,
                     (3 * t3 - 6 * t2 + 4) / 6.0,
                     (-3 * t3 + 3 * t2 + 3 * t + 1) / 6.0,
                     t3 / 6.0], axis=-1)


def _locate(s, cells):
    i = np.clip(np.floor(s).astype(np.int64), 0, cells - 1)
    return i, s - i


def _basis_matrix(coords, extent, cells):
    """Dense ``(len(coords), cells + 3)`` matrix of 1-D basis values."""
    s = np.asarray(coords, dtype=np.float64) * (cells / extent if extent > 0 else 0.0)
    i, t = _locate(s, cells)
    out = np.zeros((s.size, cells + 3))
    w = _basis(t)
    rows = np.arange(s.size)
    for k in range(4):
        out[rows, i + k] = w[:, k]
    return out


@dataclass
class ScatteredSamples:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    extent: tuple[float, float]

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64).ravel()
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        self.z = np.asarray(self.z, dtype=np.float64)
        if self.z.ndim == 1:
            self.z = self.z[:, None]
        if not (self.x.size == self.y.size == self.z.shape[0]):
            raise ValueError("x, y, z differ in length")
        xmax, ymax = self.extent
        if np.any(self.x < 0) or np.any(self.x > xmax) or np.any(self.y < 0) or np.any(self.y > ymax):
            raise OutOfDomain("sample outside extent")
        if not np.all(np.isfinite(self.z)):
            raise ValueError("non-finite sample values")


@dataclass
class SplineSurface:
    """Sum of cubic tensor-product B-spline levels over ``[0, xmax] x [0, ymax]``."""

    extent: tuple[float, float]
    lattices: list = field(default_factory=list)
    degree: int = 3

    @property
    def levels(self) -> int:
        return len(self.lattices)

    def _check(self, x, y):
        xmax, ymax = self.extent
        tol = 1e-9 * max(1.0, xmax, ymax)
        if np.any(x < -tol) or np.any(x > xmax + tol) or np.any(y < -tol) or np.any(y > ymax + tol):
            raise OutOfDomain(f"point outside [0, {xmax}] x [0, {ymax}]")

    def __call__(self, x, y, levels: int | None = None):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self._check(x, y)
        shape = np.broadcast_shapes(x.shape, y.shape)
        xb = np.broadcast_to(x, shape).ravel()
        yb = np.broadcast_to(y, shape).ravel()
        out = np.zeros(xb.size)
        xmax, ymax = self.extent
        for lat in self.lattices[:levels]:
            my, mx = lat.shape[0] - 3, lat.shape[1] - 3
            i, tx = _locate(xb * (mx / xmax if xmax > 0 else 0.0), mx)
            j, ty = _locate(yb * (my / ymax if ymax > 0 else 0.0), my)
            bx, by = _basis(tx), _basis(ty)
            for a in range(4):
                for b in range(4):
                    out += by[:, a] * bx[:, b] * lat[j + a, i + b]
        return out.reshape(shape) if shape else float(out[0])

    def grid(self, width: int, height: int) -> np.ndarray:
        """Evaluate at every integer pixel ``(x, y)``, returning ``(height, width)``."""
        xmax, ymax = self.extent
        self._check(np.array([width - 1.0]), np.array([height - 1.0]))
        out = np.zeros((height, width))
        for lat in self.lattices:
            my, mx = lat.shape[0] - 3, lat.shape[1] - 3
            bx = _basis_matrix(np.arange(width), xmax, mx)
            by = _basis_matrix(np.arange(height), ymax, my)
            out += by @ lat @ bx.T
        return out


def _design(x, y, extent, cells):
    xmax, ymax = extent
    i, tx = _locate(x * (cells / xmax if xmax > 0 else 0.0), cells)
    j, ty = _locate(y * (cells / ymax if ymax > 0 else 0.0), cells)
    bx, by = _basis(tx), _basis(ty)
    side = cells + 3
    rows = np.repeat(np.arange(x.size), 16)
    cols = ((j[:, None, None] + np.arange(4)[None, :, None]) * side
            + (i[:, None, None] + np.arange(4)[None, None, :])).reshape(-1)
    vals = (by[:, :, None] * bx[:, None, :]).reshape(-1)
    return sp.csr_matrix((vals, (rows, cols)), shape=(x.size, side * side))


def _bending_penalty(side):
    """Sum of squared second differences (xx, yy, 2*xy) on a ``side x side`` lattice."""
    eye = sp.identity(side, format="csr")
    d2 = sp.diags([1.0, -2.0, 1.0], [0, 1, 2], shape=(side - 2, side))
    d1 = sp.diags([-1.0, 1.0], [0, 1], shape=(side - 1, side))
    dxx = sp.kron(eye, d2)
    dyy = sp.kron(d2, eye)
    dxy = sp.kron(d1, d1)
    return (dxx.T @ dxx + dyy.T @ dyy + 2.0 * dxy.T @ dxy).tocsc()


def _membrane_penalty(side):
    eye = sp.identity(side, format="csr")
    d1 = sp.diags([-1.0, 1.0], [0, 1], shape=(side - 1, side))
    dx = sp.kron(eye, d1)
    dy = sp.kron(d1, eye)
    return (dx.T @ dx + dy.T @ dy).tocsc()


def fit(samples: ScatteredSamples, levels: int = 5, base_cells: int = 1,
        smoothing: float = 1e-3) -> SplineSurface | list[SplineSurface]:
    """Hierarchical least-squares B-spline fit.

    ``base_cells=1`` gives the 4x4 base control lattice; level ``l`` has
    ``base_cells * 2**(l-1)`` cells per axis.  ``smoothing`` scales the bending
    penalty relative to the mean diagonal of the normal matrix.  When
    ``samples.z`` has several columns one surface per column is returned.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if samples.x.size == 0:
        raise EmptyInput("no samples to fit")
    ncomp = samples.z.shape[1]
    surfaces = [SplineSurface(tuple(samples.extent)) for _ in range(ncomp)]
    resid = samples.z.copy()
    for level in range(levels):
        cells = base_cells * 2 ** level
        side = cells + 3
        A = _design(samples.x, samples.y, samples.extent, cells)
        N = (A.T @ A).tocsc()
        scale = N.diagonal().mean()
        # the membrane term only pins directions no sample constrains (constants win)
        M = N + smoothing * scale * _bending_penalty(side) + 1e-11 * scale * _membrane_penalty(side)
        solve = factorized(M.tocsc())
        rhs = A.T @ resid
        for c in range(ncomp):
            coef = solve(np.ascontiguousarray(rhs[:, c]))
            surfaces[c].lattices.append(coef.reshape(side, side))
            resid[:, c] -= A @ coef
    return surfaces[0] if ncomp == 1 else surfaces


def fit_points(x, y, z, extent, levels: int = 5, **kw):
    return fit(ScatteredSamples(x, y, z, extent), levels, **kw)
