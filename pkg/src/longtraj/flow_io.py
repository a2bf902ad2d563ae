"""Dense flow maps: Middlebury ``.flo`` I/O, analytic test fields, averaging.

A :class:`FlowMap` stores the horizontal and vertical velocity components as
``(H, W)`` arrays indexed ``[row, col]``, i.e. ``u[y, x]``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BadMagic, DimensionMismatch, EmptyInput, NonFinite, Truncated

FLO_MAGIC = 202021.25
_HEADER = struct.Struct("<fii")


@dataclass(frozen=True, eq=False)
class FlowMap:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.ndim != 2 or u.shape != v.shape or u.size == 0:
            raise DimensionMismatch(f"u {u.shape} and v {v.shape} must be equal non-empty 2-D arrays")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)

    def __eq__(self, other):
        if not isinstance(other, FlowMap):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.u, other.u)
                and np.array_equal(self.v, other.v))

    @classmethod
    def zeros(cls, width: int, height: int) -> "FlowMap":
        return cls(np.zeros((height, width)), np.zeros((height, width)))


def parse_flo(data: bytes, strict: bool = False) -> FlowMap:
    """Decode a Middlebury flow file.

    Non-finite components are replaced by zero unless ``strict`` is set, in
    which case :class:`NonFinite` is raised.
    """
    if len(data) < _HEADER.size:
        raise Truncated(f"header needs {_HEADER.size} bytes, got {len(data)}")
    magic, width, height = _HEADER.unpack_from(data, 0)
    if magic != np.float32(FLO_MAGIC):
        raise BadMagic(f"sentinel {magic!r} != {FLO_MAGIC}")
    if width < 1 or height < 1:
        raise Truncated(f"invalid dimensions {width}x{height}")
    n = 2 * width * height
    payload = data[_HEADER.size:]
    if len(payload) < 4 * n:
        raise Truncated(f"payload has {len(payload)} bytes, header implies {4 * n}")
    vals = np.frombuffer(payload, dtype="<f4", count=n).reshape(height, width, 2)
    u = vals[..., 0].astype(np.float64)
    v = vals[..., 1].astype(np.float64)
    bad = ~(np.isfinite(u) & np.isfinite(v))
    if bad.any():
        if strict:
            raise NonFinite(f"{int(bad.sum())} non-finite vectors")
        u[bad] = 0.0
        v[bad] = 0.0
    return FlowMap(u, v)


def write_flo(flow: FlowMap) -> bytes:
    """Encode ``flow`` as Middlebury bytes (components rounded to float32)."""
    inter = np.empty((flow.height, flow.width, 2), dtype="<f4")
    inter[..., 0] = flow.u
    inter[..., 1] = flow.v
    return _HEADER.pack(FLO_MAGIC, flow.width, flow.height) + inter.tobytes()


def read_flo(path, strict: bool = False) -> FlowMap:
    return parse_flo(Path(path).read_bytes(), strict=strict)


def save_flo(path, flow: FlowMap) -> None:
    Path(path).write_bytes(write_flo(flow))


def synth_field(kind: str, width: int, height: int, **params) -> FlowMap:
    """Analytic flow field sampled at integer pixel coordinates.

    Kinds and parameters::

        uniform   a, b            (a, b) everywhere
        vortex    cx, cy, omega   (-omega (y - cy), omega (x - cx))
        saddle    cx, cy          (x - cx, -(y - cy))
        two_lane  gap, speed      top half (speed, 0), bottom half (-speed, 0),
                                  zero band of ``gap`` rows centred on H/2
    """
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    if kind == "uniform":
        u = np.full_like(x, float(params.get("a", 1.0)))
        v = np.full_like(x, float(params.get("b", 0.0)))
    elif kind == "vortex":
        cx = float(params.get("cx", (width - 1) / 2))
        cy = float(params.get("cy", (height - 1) / 2))
        omega = float(params.get("omega", 0.1))
        u = -omega * (y - cy)
        v = omega * (x - cx)
    elif kind == "saddle":
        cx = float(params.get("cx", (width - 1) / 2))
        cy = float(params.get("cy", (height - 1) / 2))
        u = x - cx
        v = -(y - cy)
    elif kind == "two_lane":
        gap = float(params.get("gap", 0.0))
        speed = float(params.get("speed", 1.0))
        mid = height / 2.0
        u = np.where(y < mid, speed, -speed)
        u[np.abs(y + 0.5 - mid) < gap / 2.0] = 0.0
        v = np.zeros_like(x)
    else:
        raise ValueError(f"unknown field kind {kind!r}")
    return FlowMap(u, v)


def two_lane_bands(height: int, gap: float) -> tuple[tuple[int, int], tuple[int, int]]:
    """Row ranges ``[start, stop)`` of the top and bottom lanes of ``two_lane``."""
    mid = height / 2.0
    rows = np.arange(height)
    band = np.abs(rows + 0.5 - mid) < gap / 2.0
    top = rows[(rows < mid) & ~band]
    bottom = rows[(rows >= mid) & ~band]
    return (int(top[0]), int(top[-1]) + 1), (int(bottom[0]), int(bottom[-1]) + 1)


def average_flow(maps: Sequence[FlowMap]) -> FlowMap:
    maps = list(maps)
    if not maps:
        raise EmptyInput("average_flow needs at least one map")
    shape = maps[0].shape
    for m in maps[1:]:
        if m.shape != shape:
            raise DimensionMismatch(f"{m.shape} != {shape}")
    if len(maps) == 1:
        return maps[0]
    u = np.mean(np.stack([m.u for m in maps]), axis=0)
    v = np.mean(np.stack([m.v for m in maps]), axis=0)
    return FlowMap(u, v)


# --- 8/16-bit binary PGM, used for masks and label maps -------------------

def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise ValueError("only binary (P5) PGM is supported")
    width, height, maxval = (int(t) for t in tokens[1:])
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    return np.frombuffer(data, dtype=dtype, count=width * height, offset=pos).reshape(height, width).copy()


def write_pgm(path, image: np.ndarray) -> None:
    image = np.asarray(image)
    maxval = int(image.max()) if image.size else 0
    if maxval < 256:
        body = image.astype(np.uint8).tobytes()
        maxval = 255
    else:
        body = image.astype(">u2").tobytes()
        maxval = 65535
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n{maxval}\n".encode()
    Path(path).write_bytes(header + body)
