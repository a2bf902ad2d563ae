"""Flat ``key = value`` run configuration."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

SWEEPS = {
    "minibatch": {"values": (2, 4, 6, 8, 10), "fixed": {"memory": 10}},
    "memory": {"values": (3, 6, 9, 12, 15, 20), "fixed": {"minibatch": 5}},
}


@dataclass(frozen=True)
class RunConfig:
    # flow source: "synthetic" or a directory of .flo files
    source: str = "synthetic"
    scenario: str = "two_lane"
    width: int = 128
    height: int = 96
    frames: int = 30
    speed: float = 1.0
    lane_gap: float = 16.0
    noise: float = 0.02
    out: str = "run"
    seed: int = 0
    # sampling and filtering
    step: int = 4
    K: int = 13
    lo: float = 0.05
    hi: float = math.nan  # nan: half the smaller frame side
    outlier: str = "ours"
    # cells
    cell: int = 15
    neighborhood: int = 3
    t_c: float = 0.01
    minibatch: int = 5
    memory: int = 3
    level: str = "groups"
    # advection and fields
    particle_stride: int = 4
    spline_levels: int = 5
    # streamlines
    d_sep: float = 4.3
    d_rat: float = 1.3
    # linking
    d_thr: float = 45.0
    theta_dir: float = 42.0
    delta_dif: float = 40.0
    alpha_decay: float = 0.9
    alpha_mix: float = 0.5
    sigma_a: float = 2.0
    sigma_m: float = 2.0
    sigma_p: float = 2.0
    z_norm: str = "difference"
    terminal_p: float = 0.05
    entropy_thresh: float = 2.5
    # evaluation and segmentation
    annotations: str = ""
    boxes: str = ""
    regularisation: str = "median_rls"
    lcs_eps: float = 0.05
    cos_thresh: float = 0.85
    seg_radius: float = 4.3
    sweep_values: str = ""  # comma separated subset for sweeps

    def __post_init__(self):
        positive = ("width", "height", "frames", "step", "K", "cell", "neighborhood", "minibatch",
                    "memory", "particle_stride", "spline_levels")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if self.K % 2 == 0:
            raise ConfigError("K", "median kernel size must be odd")
        if self.neighborhood % 2 == 0:
            raise ConfigError("neighborhood", "must be odd")
        if not 0 < self.t_c < 1:
            raise ConfigError("t_c", "must lie in (0, 1)")
        if self.d_sep <= 0:
            raise ConfigError("d_sep", "must be > 0")
        if self.d_rat < 1:
            raise ConfigError("d_rat", "must be >= 1")
        if self.cell > min(self.width, self.height):
            raise ConfigError("cell", "cell larger than the frame")
        if self.minibatch > self.frames:
            raise ConfigError("minibatch", "mini-batch longer than the sequence")
        if self.level not in ("vectors", "groups", "representative"):
            raise ConfigError("level", "must be vectors, groups or representative")
        if self.outlier not in ("ours", "std3", "zscore", "mzscore"):
            raise ConfigError("outlier", "unknown outlier method")
        if not 0 < self.terminal_p < 1:
            raise ConfigError("terminal_p", "must lie in (0, 1)")

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if math.isnan(d["hi"]):
            d["hi"] = None
        return d

    def dumps(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            lines.append(f"{k} = {'nan' if v is None else v}")
        return "\n".join(lines) + "\n"


def _convert(name, typ, text):
    try:
        if typ in (int, "int"):
            return int(text)
        if typ in (float, "float"):
            return float(text)
    except ValueError:
        raise ConfigError(name, f"cannot parse {text!r} as {typ}") from None
    return text


def parse_config(text: str, **overrides) -> RunConfig:
    """Parse ``key = value`` lines (``#`` starts a comment); unknown keys are errors."""
    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}", f"expected key = value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(key, "unknown configuration key")
        values[key] = _convert(key, types[key], val)
    for key, val in overrides.items():
        if val is None:
            continue
        if key not in types:
            raise ConfigError(key, "unknown configuration key")
        values[key] = val
    return RunConfig(**values)


def load_config(path, **overrides) -> RunConfig:
    return parse_config(Path(path).read_text(), **overrides)


def sweep_configs(cfg: RunConfig, which: str):
    """``(value, config)`` pairs of a parameter sweep."""
    if which not in SWEEPS:
        raise ConfigError("sweep", f"unknown sweep {which!r}")
    grid = SWEEPS[which]
    values = grid["values"]
    if cfg.sweep_values:
        try:
            values = tuple(int(v) for v in cfg.sweep_values.split(","))
        except ValueError:
            raise ConfigError("sweep_values", "expected comma separated integers") from None
    out = []
    for v in values:
        kw = dict(grid["fixed"])
        kw[which] = v
        kw["out"] = str(Path(cfg.out) / f"{which}_{v}")
        out.append((v, cfg.replace(**kw)))
    return out
