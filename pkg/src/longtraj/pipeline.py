"""End-to-end run: frames -> filtered vectors -> cells -> advection and streak
flow -> per-window field and streamlines -> linking and pruning -> outputs."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import evaluation as ev
from .advection import ParticleGrid, collect_streaklines, streak_flow
from .cell_grid import FineToCoarse, VideoVolumeConfig, cell_entropy, distribute, fine_to_coarse, quantise_and_cluster
from .config import RunConfig, sweep_configs
from .errors import ConfigError
from .flow_io import FlowMap, average_flow, read_flo, save_flo, synth_field, two_lane_bands, write_pgm
from .linking import LinkParams, Track, Trajectory, link_windows, prune, track_from_points, trajectories_to_json
from .sampling import filter_frame
from .segmentation import score_segmentation, scores_to_json, segment, traj_to_flow
from .streamlines import build_combined_field, seed_and_diffuse, streamlines_to_json

log = logging.getLogger(__name__)


class FlowSource:
    """Sequence of flow maps, synthetic or read from a directory of ``.flo`` files."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        if cfg.source == "synthetic":
            self.files = None
            self.width, self.height, self.frames = cfg.width, cfg.height, cfg.frames
            if cfg.scenario not in ("two_lane", "zero", "uniform", "vortex"):
                raise ConfigError("scenario", f"unknown scenario {cfg.scenario!r}")
        else:
            d = Path(cfg.source)
            if not d.is_dir():
                raise ConfigError("source", f"{cfg.source!r} is not a directory")
            self.files = sorted(d.glob("*.flo"))
            if not self.files:
                raise ConfigError("source", f"no .flo files in {cfg.source!r}")
            first = read_flo(self.files[0])
            self.width, self.height = first.width, first.height
            self.frames = min(len(self.files), cfg.frames) if cfg.frames else len(self.files)

    def base(self) -> FlowMap:
        c = self.cfg
        if c.scenario == "two_lane":
            return synth_field("two_lane", c.width, c.height, gap=c.lane_gap, speed=c.speed)
        if c.scenario == "zero":
            return FlowMap.zeros(c.width, c.height)
        if c.scenario == "uniform":
            return synth_field("uniform", c.width, c.height, a=c.speed, b=0.0)
        return synth_field("vortex", c.width, c.height, omega=c.speed / max(c.width, c.height))

    def __getitem__(self, t: int) -> FlowMap:
        if self.files is not None:
            return read_flo(self.files[t])
        f = self.base()
        if self.cfg.noise <= 0 or self.cfg.scenario == "zero":
            return f
        rng = np.random.default_rng([self.cfg.seed, 7919, t])
        return FlowMap(f.u + rng.normal(0, self.cfg.noise, f.shape), f.v + rng.normal(0, self.cfg.noise, f.shape))

    def ground_truth(self):
        """Lane centrelines and lane boxes of the two-lane scenario."""
        c = self.cfg
        (t0, t1), (b0, b1) = two_lane_bands(c.height, c.lane_gap)
        xs = np.arange(c.width, dtype=float)
        top = np.column_stack([xs, np.full_like(xs, (t0 + t1 - 1) / 2)])
        bottom = np.column_stack([xs[::-1], np.full_like(xs, (b0 + b1 - 1) / 2)])
        boxes = [[0, t0, c.width - 1, t1 - 1], [0, b0, c.width - 1, b1 - 1]]
        return [top, bottom], boxes


def link_params(cfg: RunConfig) -> LinkParams:
    return LinkParams(d_thr=cfg.d_thr, theta_dir=cfg.theta_dir, delta_dif=cfg.delta_dif,
                      alpha_decay=cfg.alpha_decay, alpha_mix=cfg.alpha_mix, sigma_a=cfg.sigma_a,
                      sigma_m=cfg.sigma_m, sigma_p=cfg.sigma_p, z_norm=cfg.z_norm,
                      terminal_cost=-math.log(cfg.terminal_p), entropy_thresh=cfg.entropy_thresh)


@dataclass
class WindowResult:
    index: int
    tracks: list
    n_lines: int
    streak: FlowMap
    entropy: np.ndarray


@dataclass
class RunResult:
    config: RunConfig
    out: Path
    trajectories: list = field(default_factory=list)
    windows: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)
    evaluations: dict = field(default_factory=dict)
    segmentation: tuple | None = None
    labels: np.ndarray | None = None


def _batches(frames: int, size: int):
    return [(s, min(s + size, frames)) for s in range(0, frames, size)]


def _save_window(out: Path, w: WindowResult, particles: ParticleGrid, lines) -> None:
    d = out / "windows"
    d.mkdir(parents=True, exist_ok=True)
    tracks = [{"points": t.points.tolist(), "v": t.v.tolist(), "t_start": t.t_start, "t_end": t.t_end}
              for t in w.tracks]
    (d / f"window_{w.index:03d}.json").write_text(json.dumps({"n_lines": w.n_lines, "tracks": tracks}))
    (d / f"streamlines_{w.index:03d}.json").write_text(streamlines_to_json(lines))
    np.save(d / f"streak_{w.index:03d}.npy", np.stack([w.streak.u, w.streak.v]))
    np.save(d / f"entropy_{w.index:03d}.npy", w.entropy)
    save_flo(d / f"streak_{w.index:03d}.flo", w.streak)
    np.savez(d / f"particles_{w.index:03d}.npz", pos=particles.pos, exists=particles.exists,
             alive=particles.alive, steps=particles.steps)


def _load_window(out: Path, index: int) -> WindowResult:
    d = out / "windows"
    data = json.loads((d / f"window_{index:03d}.json").read_text())
    tracks = [Track(t["points"], t["v"], t_start=t["t_start"], t_end=t["t_end"], window=index)
              for t in data["tracks"]]
    uv = np.load(d / f"streak_{index:03d}.npy")
    return WindowResult(index, tracks, data["n_lines"], FlowMap(uv[0], uv[1]),
                        np.load(d / f"entropy_{index:03d}.npy"))


def _restore_particles(out: Path, index: int, particles: ParticleGrid) -> None:
    z = np.load(out / "windows" / f"particles_{index:03d}.npz")
    particles.pos, particles.exists, particles.alive = z["pos"], z["exists"], z["alive"]
    particles.steps = int(z["steps"])


def _manifest_path(out: Path) -> Path:
    return out / "manifest.json"


def _read_manifest(out: Path, cfg: RunConfig):
    p = _manifest_path(out)
    if not p.exists():
        return []
    m = json.loads(p.read_text())
    if m.get("config") != cfg.to_dict():
        log.info("manifest belongs to a different configuration; starting over")
        return []
    return list(m.get("windows_done", []))


def _write_manifest(out: Path, cfg: RunConfig, done, complete=False) -> None:
    _manifest_path(out).write_text(json.dumps({"config": cfg.to_dict(), "windows_done": done,
                                               "complete": complete}, indent=1))


def run_pipeline(cfg: RunConfig, *, stop_after: int | None = None) -> RunResult:
    """Run the whole chain for one configuration and write its artifacts.

    Completed windows are recorded in ``manifest.json``; a later call with the
    same configuration resumes after the last completed window.  ``stop_after``
    interrupts the run after that many windows (for resumption tests).
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    src = FlowSource(cfg)
    W, H, T = src.width, src.height, src.frames
    vol = VideoVolumeConfig(W, H, T, cfg.cell, cfg.cell, min(cfg.minibatch, T), cfg.memory)
    hi = None if math.isnan(cfg.hi) else cfg.hi
    batches = _batches(T, cfg.minibatch)
    windows = [batches[i:i + cfg.memory] for i in range(0, len(batches), cfg.memory)]
    particles = ParticleGrid(W, H, stride=cfg.particle_stride, max_len=cfg.memory + 1)
    done = _read_manifest(out, cfg)
    results: list[WindowResult] = []
    for w in done:
        results.append(_load_window(out, w))
    if done:
        _restore_particles(out, done[-1], particles)
    log.info("%d windows, %d resumed", len(windows), len(done))
    for wi, wbatches in enumerate(windows):
        if wi in done:
            continue
        if stop_after is not None and len(done) >= stop_after:
            _write_manifest(out, cfg, done)
            return RunResult(cfg, out, windows=results)
        streaks, levels, entropies = [], [], []
        for b0, b1 in wbatches:
            batch = b0 // cfg.minibatch
            frames = [src[t] for t in range(b0, b1)]
            grid = distribute(_frame_vectors(frames, b0, cfg, hi), vol)
            quantise_and_cluster(grid, cfg.t_c, cfg.seed, batch)
            entropies.append(cell_entropy(grid, cfg.neighborhood))
            levels.append(fine_to_coarse(grid))
            particles.advect(average_flow(frames))
            streaks.append(streak_flow(collect_streaklines(particles), W, H, cfg.spline_levels).flow)
        samples = FineToCoarse.merge(levels).samples(cfg.level)
        fieldw = build_combined_field(streaks, samples, W, H, levels=cfg.spline_levels, lo=cfg.lo, hi=hi,
                                      method=cfg.outlier)
        lines = seed_and_diffuse(fieldw, cfg.d_sep, cfg.d_rat)
        avg_streak = average_flow(streaks)
        t0, t1 = wbatches[0][0] // cfg.minibatch, (wbatches[-1][0]) // cfg.minibatch
        tracks = [track_from_points(s.points, avg_streak, t_start=t0, t_end=t1, window=wi) for s in lines]
        kept = prune(tracks)
        res = WindowResult(wi, kept, len(lines), avg_streak, np.mean(entropies, axis=0))
        _save_window(out, res, particles, lines)
        results.append(res)
        done.append(wi)
        _write_manifest(out, cfg, done)
        log.info("window %d: %d streamlines, %d kept", wi, len(lines), len(kept))
    trajs = link_windows([r.tracks for r in results], [r.streak for r in results], link_params(cfg),
                         [r.entropy for r in results], (cfg.cell, cfg.cell), cfg.seed)
    counts = {"BP": sum(r.n_lines for r in results), "AP": sum(len(r.tracks) for r in results),
              "AL": len(trajs)}
    (out / "trajectories.json").write_text(trajectories_to_json(trajs))
    write_counts_csv(out / "counts.csv", [("run", counts["BP"], counts["AP"], counts["AL"])])
    result = RunResult(cfg, out, trajs, results, counts)
    _evaluate(result, src, W, H)
    _write_manifest(out, cfg, done, complete=True)
    return result


def _frame_vectors(frames, t0, cfg: RunConfig, hi):
    from .sampling import FlowVectors
    parts = [filter_frame(f, t0 + k, step=cfg.step, K=cfg.K, lo=cfg.lo, hi=hi, method=cfg.outlier)
             for k, f in enumerate(frames)]
    return FlowVectors.concat(parts)


def _load_points(path) -> list[np.ndarray]:
    from .linking import trajectories_from_json
    return trajectories_from_json(Path(path).read_text())


def _evaluate(result: RunResult, src: FlowSource, W: int, H: int) -> None:
    cfg, out = result.config, result.out
    annotated, boxes = None, None
    if cfg.annotations:
        annotated = _load_points(cfg.annotations)
    if cfg.boxes:
        boxes = json.loads(Path(cfg.boxes).read_text())
    if src.files is None and cfg.scenario == "two_lane":
        gt_lines, gt_boxes = src.ground_truth()
        annotated = annotated if annotated is not None else gt_lines
        boxes = boxes if boxes is not None else gt_boxes
        (out / "annotations.json").write_text(json.dumps([a.tolist() for a in gt_lines]))
        (out / "boxes.json").write_text(json.dumps(gt_boxes))
    extracted = [t.points for t in result.trajectories]
    if annotated and extracted:
        curves = out / "curves"
        curves.mkdir(exist_ok=True)
        for metric in ev.METRICS:
            e = ev.evaluate(extracted, annotated, metric, cfg.regularisation, diag=math.hypot(W, H),
                            eps=cfg.lcs_eps, seed=cfg.seed)
            result.evaluations[metric] = e
            ev.write_curve_csv(curves / f"{metric}_{cfg.regularisation}.csv", e.curve)
    if boxes is not None:
        mf = traj_to_flow(extracted, W, H, radius=cfg.seg_radius, levels=cfg.spline_levels)
        labels = segment(mf.flow, mf.mask, cfg.cos_thresh)
        result.labels = labels
        result.segmentation = score_segmentation(labels, boxes)
        write_pgm(out / "labels.pgm", labels.astype(np.uint16))
        (out / "segmentation.json").write_text(scores_to_json(result.segmentation))


def write_counts_csv(path, rows) -> None:
    """Rows of ``(param, BP, AP, AL)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["param", "BP", "AP", "AL"])
        for r in rows:
            w.writerow(r)


def emit_plots(results, out, param: str = "run") -> Path:
    """Counts summary CSV for one or several runs (curve CSVs are written per run)."""
    rows = []
    for value, res in results:
        rows.append((f"{param}={value}" if param != "run" else str(value),
                     res.counts["BP"], res.counts["AP"], res.counts["AL"]))
    path = Path(out) / "counts.csv"
    write_counts_csv(path, rows)
    return path


def run_sweep(cfg: RunConfig, which: str):
    results = []
    for value, sub in sweep_configs(cfg, which):
        results.append((value, run_pipeline(sub)))
    emit_plots(results, cfg.out, which)
    return results
