"""Command line entry point: ``run``, ``eval`` and ``segment``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation as ev
from .config import RunConfig, load_config
from .errors import LongTrajError
from .flow_io import write_pgm
from .linking import trajectories_from_json
from .pipeline import run_pipeline, run_sweep
from .segmentation import score_segmentation, segment, traj_to_flow


def _cmd_run(args) -> int:
    cfg = load_config(args.config, seed=args.seed, out=args.out) if args.config else RunConfig(
        **{k: v for k, v in (("seed", args.seed), ("out", args.out)) if v is not None})
    if args.sweep:
        results = run_sweep(cfg, args.sweep)
        for value, res in results:
            print(f"{args.sweep}={value}: BP={res.counts['BP']} AP={res.counts['AP']} AL={res.counts['AL']}")
    else:
        res = run_pipeline(cfg)
        print(f"BP={res.counts['BP']} AP={res.counts['AP']} AL={res.counts['AL']} -> {res.out}")
        if res.segmentation is not None:
            print("segmentation (correct, incorrect, missed) =", res.segmentation)
    return 0


def _diag(args, pts) -> float:
    if args.width and args.height:
        return ev.frame_diagonal(args.width, args.height)
    allp = np.vstack(pts)
    span = allp.max(axis=0) - allp.min(axis=0)
    return float(max(np.hypot(*span), 1.0))


def _cmd_eval(args) -> int:
    extracted = trajectories_from_json(Path(args.extracted).read_text())
    annotated = trajectories_from_json(Path(args.annotated).read_text())
    e = ev.evaluate(extracted, annotated, args.metric, args.reg, diag=_diag(args, extracted + annotated),
                    eps=args.eps)
    rep = e.report()
    print(json.dumps({"pairs": rep.pairs, "distances": rep.distances, "threshold": rep.threshold,
                      "fp_rate": rep.fp_rate, "fn_rate": rep.fn_rate,
                      "accumulated_error": rep.accumulated_error}))
    if args.out:
        ev.write_curve_csv(args.out, e.curve)
    return 0


def _cmd_segment(args) -> int:
    run = Path(args.run)
    manifest = json.loads((run / "manifest.json").read_text())
    cfg = RunConfig(**{k: (float("nan") if k == "hi" and v is None else v) for k, v in manifest["config"].items()})
    from .pipeline import FlowSource
    src = FlowSource(cfg)
    trajs = trajectories_from_json((run / "trajectories.json").read_text())
    boxes = json.loads(Path(args.boxes).read_text())
    mf = traj_to_flow(trajs, src.width, src.height, radius=cfg.seg_radius, levels=cfg.spline_levels)
    labels = segment(mf.flow, mf.mask, args.cos_thresh if args.cos_thresh is not None else cfg.cos_thresh)
    write_pgm(run / "labels.pgm", labels.astype(np.uint16))
    c, i, m = score_segmentation(labels, boxes)
    print(json.dumps({"labels": int(labels.max()), "correct": c, "incorrect": i, "missed": m}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="longtraj", description="Long-range motion trajectories from dense flow.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the pipeline")
    r.add_argument("--config")
    r.add_argument("--sweep", choices=("minibatch", "memory"))
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.set_defaults(func=_cmd_run)
    e = sub.add_parser("eval", help="match extracted trajectories to annotated ones")
    e.add_argument("--extracted", required=True)
    e.add_argument("--annotated", required=True)
    e.add_argument("--metric", default="dtw", choices=ev.METRICS)
    e.add_argument("--reg", default="median_rls", choices=ev.REGULARISERS)
    e.add_argument("--eps", type=float, default=0.05)
    e.add_argument("--width", type=int)
    e.add_argument("--height", type=int)
    e.add_argument("--out", help="write the FP/error curve CSV here")
    e.set_defaults(func=_cmd_eval)
    s = sub.add_parser("segment", help="segment the flow derived from a run's trajectories")
    s.add_argument("--run", required=True)
    s.add_argument("--boxes", required=True)
    s.add_argument("--cos-thresh", type=float)
    s.set_defaults(func=_cmd_segment)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("LONGTRAJ_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except LongTrajError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
