"""Motion segmentation of the flow derived from long-range trajectories."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt

from . import bspline
from .evaluation import resample
from .flow_io import FlowMap


@dataclass
class MaskedFlow:
    flow: FlowMap
    mask: np.ndarray  # True where the derived flow is defined


def traj_to_flow(trajectories, width: int, height: int, *, radius: float = 4.3, levels: int = 5,
                 spacing: float = 1.0) -> MaskedFlow:
    """Dense unit-direction flow from trajectory segments.

    Each trajectory is resampled at about ``spacing`` px; every segment
    contributes its direction at its midpoint.  The samples are densified with
    the B-spline fit, and pixels farther than ``radius`` from every midpoint are
    masked.
    """
    mids, dirs = [], []
    for t in trajectories:
        p = np.asarray(t, dtype=np.float64).reshape(-1, 2)
        if len(p) < 2:
            continue
        length = float(np.hypot(*np.diff(p, axis=0).T).sum())
        if length <= 0:
            continue
        q = resample(p, max(2, int(np.ceil(length / spacing)) + 1))
        d = np.diff(q, axis=0)
        n = np.hypot(d[:, 0], d[:, 1])
        ok = n > 0
        mids.append(0.5 * (q[1:] + q[:-1])[ok])
        dirs.append(d[ok] / n[ok, None])
    if not mids:
        return MaskedFlow(FlowMap.zeros(width, height), np.zeros((height, width), dtype=bool))
    mids, dirs = np.vstack(mids), np.vstack(dirs)
    inside = (mids[:, 0] >= 0) & (mids[:, 0] <= width - 1) & (mids[:, 1] >= 0) & (mids[:, 1] <= height - 1)
    mids, dirs = mids[inside], dirs[inside]
    if not len(mids):
        return MaskedFlow(FlowMap.zeros(width, height), np.zeros((height, width), dtype=bool))
    stamp = np.ones((height, width), dtype=bool)
    stamp[np.rint(mids[:, 1]).astype(int), np.rint(mids[:, 0]).astype(int)] = False
    mask = distance_transform_edt(stamp) <= radius
    extent = (max(width - 1, 1e-9), max(height - 1, 1e-9))
    su, sv = bspline.fit(bspline.ScatteredSamples(mids[:, 0], mids[:, 1], dirs, extent), levels)
    u = np.where(mask, su.grid(width, height), 0.0)
    v = np.where(mask, sv.grid(width, height), 0.0)
    return MaskedFlow(FlowMap(u, v), mask)


def segment(flow: FlowMap, mask, cos_thresh: float = 0.85) -> np.ndarray:
    """Label map of 8-connected regions of coherent direction.

    Neighbouring valid pixels join when the cosine of the angle between their
    vectors is at least ``cos_thresh``.  Labels run from 1; masked pixels are 0.
    """
    mask = np.asarray(mask, dtype=bool)
    H, W = mask.shape
    mag = np.hypot(flow.u, flow.v)
    valid = mask & (mag > 0)
    ux = np.where(valid, flow.u / np.where(mag > 0, mag, 1.0), 0.0)
    uy = np.where(valid, flow.v / np.where(mag > 0, mag, 1.0), 0.0)
    parent = np.arange(H * W)

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    idx = np.arange(H * W).reshape(H, W)
    for dy, dx in ((0, 1), (1, 0), (1, 1), (1, -1)):
        y0, y1 = 0, H - dy
        x0, x1 = max(0, -dx), W - max(0, dx)
        a = (slice(y0, y1), slice(x0, x1))
        b = (slice(y0 + dy, y1 + dy), slice(x0 + dx, x1 + dx))
        ok = valid[a] & valid[b] & (ux[a] * ux[b] + uy[a] * uy[b] >= cos_thresh)
        for p, q in zip(idx[a][ok], idx[b][ok]):
            rp, rq = find(p), find(q)
            if rp != rq:
                parent[max(rp, rq)] = min(rp, rq)
    labels = np.zeros(H * W, dtype=np.int64)
    flat_valid = valid.ravel()
    roots = np.array([find(i) for i in np.flatnonzero(flat_valid)], dtype=np.int64)
    if roots.size:
        _, lab = np.unique(roots, return_inverse=True)
        labels[flat_valid] = lab + 1
    return labels.reshape(H, W)


def score_segmentation(labels, gt_boxes) -> tuple[int, int, int]:
    """``(correct, incorrect, missed)`` for boxes ``(x0, y0, x1, y1)`` (inclusive pixels).

    A box is missed when under 10% of its pixels are labelled.  Otherwise its
    dominant label must cover at least half of its labelled pixels, be owned
    by this box (the box holding most of that label's pixels), and the box
    must not be split across three or more labels with a significant share
    each; failing any of these makes it incorrect.
    """
    labels = np.asarray(labels)
    boxes = [tuple(int(v) for v in b) for b in gt_boxes]
    n_labels = int(labels.max()) if labels.size else 0
    counts = np.zeros((len(boxes), n_labels + 1), dtype=np.int64)
    for k, (x0, y0, x1, y1) in enumerate(boxes):
        counts[k] = np.bincount(labels[y0:y1 + 1, x0:x1 + 1].ravel(), minlength=n_labels + 1)
    owner = counts[:, 1:].argmax(axis=0) if boxes and n_labels else np.zeros(0, dtype=int)
    correct = incorrect = missed = 0
    for k, (x0, y0, x1, y1) in enumerate(boxes):
        area = (x1 - x0 + 1) * (y1 - y0 + 1)
        on = counts[k, 1:]
        total = int(on.sum())
        if total < 0.1 * area:
            missed += 1
            continue
        top = int(on.argmax())
        split = int((on >= 0.1 * total).sum()) >= 3
        if on[top] >= 0.5 * total and owner[top] == k and not split:
            correct += 1
        else:
            incorrect += 1
    return correct, incorrect, missed


def scores_to_json(score) -> str:
    c, i, m = score
    return json.dumps({"correct": c, "incorrect": i, "missed": m})
