"""Synthetic fixtures shared by several test modules."""
from __future__ import annotations

import itertools

import numpy as np

from longtraj.linking import Track
from longtraj.trw import PairwiseMRF


def split_tracks(seed=0, n=20, spacing=24):
    """``n`` straight or curved chains, each cut into 3 fragments with 10-30 px gaps.

    Every third chain runs right to left.  Returns ``(windows, chain_of)``
    where ``windows[k][j]`` is fragment ``k`` of some chain and
    ``chain_of[k][j]`` names that chain.
    """
    rng = np.random.default_rng(seed)
    windows, chain_of = [[], [], []], [[], [], []]
    for i in range(n):
        y0 = 20 + i * spacing
        sgn = -1 if i % 3 == 2 else 1
        R = [np.inf, 400.0, -400.0, 250.0, -250.0][i % 5]
        speed = rng.uniform(0.8, 1.6)
        lens = rng.integers(50, 70, 3)
        gaps = rng.uniform(10, 30, 2)
        starts = [0, lens[0] + gaps[0], lens[0] + gaps[0] + lens[1] + gaps[1]]
        for k in range(3):
            s = starts[k] + np.arange(lens[k]) * 1.0
            if np.isinf(R):
                th, x, y = np.zeros_like(s), s, np.zeros_like(s)
            else:
                th = s / R
                x, y = R * np.sin(th), R * (1 - np.cos(th))
            x = 40 + x if sgn > 0 else 600 - x
            pts = np.column_stack([x, y0 + y])
            tang = np.column_stack([sgn * np.cos(th), np.sin(th)])
            windows[k].append(Track(pts, speed * tang, window=k))
            chain_of[k].append(i)
    return windows, chain_of


def link_outcome(windows, chain_of, trajectories):
    """``(correct links, wrong links, total true links)`` of a linking result."""
    where = {id(t): (k, j) for k in range(len(windows)) for j, t in enumerate(windows[k])}
    ok = wrong = 0
    for tr in trajectories:
        for a, b in zip(tr.parts[:-1], tr.parts[1:]):
            ka, ja = where[id(a)]
            kb, jb = where[id(b)]
            if chain_of[ka][ja] == chain_of[kb][jb]:
                ok += 1
            else:
                wrong += 1
    total = sum(len(w) for w in windows[1:])
    return ok, wrong, total


def linking_mrf(rng, n=4, pool=3):
    """Random graph shaped like a linking problem: terminal state plus up to
    two of ``pool`` shared candidates per node, hard exclusion on shared
    candidates and small coherence terms elsewhere."""
    cands = [sorted(rng.choice(pool, size=int(rng.integers(0, 3)), replace=False)) for _ in range(n)]
    unary = [np.concatenate([[3.0], rng.uniform(0, 5, len(c))]) for c in cands]
    pair = {}
    for i, j in itertools.combinations(range(n), 2):
        m = np.zeros((len(cands[i]) + 1, len(cands[j]) + 1))
        shared = False
        for a, ca in enumerate(cands[i]):
            for b, cb in enumerate(cands[j]):
                if ca == cb:
                    m[a + 1, b + 1] = 1e6
                    shared = True
                else:
                    m[a + 1, b + 1] = rng.uniform(0, 0.1)
        if shared or rng.random() < 0.5:
            pair[(i, j)] = m
    return PairwiseMRF(unary, pair)


def as_lists(mrf):
    return [u.tolist() for u in mrf.unary], {k: v.tolist() for k, v in mrf.pair.items()}
