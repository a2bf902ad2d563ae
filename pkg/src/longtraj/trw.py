"""Sequential tree-reweighted message passing (min-sum) for pairwise MRFs
with a variable number of states per node."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class PairwiseMRF:
    """Energy ``sum_i unary[i][x_i] + sum_(i,j) pair[(i,j)][x_i, x_j]`` with ``i < j``."""

    unary: list
    pair: dict = field(default_factory=dict)

    def __post_init__(self):
        self.unary = [np.asarray(u, dtype=np.float64) for u in self.unary]
        fixed = {}
        for (i, j), m in self.pair.items():
            m = np.asarray(m, dtype=np.float64)
            if i > j:
                i, j, m = j, i, m.T
            if i == j:
                raise ValueError("self edge")
            if m.shape != (self.unary[i].size, self.unary[j].size):
                raise ValueError(f"edge {(i, j)} has shape {m.shape}")
            fixed[(i, j)] = fixed.get((i, j), 0.0) + m
        self.pair = fixed

    def energy(self, labels) -> float:
        e = sum(float(u[x]) for u, x in zip(self.unary, labels))
        for (i, j), m in self.pair.items():
            e += float(m[labels[i], labels[j]])
        return e


def trws(mrf: PairwiseMRF, max_iter: int = 100, tol: float = 1e-6):
    """Approximate MAP labelling. Returns ``(labels, energy, iterations)``.

    Nodes are swept in index order and back; each node's reweighting is
    ``1 / max(#earlier neighbours, #later neighbours)``.  On trees this is
    exact min-sum belief propagation.
    """
    n = len(mrf.unary)
    if n == 0:
        return [], 0.0, 0
    nbrs = [[] for _ in range(n)]
    for (i, j) in mrf.pair:
        nbrs[i].append(j)
        nbrs[j].append(i)
    gamma = np.ones(n)
    for s in range(n):
        before = sum(1 for t in nbrs[s] if t < s)
        after = len(nbrs[s]) - before
        if max(before, after):
            gamma[s] = 1.0 / max(before, after)
    # msg[(s, t)] is the message from s to t (vector over t's states)
    msg = {}
    for (i, j) in mrf.pair:
        msg[(i, j)] = np.zeros(mrf.unary[j].size)
        msg[(j, i)] = np.zeros(mrf.unary[i].size)

    def theta(s, t):
        return mrf.pair[(s, t)] if s < t else mrf.pair[(t, s)].T

    def belief(s):
        b = mrf.unary[s].copy()
        for t in nbrs[s]:
            b += msg[(t, s)]
        return b

    def decode(order):
        labels = [0] * n
        done = set()
        for s in order:
            c = mrf.unary[s].copy()
            for t in nbrs[s]:
                c += theta(s, t)[:, labels[t]] if t in done else msg[(t, s)]
            labels[s] = int(np.argmin(c))
            done.add(s)
        return _icm(mrf, labels, nbrs, theta)

    best, best_e = None, np.inf
    it = 0
    for it in range(1, max_iter + 1):
        change = 0.0
        for order, forward in ((range(n), True), (range(n - 1, -1, -1), False)):
            for s in order:
                if not nbrs[s]:
                    continue
                b = gamma[s] * belief(s)
                for t in nbrs[s]:
                    if (t > s) != forward:
                        continue
                    m = (b - msg[(t, s)])[:, None] + theta(s, t)
                    new = m.min(axis=0)
                    new -= new.min()
                    change = max(change, float(np.abs(new - msg[(s, t)]).max()))
                    msg[(s, t)] = new
        # keep the best labelling seen over the iterations, decoded both ways
        for order in (range(n), range(n - 1, -1, -1)):
            labels = decode(order)
            e = mrf.energy(labels)
            if e < best_e - 1e-12:
                best, best_e = labels, e
        if change < tol:
            break
    return best, best_e, it


def _icm(mrf, labels, nbrs, theta, sweeps: int = 20):
    """Greedy local moves on the decoded labelling: single nodes, then pairs of
    adjacent nodes jointly (swaps of a shared candidate need both).  The
    energy never increases."""
    labels = list(labels)

    def local(s, skip=None):
        c = mrf.unary[s].copy()
        for t in nbrs[s]:
            if t != skip:
                c += theta(s, t)[:, labels[t]]
        return c

    for _ in range(sweeps):
        moved = False
        for s in range(len(labels)):
            c = local(s)
            best = int(np.argmin(c))
            if c[best] < c[labels[s]] - 1e-12:
                labels[s], moved = best, True
        for (i, j) in mrf.pair:
            c = local(i, j)[:, None] + local(j, i)[None, :] + mrf.pair[(i, j)]
            a, b = np.unravel_index(int(np.argmin(c)), c.shape)
            if c[a, b] < c[labels[i], labels[j]] - 1e-12:
                labels[i], labels[j], moved = int(a), int(b), True
        if not moved:
            break
    return labels
