"""Re-link fragmented tracks with the MRF linker.

Twenty straight or curved chains are cut into three fragments with 10-30 px
gaps; some chains run right to left.  The linker sees only the fragments
and must rebuild the chains without joining opposite directions.
"""
from __future__ import annotations

import numpy as np

from longtraj.linking import LinkParams, Track, link_windows


def fragments(seed: int = 0, n: int = 20, spacing: float = 24.0):
    rng = np.random.default_rng(seed)
    windows, chain_of = [[], [], []], [[], [], []]
    for i in range(n):
        sign = -1 if i % 3 == 2 else 1
        radius = [np.inf, 400.0, -400.0, 250.0, -250.0][i % 5]
        speed = rng.uniform(0.8, 1.6)
        lens = rng.integers(50, 70, 3)
        gaps = rng.uniform(10, 30, 2)
        starts = [0, lens[0] + gaps[0], lens[0] + gaps[0] + lens[1] + gaps[1]]
        for k in range(3):
            s = starts[k] + np.arange(lens[k], dtype=float)
            th = np.zeros_like(s) if np.isinf(radius) else s / radius
            x = s if np.isinf(radius) else radius * np.sin(th)
            y = np.zeros_like(s) if np.isinf(radius) else radius * (1 - np.cos(th))
            x = 40 + x if sign > 0 else 600 - x
            tangent = np.column_stack([sign * np.cos(th), np.sin(th)])
            windows[k].append(Track(np.column_stack([x, 20 + i * spacing + y]), speed * tangent, window=k))
            chain_of[k].append(i)
    return windows, chain_of


def main() -> None:
    windows, chain_of = fragments()
    trajs = link_windows(windows, params=LinkParams(), seed=0)
    where = {id(t): (k, j) for k in range(3) for j, t in enumerate(windows[k])}
    good = bad = 0
    for tr in trajs:
        for a, b in zip(tr.parts[:-1], tr.parts[1:]):
            (ka, ja), (kb, jb) = where[id(a)], where[id(b)]
            good += chain_of[ka][ja] == chain_of[kb][jb]
            bad += chain_of[ka][ja] != chain_of[kb][jb]
    print(f"{len(trajs)} trajectories from {sum(map(len, windows))} fragments")
    print(f"correct links {good}/40, wrong links {bad}")


if __name__ == "__main__":
    main()
