"""Linking short streamlines ("tracks") across memory windows with a pairwise
MRF built from appearance, motion and kinematic-prior compatibilities."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .flow_io import FlowMap
from .integrate import bilinear
from .trw import PairwiseMRF, trws


@dataclass
class Track:
    points: np.ndarray  # (n, 2)
    v: np.ndarray  # (n, 2) streak velocity at each point, px/step
    S: np.ndarray | None = None  # cosine of the streak angle
    t_start: int = 0
    t_end: int = 0
    window: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        self.v = np.asarray(self.v, dtype=np.float64).reshape(-1, 2)
        if len(self.v) != len(self.points):
            raise ValueError("velocity count differs from point count")
        if not np.all(np.isfinite(self.v)):
            raise ValueError("non-finite velocities")
        if self.S is None:
            self.S = np.cos(self.angles)
        self.S = np.asarray(self.S, dtype=np.float64).ravel()
        if len(self.S) != len(self.points):
            raise ValueError("descriptor count differs from point count")

    def __len__(self):
        return len(self.points)

    @property
    def angles(self) -> np.ndarray:
        return np.arctan2(self.v[:, 1], self.v[:, 0])

    @property
    def first(self):
        return self.points[0]

    @property
    def last(self):
        return self.points[-1]

    def head_dir(self):
        return self.points[1] - self.points[0]

    def tail_dir(self):
        return self.points[-1] - self.points[-2]

    def translated(self, dx, dy) -> "Track":
        return Track(self.points + [dx, dy], self.v, self.S, self.t_start, self.t_end, self.window)


def track_from_points(points, streak: FlowMap | None, **kw) -> Track:
    """Track whose velocities are read from ``streak`` (bilinear) at its points.

    Without a streak flow the velocities are the forward differences of the
    points.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if streak is not None:
        v = np.column_stack([bilinear(streak.u, p[:, 0], p[:, 1]), bilinear(streak.v, p[:, 0], p[:, 1])])
    else:
        d = np.diff(p, axis=0)
        v = np.vstack([d, d[-1:]]) if len(d) else np.zeros((len(p), 2))
    return Track(p, v, **kw)


@dataclass(frozen=True)
class LinkParams:
    d_thr: float = 45.0
    theta_dir: float = 42.0
    delta_dif: float = 40.0
    alpha_decay: float = 0.9
    alpha_mix: float = 0.5
    sigma_a: float = 2.0
    sigma_m: float = 2.0
    sigma_p: float = 2.0
    n_a: int | None = None  # None: 0.7 x the shorter track
    n_v: int | None = None  # None: 0.35 x the shorter track
    z_norm: str = "difference"  # appearance normaliser: "difference" of outlier weights or "decay" sum
    terminal_cost: float = -math.log(0.05)
    entropy_thresh: float = 2.5
    exclusion: float = 1e6
    coherence: float = 0.1
    max_iter: int = 100
    tol: float = 1e-6

    def __post_init__(self):
        if not 0 < self.alpha_decay < 1:
            raise ConfigError("alpha_decay", "must lie in (0, 1)")
        if not 0 <= self.alpha_mix <= 1:
            raise ConfigError("alpha_mix", "must lie in [0, 1]")
        for name in ("theta_dir", "delta_dif"):
            if not 0 < getattr(self, name) < 180:
                raise ConfigError(name, "angle must lie in (0, 180) degrees")
        if self.z_norm not in ("difference", "decay"):
            raise ConfigError("z_norm", "must be 'difference' or 'decay'")
        if self.n_a is not None and self.n_v is not None and not self.n_a >= self.n_v >= 1:
            raise ConfigError("n_v", "need n_a >= n_v >= 1")

    def counts(self, q: Track, c: Track) -> tuple[int, int]:
        n_min = min(len(q), len(c))
        n_a = self.n_a if self.n_a is not None else max(1, int(round(0.7 * n_min)))
        n_v = self.n_v if self.n_v is not None else max(1, int(round(0.35 * n_min)))
        return min(n_a, n_min), min(n_v, n_min)


def angle_between(a, b) -> float:
    """Unsigned angle in radians; 0 when either vector vanishes."""
    na, nb = math.hypot(a[0], a[1]), math.hypot(b[0], b[1])
    if na == 0 or nb == 0:
        return 0.0
    c = (a[0] * b[0] + a[1] * b[1]) / (na * nb)
    return math.acos(max(-1.0, min(1.0, c)))


def geometric_ok(q: Track, c: Track, p: LinkParams) -> bool:
    gap = c.first - q.last
    if math.hypot(*gap) > p.d_thr:
        return False
    tail = q.tail_dir()
    if math.degrees(angle_between(tail, gap)) > p.theta_dir:
        return False
    return math.degrees(angle_between(tail, c.head_dir())) <= p.delta_dif


def geometric_candidates(queries, candidates, params: LinkParams) -> list[tuple[int, int]]:
    """Pairs ``(query index, candidate index)`` passing distance and both angle tests."""
    return [(i, j) for i, q in enumerate(queries) if len(q) >= 2
            for j, c in enumerate(candidates) if len(c) >= 2 and geometric_ok(q, c, params)]


def _decay(n, alpha):
    return alpha ** np.arange(n)


def outlier_weights(track: Track) -> np.ndarray:
    """Peak-normalised Gaussian weight of each point's streak angle under the
    track's angle distribution; a zero-spread track weighs 1 everywhere."""
    a = track.angles
    mu = math.atan2(np.sin(a).mean(), np.cos(a).mean())
    d = np.angle(np.exp(1j * (a - mu)))
    sd = float(np.sqrt(np.mean(d ** 2)))
    if sd < 1e-9:
        return np.ones(len(a))
    return np.exp(-0.5 * (d / sd) ** 2)


@dataclass(frozen=True)
class Appearance:
    phi: float
    s: float
    Z: float
    degenerate: bool


def appearance_similarity(q: Track, c: Track, params: LinkParams, n_a: int | None = None) -> Appearance:
    """``exp(-|s| / sigma_a^2)`` with ``s`` the decay-weighted difference of
    outlier-weighted descriptors over the last points of ``q`` and the first of
    ``c``, normalised by the weighted difference of the outlier weights.  When
    that normaliser vanishes the sum of the decay weights is used instead."""
    if n_a is None:
        n_a = params.counts(q, c)[0]
    wt = _decay(n_a, params.alpha_decay)
    wq = outlier_weights(q)[::-1][:n_a]
    wc = outlier_weights(c)[:n_a]
    Sq = q.S[::-1][:n_a]
    Sc = c.S[:n_a]
    num = float(((Sq * wq - Sc * wc) * wt).sum())
    Z = float(((wq - wc) * wt).sum())
    degenerate = abs(Z) < 1e-9
    s = num / (wt.sum() if degenerate or params.z_norm == "decay" else Z)
    return Appearance(math.exp(-abs(s) / params.sigma_a ** 2), s, Z, degenerate)


def motion_similarity(q: Track, c: Track, params: LinkParams, n_v: int | None = None) -> float:
    if n_v is None:
        n_v = params.counts(q, c)[1]
    wt = _decay(n_v, params.alpha_decay)
    d = ((q.v[::-1][:n_v] - c.v[:n_v]) * wt[:, None]).sum(axis=0)
    return math.exp(-math.hypot(d[0], d[1]) / params.sigma_m ** 2)


def predict_endpoint(q: Track, distance: float, streak: FlowMap | None, rng, max_steps: int = 10000):
    """Roll the track end forward with a constant-acceleration step plus the
    streak velocity, drawing each next velocity from a Gaussian fitted to the
    track's velocities, until the path length reaches ``distance``."""
    x = q.last.astype(np.float64).copy()
    if distance <= 0:
        return x
    mean, sd = q.v.mean(axis=0), q.v.std(axis=0)
    v = q.v[-1].copy()
    a = q.v[-1] - q.v[-2] if len(q) > 1 else np.zeros(2)
    travelled = 0.0
    for _ in range(max_steps):
        step = v + 0.5 * a
        if streak is not None:
            step = step + np.array([bilinear(streak.u, x[0], x[1]), bilinear(streak.v, x[0], x[1])], dtype=float)
        ln = math.hypot(step[0], step[1])
        if ln < 1e-9:
            break
        if travelled + ln >= distance:
            return x + step * ((distance - travelled) / ln)
        x = x + step
        travelled += ln
        v_new = rng.normal(mean, sd)
        a = v_new - v
        v = v_new
    return x


def motion_prior(q: Track, c: Track, streak: FlowMap | None, params: LinkParams, rng=None) -> float:
    rng = np.random.default_rng(rng)
    gap = float(np.hypot(*(c.first - q.last)))
    pred = predict_endpoint(q, gap, streak, rng)
    spatial = float(np.hypot(*(c.first - pred)))
    ang = angle_between(q.tail_dir(), c.head_dir())
    am = params.alpha_mix
    return math.exp(-(am * spatial + (1 - am) * ang) / params.sigma_p ** 2)


def compatibility(q: Track, c: Track, streak: FlowMap | None, params: LinkParams, rng=None) -> float:
    """Product of the appearance, motion and kinematic-prior similarities."""
    return (appearance_similarity(q, c, params).phi * motion_similarity(q, c, params)
            * motion_prior(q, c, streak, params, rng))


def _cell_of(p, entropy_map, cell_size):
    rows, cols = entropy_map.shape
    c = min(max(int(p[0] // cell_size[0]), 0), cols - 1)
    r = min(max(int(p[1] // cell_size[1]), 0), rows - 1)
    return entropy_map[r, c]


def excluded_by_entropy(points, entropy_map, cell_size, thresh) -> np.ndarray:
    if entropy_map is None:
        return np.zeros(len(points), dtype=bool)
    return np.array([_cell_of(p, entropy_map, cell_size) > thresh for p in points], dtype=bool)


@dataclass
class Linkage:
    assignment: list  # candidate index or None per query
    states: list = field(default_factory=list)  # candidate indices per query (state k+1)
    unary: list = field(default_factory=list)
    energy: float = 0.0
    iterations: int = 0


def _connector(q: Track, c: Track):
    g = c.first - q.last
    return g if np.hypot(*g) > 0 else q.tail_dir()


def are_neighbours(a: Track, b: Track, params: LinkParams) -> bool:
    if math.hypot(*(a.last - b.last)) > params.d_thr:
        return False
    return math.degrees(angle_between(a.tail_dir(), b.tail_dir())) <= params.theta_dir


def build_graph(queries, candidates, streak, params: LinkParams, entropy_map=None, cell_size=(15, 15),
                rng=None):
    """Unary costs per query (state 0 = terminal) and pairwise tables."""
    rng = np.random.default_rng(rng)
    q_out = excluded_by_entropy([q.last for q in queries], entropy_map, cell_size, params.entropy_thresh)
    c_out = excluded_by_entropy([c.first for c in candidates], entropy_map, cell_size, params.entropy_thresh)
    states = [[] for _ in queries]
    unary = [[params.terminal_cost] for _ in queries]
    for i, j in geometric_candidates(queries, candidates, params):
        if q_out[i] or c_out[j]:
            continue
        phi = compatibility(queries[i], candidates[j], streak, params, rng)
        cost = -math.log(max(phi, 1e-300))
        # a candidate costlier than stopping can never be part of the optimum
        if cost < params.terminal_cost:
            states[i].append(j)
            unary[i].append(cost)
    pair = {}
    for i in range(len(queries)):
        for k in range(i + 1, len(queries)):
            shared = set(states[i]) & set(states[k])
            nb = bool(states[i] and states[k]) and are_neighbours(queries[i], queries[k], params)
            if not shared and not nb:
                continue
            m = np.zeros((len(states[i]) + 1, len(states[k]) + 1))
            for a, ca in enumerate(states[i]):
                da = _connector(queries[i], candidates[ca])
                for b, cb in enumerate(states[k]):
                    if ca == cb:
                        m[a + 1, b + 1] = params.exclusion
                    elif nb:
                        db = _connector(queries[k], candidates[cb])
                        m[a + 1, b + 1] = params.coherence * 0.5 * (1 - math.cos(angle_between(da, db)))
            pair[(i, k)] = m
    return states, unary, pair


def build_and_infer(queries, candidates, streak, params: LinkParams, entropy_map=None, cell_size=(15, 15),
                    rng=None) -> Linkage:
    """MAP linkage of queries to candidates (or to the terminal state)."""
    states, unary, pair = build_graph(queries, candidates, streak, params, entropy_map, cell_size, rng)
    if not queries:
        return Linkage([], states, unary)
    mrf = PairwiseMRF(unary, pair)
    labels, energy, it = trws(mrf, params.max_iter, params.tol)
    assignment = [states[i][l - 1] if l > 0 else None for i, l in enumerate(labels)]
    # exclusion is a soft constant; resolve any leftover clash by the cheaper unary
    owner = {}
    for i, c in enumerate(assignment):
        if c is None:
            continue
        if c in owner:
            o = owner[c]
            li, lo_ = unary[i][labels[i]], unary[o][labels[o]]
            loser = i if li >= lo_ else o
            assignment[loser] = None
            owner[c] = o if loser == i else i
        else:
            owner[c] = i
    return Linkage(assignment, states, unary, energy, it)


@dataclass
class Trajectory:
    id: int
    parts: list  # (window, track) pairs in order
    first_window: int = 0
    last_window: int = 0

    @property
    def points(self) -> np.ndarray:
        return np.vstack([t.points for t in self.parts])

    @property
    def S(self) -> np.ndarray:
        return np.concatenate([t.S for t in self.parts])

    @property
    def v(self) -> np.ndarray:
        return np.vstack([t.v for t in self.parts])

    def __len__(self):
        return sum(len(t) for t in self.parts)

    def to_dict(self) -> dict:
        return {"id": self.id, "window_span": [self.first_window, self.last_window],
                "points": np.round(self.points, 4).tolist(),
                "descriptors": np.round(self.S, 6).tolist(),
                "velocities": np.round(self.v, 6).tolist()}


def trajectories_to_json(trajs) -> str:
    return json.dumps([t.to_dict() for t in trajs], separators=(",", ":"))


def trajectories_from_json(text: str) -> list[np.ndarray]:
    """Point arrays of a trajectory dump (or of any JSON list of point lists)."""
    data = json.loads(text)
    out = []
    for item in data:
        pts = item["points"] if isinstance(item, dict) else item
        out.append(np.asarray(pts, dtype=np.float64).reshape(-1, 2))
    return out


def link_windows(window_tracks, streaks=None, params: LinkParams | None = None, entropy_maps=None,
                 cell_size=(15, 15), seed: int = 0) -> list[Trajectory]:
    """Chain tracks of consecutive windows into trajectories.

    ``window_tracks[w]`` holds the tracks of window ``w``; the queries of a
    transition are the tracks of window ``w`` and the candidates those of
    ``w + 1``.  Unlinked tracks persist as standalone trajectories.
    """
    params = params or LinkParams()
    chains: list[Trajectory] = []
    end_of = {}
    for j, t in enumerate(window_tracks[0] if window_tracks else []):
        chains.append(Trajectory(len(chains), [t], 0, 0))
        end_of[j] = chains[-1]
    for w in range(len(window_tracks) - 1):
        queries, cands = window_tracks[w], window_tracks[w + 1]
        streak = streaks[w] if streaks is not None else None
        emap = entropy_maps[w] if entropy_maps is not None else None
        rng = np.random.default_rng([seed, w])
        link = build_and_infer(queries, cands, streak, params, emap, cell_size, rng)
        new_end = {}
        taken = {}
        for i, c in enumerate(link.assignment):
            if c is not None:
                taken[c] = end_of[i]
        for j, t in enumerate(cands):
            if j in taken:
                traj = taken[j]
                traj.parts.append(t)
                traj.last_window = w + 1
            else:
                traj = Trajectory(len(chains), [t], w + 1, w + 1)
                chains.append(traj)
            new_end[j] = traj
        end_of = new_end
    return chains


def prune(items, length=len):
    """Keep the items whose point count is at least the mean point count."""
    items = list(items)
    if not items:
        return []
    lengths = np.array([length(t) for t in items], dtype=float)
    mean = lengths.mean()
    return [t for t, n in zip(items, lengths) if n >= mean - 1e-9]
