import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from longtraj.cell_grid import (CellGrid, DominantGroup, VideoVolumeConfig, cell_entropy, circular_mean,
                                cluster_spatial, distribute, entropy_bits, fine_to_coarse, kmeans_path,
                                orientation_bins, quantise_and_cluster, quantise_orientations, select_k)
from longtraj.errors import ConfigError, EmptyCell
from longtraj.sampling import FlowVectors

CFG = VideoVolumeConfig(W=64, H=48, T=10)


def at_angles(deg, x=0.0, y=0.0):
    a = np.radians(np.asarray(deg, dtype=float))
    n = a.size
    return FlowVectors(np.full(n, x), np.full(n, y), np.cos(a), np.sin(a), 0)


def test_distribute_boundaries():
    g = distribute(FlowVectors([0, 15, 63.9], [0, 0, 47.9], [1, 1, 1], [0, 0, 0], 0), CFG)
    assert len(g[0, 0].vectors) == 1
    assert len(g[0, 1].vectors) == 1
    # 64 // 15 = 4 columns, 48 // 15 = 3 rows; remainder pixels join the last cell
    assert g.shape == (3, 4) and len(g[2, 3].vectors) == 1


@given(st.integers(0, 1000), st.integers(0, 300))
def test_distribute_is_partition(seed, n):
    rng = np.random.default_rng(seed)
    v = FlowVectors(rng.uniform(0, 64, n), rng.uniform(0, 48, n), rng.normal(size=n), rng.normal(size=n), 0)
    g = distribute(v, CFG)
    assert g.count() == n
    for cell in g:
        if len(cell.vectors):
            r, c = g.index_of(cell.vectors.x, cell.vectors.y)
            assert np.all(r == cell.row) and np.all(c == cell.col)


def test_config_validation():
    with pytest.raises(ConfigError):
        VideoVolumeConfig(W=10, H=10, T=5, n_w=11)
    with pytest.raises(ConfigError):
        VideoVolumeConfig(W=10, H=10, T=5, n_tau=0)


def test_single_orientation_selects_bin_zero():
    assert list(quantise_orientations(at_angles([10] * 5))) == [0]


def test_histogram_selection_above_median():
    counts = [20, 8, 25, 33, 3, 28, 12, 16]
    deg = np.concatenate([np.full(c, 45 * b + 20.0) for b, c in enumerate(counts)])
    assert sorted(quantise_orientations(at_angles(deg))) == [0, 2, 3, 5]


def test_uniform_counts_fall_back_to_all():
    deg = np.repeat(np.arange(8) * 45 + 5.0, 3)
    assert sorted(quantise_orientations(at_angles(deg))) == list(range(8))


def test_empty_cell_raises():
    with pytest.raises(EmptyCell):
        quantise_orientations(FlowVectors())


@given(st.lists(st.floats(0, 359.99), min_size=1, max_size=40), st.integers(1, 7))
def test_rotation_by_45_shifts_bins(deg, k):
    deg = np.asarray(deg)
    # stay away from bin edges so rounding cannot move a vector across one
    deg = np.floor(deg / 45) * 45 + 22.5
    b0 = set(quantise_orientations(at_angles(deg)))
    b1 = set(quantise_orientations(at_angles((deg + 45 * k) % 360)))
    assert b1 == {(b + k) % 8 for b in b0}


def test_circular_mean_wraps():
    assert circular_mean(np.radians([350, 10])) == pytest.approx(0.0, abs=1e-12)
    assert circular_mean(np.radians([80, 100])) == pytest.approx(math.pi / 2)


def test_single_vector_group():
    v = FlowVectors([3.5], [7.25], [0.0], [2.0], 0)
    (g,) = cluster_spatial(v)
    assert (g.x, g.y, g.n) == (3.5, 7.25, 1)
    assert g.theta == pytest.approx(math.pi / 2) and g.mag == pytest.approx(2.0)


def two_blobs(seed=4, n=6):
    rng = np.random.default_rng(seed)
    a = rng.normal([10, 10], 1.0, (n, 2))
    b = rng.normal([110, 10], 1.0, (n, 2))
    return np.vstack([a, b]), a.mean(0), b.mean(0)


def test_two_blobs_give_two_groups():
    pts, ca, cb = two_blobs()
    v = FlowVectors(pts[:, 0], pts[:, 1], np.ones(len(pts)), np.zeros(len(pts)), 0)
    groups = cluster_spatial(v, 0.01, np.random.default_rng(0))
    assert len(groups) == 2
    centres = sorted((g.x, g.y) for g in groups)
    assert np.hypot(*(np.array(centres[0]) - ca)) < 1 and np.hypot(*(np.array(centres[1]) - cb)) < 1


def test_two_blob_compactness_matches_exhaustive():
    pts, _, _ = two_blobs()
    costs = [c for _, _, _, c in kmeans_path(pts, 2, 0)]
    assert costs[1] == pytest.approx(oracles.kmeans_optimal(pts.tolist(), 2), rel=1e-9)
    assert costs[0] == pytest.approx(oracles.kmeans_optimal(pts.tolist(), 1), rel=1e-9)


def test_identical_positions():
    pts = np.full((5, 2), 3.0)
    k, centers, labels, costs = select_k(pts, 0.01, 0)
    assert k == 1 and costs[0] == 0


@given(st.integers(0, 10_000))
def test_compactness_non_increasing(seed):
    pts = np.random.default_rng(seed).uniform(0, 50, (30, 2))
    costs = [c for _, _, _, c in kmeans_path(pts, 5, seed)]
    assert all(b <= a + 1e-9 for a, b in zip(costs, costs[1:]))


def test_select_k_rejects_bad_threshold():
    with pytest.raises(ValueError):
        select_k(np.zeros((3, 2)), 1.5)


def test_fine_to_coarse_levels():
    grid = CellGrid(CFG)
    grid[0, 0].vectors = at_angles([0] * 8, 2, 2)
    grid[0, 0].groups = [DominantGroup(2, 2, 5, 0.0), DominantGroup(3, 3, 3, 0.0)]
    grid[1, 1].vectors = at_angles([90], 20, 20)
    grid[1, 1].groups = [DominantGroup(20, 20, 1, math.pi / 2)]
    f = fine_to_coarse(grid)
    assert len(f.level_vectors) == 9
    assert len(f.level_groups) == 3
    assert [g.n for g in f.level_representative] == [5, 1]
    assert f.samples("groups").shape == (3, 4)
    assert f.samples("vectors").shape == (9, 4)


def test_empty_grid_contributes_nothing():
    f = fine_to_coarse(CellGrid(CFG))
    assert len(f.level_vectors) == 0 and f.level_groups == [] and f.level_representative == []


@given(st.integers(0, 500))
def test_level_sizes_are_ordered(seed):
    rng = np.random.default_rng(seed)
    n = 200
    v = FlowVectors(rng.uniform(0, 64, n), rng.uniform(0, 48, n), rng.normal(size=n), rng.normal(size=n), 0)
    g = distribute(v, CFG)
    quantise_and_cluster(g, seed=seed)
    for cell in g:
        assert len(cell.groups) <= len(cell.vectors)
        assert [x.n for x in cell.groups] == sorted((x.n for x in cell.groups), reverse=True)
        assert all(0 <= x.theta < 2 * math.pi and x.n >= 1 for x in cell.groups)
    f = fine_to_coarse(g)
    assert len(f.level_representative) <= len(f.level_groups) <= len(f.level_vectors)


def test_entropy_examples():
    assert entropy_bits([1] * 8) == pytest.approx(3.0)
    assert entropy_bits([5, 0, 0, 0, 0, 0, 0, 0]) == 0.0
    assert entropy_bits([4, 4, 0, 0, 0, 0, 0, 0]) == pytest.approx(1.0)
    assert entropy_bits([0] * 8) == 0.0


@given(st.lists(st.integers(0, 50), min_size=8, max_size=8), st.permutations(range(8)))
def test_entropy_matches_oracle_and_is_permutation_invariant(counts, perm):
    e = entropy_bits(counts)
    assert 0 <= e <= 3 + 1e-12
    if sum(counts):
        assert e == pytest.approx(oracles.entropy_bits(counts), abs=1e-12)
    assert entropy_bits([counts[i] for i in perm]) == pytest.approx(e, abs=1e-12)


def test_cell_entropy_of_coherent_grid_is_zero():
    cfg = VideoVolumeConfig(W=45, H=45, T=5)
    g = CellGrid(cfg)
    for cell in g:
        cell.vectors = at_angles([10, 12, 14], cell.col * 15 + 3, cell.row * 15 + 3)
        cell.groups = [DominantGroup(0, 0, 3, math.radians(12))]
    assert np.all(cell_entropy(g, 3) == 0)


def test_cell_entropy_mixed_neighbourhood():
    cfg = VideoVolumeConfig(W=45, H=45, T=5)
    g = CellGrid(cfg)
    for cell in g:
        cell.vectors = at_angles([10], cell.col * 15 + 3, cell.row * 15 + 3)
        cell.groups = [DominantGroup(0, 0, 1, math.radians(10))]
    # centre neighbours all point into bin 4 instead
    for cell in g:
        if (cell.row, cell.col) != (1, 1):
            cell.groups = [DominantGroup(0, 0, 1, math.radians(190))]
    e = cell_entropy(g, 3)
    # own vector in bin 0, eight neighbour prototypes in bin 4
    assert e[1, 1] == pytest.approx(oracles.entropy_bits([1, 0, 0, 0, 8, 0, 0, 0]))
    assert g[1, 1].entropy == e[1, 1]


def test_cell_entropy_boundary_replicates_own_vectors():
    cfg = VideoVolumeConfig(W=15, H=15, T=5)
    g = CellGrid(cfg)
    g[0, 0].vectors = at_angles([10, 100], 3, 3)
    # all eight neighbours are outside: nine copies of the own histogram
    assert cell_entropy(g, 3)[0, 0] == pytest.approx(1.0)


def test_orientation_bins_edges():
    assert list(orientation_bins(np.radians([0, 44.9, 45, 359.9]))) == [0, 0, 1, 7]
