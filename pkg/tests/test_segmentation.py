import json

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from longtraj.flow_io import FlowMap, synth_field
from longtraj.segmentation import score_segmentation, scores_to_json, segment, traj_to_flow


def lane(y, x0, x1, n=40):
    return np.column_stack([np.linspace(x0, x1, n), np.full(n, float(y))])


def test_single_trajectory_band():
    mf = traj_to_flow([lane(10, 2, 37)], 40, 20)
    assert mf.mask[10, 20] and not mf.mask[0, 20]
    assert mf.flow.u[10, 20] > 0.95 and abs(mf.flow.v[10, 20]) < 0.05
    assert np.all(mf.flow.u[~mf.mask] == 0)


def test_antiparallel_lanes_have_opposite_u():
    mf = traj_to_flow([lane(8, 2, 57), lane(30, 57, 2)], 60, 40)
    assert mf.flow.u[8, 30] > 0 and mf.flow.u[30, 30] < 0


def test_no_trajectories_fully_masked():
    mf = traj_to_flow([], 10, 10)
    assert not mf.mask.any()


def test_uniform_field_one_label():
    f = synth_field("uniform", 12, 9)
    assert segment(f, np.ones((9, 12), dtype=bool)).max() == 1


def test_two_lane_two_labels():
    mf = traj_to_flow([lane(8, 2, 57), lane(30, 57, 2)], 60, 40)
    labels = segment(mf.flow, mf.mask)
    assert labels.max() == 2
    assert labels[8, 30] != labels[30, 30]


def test_fully_masked_zero_labels():
    f = synth_field("uniform", 5, 5)
    assert segment(f, np.zeros((5, 5), dtype=bool)).max() == 0


def random_field(seed, n=12):
    rng = np.random.default_rng(seed)
    a = np.cumsum(rng.normal(0, 0.6, (n, n)), axis=1)
    mask = rng.random((n, n)) > 0.2
    return FlowMap(np.cos(a), np.sin(a)), mask


@given(st.integers(0, 10_000))
def test_labels_partition_unmasked(seed):
    f, mask = random_field(seed)
    labels = segment(f, mask)
    assert np.all((labels > 0) == mask)
    assert labels.max() <= mask.sum()
    assert set(np.unique(labels[labels > 0])) == set(range(1, labels.max() + 1))


@given(st.integers(0, 10_000), st.floats(-0.9, 0.9), st.floats(0.0, 0.1))
def test_raising_threshold_refines(seed, c, dc):
    f, mask = random_field(seed)
    assert segment(f, mask, c + dc).max() >= segment(f, mask, c).max()


def test_score_single_exclusive_box():
    labels = np.zeros((10, 10), dtype=int)
    labels[2:6, 2:6] = 1
    assert score_segmentation(labels, [(2, 2, 5, 5)]) == (1, 0, 0)


def test_score_missed_box():
    assert score_segmentation(np.zeros((10, 10), dtype=int), [(0, 0, 3, 3)]) == (0, 0, 1)


def test_score_merged_boxes():
    labels = np.zeros((10, 20), dtype=int)
    labels[2:8, 1:19] = 1
    # the left box holds more of the shared label, so it owns it
    assert score_segmentation(labels, [(1, 2, 11, 7), (12, 2, 18, 7)]) == (1, 1, 0)


def test_score_split_box():
    labels = np.zeros((9, 9), dtype=int)
    labels[:, 0:3], labels[:, 3:6], labels[:, 6:9] = 1, 2, 3
    assert score_segmentation(labels, [(0, 0, 8, 8)]) == (0, 1, 0)


@given(st.integers(0, 10_000))
def test_score_counts_all_boxes(seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 4, (12, 12))
    boxes = []
    for _ in range(int(rng.integers(1, 5))):
        x0, y0 = rng.integers(0, 10, 2)
        boxes.append((x0, y0, x0 + int(rng.integers(0, 3)), y0 + int(rng.integers(0, 3))))
    assert sum(score_segmentation(labels, boxes)) == len(boxes)


def test_scores_json():
    assert json.loads(scores_to_json((2, 0, 1))) == {"correct": 2, "incorrect": 0, "missed": 1}
