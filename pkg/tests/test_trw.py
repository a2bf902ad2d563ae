import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from fixtures import as_lists, linking_mrf
from longtraj.trw import PairwiseMRF, trws


def random_mrf(rng, edges, n, states=3, scale=1.0):
    unary = [rng.uniform(0, 5, int(rng.integers(1, states + 1))) for _ in range(n)]
    pair = {(i, j): rng.uniform(-scale, scale, (unary[i].size, unary[j].size)) for i, j in edges}
    return PairwiseMRF(unary, pair)


def check_exact(mrf):
    labels, energy, _ = trws(mrf)
    best, _ = oracles.map_energy(*as_lists(mrf))
    assert energy == pytest.approx(best, abs=1e-9)
    assert mrf.energy(labels) == pytest.approx(energy)


@given(st.integers(0, 100_000), st.integers(1, 4))
def test_chains_are_exact(seed, n):
    rng = np.random.default_rng(seed)
    check_exact(random_mrf(rng, [(i, i + 1) for i in range(n - 1)], n, scale=3))


@given(st.integers(0, 100_000))
def test_stars_are_exact(seed):
    rng = np.random.default_rng(seed)
    check_exact(random_mrf(rng, [(0, 1), (0, 2), (0, 3)], 4, scale=3))


@given(st.integers(0, 100_000))
def test_cycles_are_exact(seed):
    rng = np.random.default_rng(seed)
    check_exact(random_mrf(rng, [(0, 1), (1, 2), (2, 3), (0, 3)], 4, scale=1))


def test_linking_shaped_graphs_are_exact():
    rng = np.random.default_rng(11)
    for _ in range(300):
        check_exact(linking_mrf(rng))


def test_isolated_nodes_and_empty():
    assert trws(PairwiseMRF([]))[0] == []
    labels, e, _ = trws(PairwiseMRF([[3, 1, 2], [0.5, 0.2]]))
    assert labels == [1, 1] and e == pytest.approx(1.2)


def test_reversed_edge_keys_are_transposed():
    a = PairwiseMRF([[0, 0], [0, 0, 0]], {(1, 0): np.arange(6.0).reshape(3, 2)})
    assert a.pair[(0, 1)].shape == (2, 3)
    assert a.energy([1, 2]) == 5.0


def test_bad_edges():
    with pytest.raises(ValueError):
        PairwiseMRF([[0, 0]], {(0, 0): np.zeros((2, 2))})
    with pytest.raises(ValueError):
        PairwiseMRF([[0, 0], [0]], {(0, 1): np.zeros((2, 2))})
