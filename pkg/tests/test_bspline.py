import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from longtraj.bspline import ScatteredSamples, fit, fit_points
from longtraj.errors import EmptyInput, OutOfDomain


def plane(x, y):
    return 2 * x + 3 * y + 1


def jittered_grid(seed=0, n=10, ext=9.0):
    rng = np.random.default_rng(seed)
    g = np.linspace(0.3, ext - 0.3, n)
    x, y = np.meshgrid(g, g)
    x = np.clip(x + rng.uniform(-0.3, 0.3, x.shape), 0, ext).ravel()
    y = np.clip(y + rng.uniform(-0.3, 0.3, y.shape), 0, ext).ravel()
    return x, y


def test_single_sample_is_interpolated():
    s = fit_points([2.0], [3.0], [5.5], (9, 9), levels=3)
    assert s(2.0, 3.0) == pytest.approx(5.5, abs=1e-6)


def test_constant_reproduced_everywhere():
    x, y = jittered_grid()
    s = fit_points(x, y, np.full(x.size, 4.25), (9, 9), levels=4)
    g = s.grid(10, 10)
    assert np.abs(g - 4.25).max() < 1e-9
    assert s(x[0], y[0]) == pytest.approx(4.25, abs=1e-9)


def test_plane_fit_rmse_and_held_out_point():
    x, y = jittered_grid()
    s = fit_points(x, y, plane(x, y), (9, 9), levels=3)
    rmse = np.sqrt(np.mean((s(x, y) - plane(x, y)) ** 2))
    assert rmse < 1e-6
    assert s(4.37, 6.11) == pytest.approx(plane(4.37, 6.11), abs=1e-5)


def test_eval_outside_domain():
    s = fit_points([1.0], [1.0], [1.0], (5, 5), levels=1)
    with pytest.raises(OutOfDomain):
        s(5.5, 1.0)
    with pytest.raises(OutOfDomain):
        ScatteredSamples([6.0], [1.0], [1.0], (5, 5))


def test_fit_errors():
    with pytest.raises(EmptyInput):
        fit(ScatteredSamples([], [], np.zeros(0), (5, 5)))
    with pytest.raises(ValueError):
        fit(ScatteredSamples([1.0], [1.0], [1.0], (5, 5)), levels=0)


def test_multi_component_returns_one_surface_each():
    x, y = jittered_grid()
    su, sv = fit(ScatteredSamples(x, y, np.column_stack([np.ones(x.size), -np.ones(x.size)]), (9, 9)), 3)
    assert su(1, 1) == pytest.approx(1) and sv(1, 1) == pytest.approx(-1)


@given(st.integers(0, 1000))
def test_rmse_non_increasing_in_levels(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(0, 20, 50), rng.uniform(0, 20, 50)
    z = np.sin(x / 3) + np.cos(y / 4) + 0.1 * rng.normal(size=50)
    s = fit_points(x, y, z, (20, 20), levels=5)
    rmse = [np.sqrt(np.mean((s(x, y, levels=k) - z) ** 2)) for k in range(1, 6)]
    assert all(b <= a + 1e-9 for a, b in zip(rmse, rmse[1:]))


@given(st.integers(0, 1000), st.floats(-3, 3), st.floats(-3, 3), st.floats(-5, 5))
def test_linear_reproduced(seed, a, b, c):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(0, 10, 16), rng.uniform(0, 10, 16)
    x[:4] = [0, 10, 0, 10]; y[:4] = [0, 0, 10, 10]
    s = fit_points(x, y, a * x + b * y + c, (10, 10), levels=3)
    assert np.sqrt(np.mean((s(x, y) - (a * x + b * y + c)) ** 2)) <= 1e-5


def test_surface_is_lipschitz():
    rng = np.random.default_rng(1)
    x, y = rng.uniform(0, 30, 80), rng.uniform(0, 30, 80)
    s = fit_points(x, y, np.sin(x / 5) * np.cos(y / 7), (30, 30), levels=4)
    t = np.linspace(0, 30, 3001)
    vals = s(t, np.full_like(t, 12.3))
    slope = np.abs(np.diff(vals)) / np.diff(t)
    assert slope.max() < 5.0
