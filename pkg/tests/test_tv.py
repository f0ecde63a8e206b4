import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from nstv.pde import GridError, build_grid
from nstv.tv import (ConfigurationError, GradientOperator, shrink, tv_extended, tv_value,
                     tv_weighted)
from nstv.weights import WeightField

G8 = build_grid(2, 8)
finite = st.floats(-100, 100, allow_nan=False)


def _random_weights(grid, seed):
    rng = np.random.default_rng(seed)
    axes = tuple(rng.uniform(0.1, 2.0, (grid.n - 1, grid.n) if k == 0 else (grid.n, grid.n - 1))
                 for k in range(grid.dim))
    return WeightField(grid, axes, rng.uniform(0.1, 2.0, len(grid.boundary_indices)))


def test_shrink_examples():
    assert shrink(3, 1) == 2
    assert shrink(-0.5, 1) == 0
    assert shrink(-3.5, 1) == -2.5
    assert shrink(1.7, 0) == 1.7


@given(finite, st.floats(0, 50))
def test_shrink_is_prox_of_abs(v, theta):
    s = shrink(v, theta)
    assert abs(s) <= abs(v) + 1e-12
    assert s == 0 or np.sign(s) == np.sign(v)
    # prox optimality: the candidate beats a grid of alternatives
    obj = lambda x: 0.5 * (x - v) ** 2 + theta * abs(x)
    for x in np.linspace(v - 2 * theta - 1, v + 2 * theta + 1, 21):
        assert obj(s) <= obj(x) + 1e-9


def test_constant_field_zero_tv():
    W = WeightField.unit(G8)
    assert tv_weighted(np.full(G8.shape, 4.2), W).total == 0


@pytest.mark.parametrize("a,b", [(1, 1), (2, 3), (4, 1)])
def test_rectangle_perimeter(a, b):
    f = np.zeros(G8.shape)
    f[2:2 + a, 3:3 + b] = 1.0
    assert tv_weighted(f, WeightField.unit(G8)).total == pytest.approx(2 * (a + b) * G8.h)


def test_extended_constant():
    W = WeightField.unit(G8)
    tv = tv_extended(np.ones(G8.shape), W)
    assert tv.interior == 0
    assert tv.boundary == pytest.approx((4 * 8 - 4) * G8.h)


def test_extended_interior_support_equals_plain():
    W = _random_weights(G8, 0)
    f = np.zeros(G8.shape)
    f[2:5, 3:6] = 1.3
    assert tv_extended(f, W).boundary == 0
    assert tv_extended(f, W).total == pytest.approx(tv_weighted(f, W).total)


def test_touching_side_uses_boundary_weight():
    W = _random_weights(G8, 1)
    f = np.zeros(G8.shape)
    f[0, 2:4] = 1.0  # touches x1 = 0
    ext = tv_extended(f, W)
    left = np.ravel_multi_index((np.zeros(2, int), np.arange(2, 4)), G8.shape)
    pos = [int(np.nonzero(G8.boundary_indices == c)[0][0]) for c in left]
    assert ext.boundary == pytest.approx(G8.h * W.boundary[pos].sum())


def test_extended_requires_boundary_weight():
    W = WeightField.unit(G8, boundary=False)
    with pytest.raises(ConfigurationError):
        tv_extended(np.ones(G8.shape), W)
    with pytest.raises(ConfigurationError):
        GradientOperator(G8, extended=True).row_weights(W)


def test_grid_mismatch():
    with pytest.raises(GridError):
        tv_weighted(np.ones((4, 4)), WeightField.unit(G8))


@settings(max_examples=30, deadline=None)
@given(arrays(float, (8, 8), elements=finite), st.floats(-5, 5), st.integers(0, 4))
def test_tv_invariants(f, c, seed):
    W = _random_weights(G8, seed)
    base = tv_weighted(f, W).total
    assert tv_weighted(f + 3.0, W).total == pytest.approx(base, rel=1e-9, abs=1e-9)
    assert tv_weighted(c * f, W).total == pytest.approx(abs(c) * base, rel=1e-9, abs=1e-9)
    ext = tv_extended(f, W)
    assert ext.total >= base - 1e-9 and ext.boundary >= 0


@settings(max_examples=30, deadline=None)
@given(arrays(float, (8, 8), elements=finite), arrays(float, (8, 8), elements=finite))
def test_tv_triangle_inequality(f, g):
    W = _random_weights(G8, 3)
    lhs = tv_extended(f + g, W).total
    assert lhs <= tv_extended(f, W).total + tv_extended(g, W).total + 1e-8 * (1 + lhs)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.booleans(), st.sampled_from([1, 2]))
def test_gradient_adjoint_and_value(seed, extended, dim):
    grid = build_grid(dim, 8)
    rng = np.random.default_rng(seed)
    G = GradientOperator(grid, extended=extended)
    f = rng.standard_normal(grid.size)
    phi = rng.standard_normal(G.shape[0])
    assert np.dot(G(f), phi) == pytest.approx(np.dot(f, G.adjoint(phi)), rel=1e-10, abs=1e-10)
    if not extended:
        assert np.allclose(G(np.ones(grid.size)), 0.0)
    W = WeightField.unit(grid, boundary=extended)
    assert np.abs(G.row_weights(W) * G(f)).sum() == pytest.approx(
        tv_value(f.reshape(grid.shape), W, extended))
