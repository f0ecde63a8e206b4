import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from nstv.pde import (AssemblyError, ConductivityError, GridError, apply_forward,
                      assemble_forward, build_grid, conductivity_field, elliptic_matrix,
                      load_operator, save_operator)
from nstv.phantoms import make_phantom


def test_grid_boundary_counts():
    g = build_grid(1, 8)
    assert g.size == 8
    assert g.boundary_indices.tolist() == [0, 7]
    g = build_grid(2, 4)
    assert g.size == 16 and len(g.boundary_indices) == 12
    g = build_grid(2, 64)
    assert g.size == 4096 and len(g.boundary_indices) == 252


def test_grid_rejects_small_n():
    with pytest.raises(GridError):
        build_grid(2, 3)
    with pytest.raises(GridError):
        build_grid(3, 8)


def test_boundary_ring_is_counter_clockwise_and_unique():
    g = build_grid(2, 5)
    idx = g.boundary_indices
    assert len(set(idx.tolist())) == len(idx)
    i, j = np.unravel_index(idx, g.shape)
    assert (i[0], j[0]) == (0, 0)
    steps = np.abs(np.diff(i)) + np.abs(np.diff(j))
    assert np.all(steps == 1)
    # first leg runs along the bottom side (x2 = 0) toward increasing x1
    assert (i[1], j[1]) == (1, 0)


def test_conductivity_values():
    g = build_grid(2, 20)
    iso = conductivity_field("isotropic", g)
    assert np.allclose(iso.values, np.eye(2))
    d1 = conductivity_field(lambda x1, x2: (1 + 9 * x1) * np.diag([5.0, 1.0]), g)
    assert d1.is_diagonal
    from nstv.pde import _d1_tensor, _d2_tensor
    assert np.allclose(_d1_tensor(0.0, 0.3), np.diag([5.0, 1.0]))
    assert np.allclose(_d1_tensor(1.0, 0.3), np.diag([50.0, 10.0]))
    assert np.allclose(_d2_tensor(0.2, 0.2), 10 * np.eye(2))
    assert np.allclose(_d2_tensor(0.7, 0.7), np.eye(2))


def test_conductivity_rejects_non_spd():
    g = build_grid(2, 4)
    with pytest.raises(ConductivityError):
        conductivity_field(lambda x1, x2: np.diag([1.0, -1.0]), g)
    with pytest.raises(ConductivityError):
        conductivity_field("nonsense", g)
    with pytest.raises(ConductivityError):
        conductivity_field("D1", build_grid(1, 8))


def test_non_diagonal_tensor_rejected_by_assembler():
    g = build_grid(2, 4)
    cond = conductivity_field(lambda x1, x2: np.array([[2.0, 0.5], [0.5, 2.0]]), g)
    with pytest.raises(AssemblyError):
        assemble_forward(g, cond)


@pytest.mark.parametrize("dim,n,kind", [(1, 16, "isotropic"), (2, 8, "isotropic"),
                                        (2, 8, "D1"), (2, 8, "D2")])
def test_constants_map_to_constants(dim, n, kind):
    g = build_grid(dim, n)
    K = assemble_forward(g, conductivity_field(kind, g))
    assert np.allclose(K @ (2 * np.ones(g.shape)), 2.0, atol=1e-10)


def test_cosine_eigenfunction_1d():
    g = build_grid(1, 512)
    K = assemble_forward(g)
    x = g.centers()[:, 0]
    d = K @ np.cos(np.pi * x)
    expected = 1 / (1 + np.pi ** 2)
    # second order in h, and the boundary cell center sits h/2 inside
    assert d[0] == pytest.approx(expected, rel=1e-4)
    assert d[1] == pytest.approx(-expected, rel=1e-4)


def test_reflection_symmetry_2d():
    g = build_grid(2, 16)
    K = assemble_forward(g)
    f = make_phantom("square", {"center": (0.5, 0.5), "size": 0.5}, g)
    u = K.solve_pde(f)
    trace = u.ravel()[g.boundary_indices]
    assert np.allclose(K @ f, trace, atol=1e-12)
    for flip in (u[::-1], u[:, ::-1], u.T, u[::-1, ::-1]):
        assert np.allclose(u, flip, atol=1e-10)


def test_apply_forward_matches_direct_solve(k2d):
    g = k2d.grid
    f = make_phantom("square", {"center": (0.5, 0.5), "size": 0.5}, g)
    direct = spla.spsolve(elliptic_matrix(k2d.conductivity, "neumann", 1.0).tocsc(), f.ravel())
    assert np.allclose(apply_forward(k2d, f), direct[g.boundary_indices], atol=1e-12)
    assert np.allclose(k2d @ np.zeros(g.shape), 0.0)
    e = np.zeros(g.size)
    e[37] = 1.0
    assert np.allclose(k2d @ e.reshape(g.shape), k2d.matrix[:, 37])


def test_apply_forward_grid_mismatch(k2d):
    with pytest.raises(GridError):
        k2d @ np.ones((8, 8))


def test_weighted_matrix_norm(k2d, rng):
    f = rng.standard_normal(k2d.grid.shape)
    d = k2d @ f
    assert np.linalg.norm(k2d.weighted_matrix() @ f.ravel()) == pytest.approx(k2d.norm(d))


def test_operator_roundtrip(tmp_path, k2d):
    save_operator(k2d, tmp_path / "K")
    K2 = load_operator(tmp_path / "K")
    assert np.array_equal(K2.matrix, k2d.matrix)
    assert K2.grid == k2d.grid
    assert K2.conductivity.kind == "isotropic"


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=16, max_size=16), st.floats(-5, 5))
def test_linearity_and_constant_shift(values, c):
    g = build_grid(1, 16)
    K = _K16()
    f = np.asarray(values)
    assert np.allclose(K @ (f + c), K @ f + c, atol=1e-9)


_CACHE = {}


def _K16():
    if "k" not in _CACHE:
        _CACHE["k"] = assemble_forward(build_grid(1, 16))
    return _CACHE["k"]
