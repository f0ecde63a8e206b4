import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nstv.pde import build_grid, assemble_forward, conductivity_field
from nstv.phantoms import make_phantom
from nstv.tv import tv_extended
from nstv.weights import (DegenerateOperatorError, UnsupportedNormError, WeightField,
                          column_norm_weights, disjointness_diagnostic, greens_derivative_images,
                          greens_function, project_out_constants, save_weights,
                          shifted_heaviside, sparsity_weights, tv_weights_2d, weight_1d)


def test_projection_annihilates_constants(c1d, k1d, rng):
    assert np.allclose(c1d @ np.full(k1d.grid.shape, 3.0), 0.0, atol=1e-12)
    assert np.allclose(c1d.project(c1d.k1), 0.0, atol=1e-12)
    v = rng.standard_normal(k1d.shape[1])
    assert abs(k1d.inner(c1d @ v, c1d.k1)) < 1e-12


def test_projection_batches_over_trailing_axes(k2d, rng):
    C = project_out_constants(k2d)
    v = rng.standard_normal((k2d.shape[0], 3, 2))
    out = C.project(v)
    for a in range(3):
        for b in range(2):
            assert np.allclose(out[:, a, b], C.project(v[:, a, b]))


def test_degenerate_operator():
    from nstv.pde import ForwardOperator
    g = build_grid(1, 8)
    K = ForwardOperator(np.zeros((2, 8)), g, conductivity_field("isotropic", g))
    with pytest.raises(DegenerateOperatorError):
        project_out_constants(K)


def test_weight_1d_symmetric(w1d):
    assert np.allclose(w1d.w, w1d.w[::-1], atol=1e-8)
    assert np.all(w1d.w > 0)


def test_weight_1d_brute_force():
    g = build_grid(1, 8)
    K = assemble_forward(g)
    C = project_out_constants(K)
    w = weight_1d(C)
    M = K.matrix
    k1 = M @ np.ones(8)
    Q = np.eye(2) - np.outer(k1, k1) / (k1 @ k1)
    for j in range(1, 8):
        y = j / 8
        hb = np.where(np.arange(8) < j, y - 1.0, y)
        plain = (np.arange(8) >= j).astype(float)
        ref = np.sqrt(K.quadrature) * np.linalg.norm(Q @ M @ hb)
        assert w.w[j - 1] == pytest.approx(ref, rel=1e-12)
        # C annihilates the constant shift between H and Hbar
        assert K.norm(C @ plain) == pytest.approx(ref, rel=1e-10)


def test_weight_1d_frozen_value(w1d):
    # frozen regression value at x* = 0.65 on n = 200
    assert w1d.w[129] == pytest.approx(0.0729632, rel=1e-5)


def test_greens_symmetry_and_mass():
    g = build_grid(2, 15)
    center = (7, 7)
    G = greens_function(g, center)
    for flip in (G[::-1], G[:, ::-1], G.T):
        assert np.allclose(G, flip, atol=1e-8)
    from nstv.pde import elliptic_matrix
    L = elliptic_matrix(conductivity_field("isotropic", g), "dirichlet", 0.0)
    assert (L @ G.ravel()).sum() == pytest.approx(1 / g.h ** 2, rel=1e-10)
    Gn = greens_function(g, center, bc="neumann")
    assert abs(Gn.mean()) < 1e-10


def test_images_represent_data_exactly(k2d, rng):
    images = greens_derivative_images(k2d)
    for _ in range(3):
        f = rng.standard_normal(k2d.grid.shape)
        assert np.allclose(images.data_from_field(f), k2d @ f, atol=1e-11)


def test_images_represent_data_anisotropic(rng):
    g = build_grid(2, 10)
    for kind in ("D1", "D2"):
        K = assemble_forward(g, conductivity_field(kind, g))
        images = greens_derivative_images(K)
        f = rng.standard_normal(g.shape)
        assert np.allclose(images.data_from_field(f), K @ f, atol=1e-10)


def test_tv_weights_symmetry_and_floor(k2d):
    W = tv_weights_2d(k2d, p=np.inf)
    assert np.allclose(W.w1, W.w1[::-1, :], rtol=1e-6, atol=1e-12)
    assert np.allclose(W.w2, W.w2[:, ::-1], rtol=1e-6, atol=1e-12)
    assert min(W.w1.min(), W.w2.min(), W.boundary.min()) > 0


def test_tv_weights_rankings_correlate(k2d):
    from scipy.stats import spearmanr
    w1 = tv_weights_2d(k2d, p=1, floor=None)
    winf = tv_weights_2d(k2d, p=np.inf, floor=None)
    assert not np.allclose(w1.w1 / w1.max(), winf.w1 / winf.max())
    assert spearmanr(w1.w1.ravel(), winf.w1.ravel())[0] > 0


def test_tv_weights_norm_validation(k2d):
    with pytest.raises(UnsupportedNormError):
        tv_weights_2d(k2d, p=3)
    assert tv_weights_2d(k2d, p=2).p_norm == 2


def test_minkowski_bound_exact(k2d, w2d_raw, rng):
    for _ in range(10):
        f = rng.standard_normal(k2d.grid.shape)
        lhs = k2d.quadrature * np.abs(k2d @ f).sum()
        assert lhs <= tv_extended(f, w2d_raw).total * (1 + 1e-10)


def test_sparsity_weights_projection(k2d):
    sw = sparsity_weights(k2d, q=20)
    assert np.all(sw.values <= 1 + 1e-12)
    _, _, vt = k2d.svd()
    P = vt[:20].T @ vt[:20]
    assert np.allclose(sw.values.ravel(), np.linalg.norm(P, axis=0))


def test_sparsity_weights_zero_when_orthogonal():
    # a cell not seen by the top singular space gets weight 0
    from nstv.pde import ForwardOperator
    g = build_grid(1, 8)
    m = np.zeros((2, 8))
    m[0, 0] = 1.0
    m[1, 1] = 2.0
    K = ForwardOperator(m, g, conductivity_field("isotropic", g))
    sw = sparsity_weights(K, q=2)
    assert np.allclose(sw.values[2:], 0.0)


def test_sparsity_weights_clamp_warns(k2d):
    with pytest.warns(UserWarning):
        sw = sparsity_weights(k2d, q=10_000)
    assert sw.q <= k2d.shape[0]


def test_column_norm_weights(k2d):
    cw = column_norm_weights(k2d)
    assert np.allclose(cw.values.ravel(), np.linalg.norm(k2d.weighted_matrix(), axis=0))


def test_unit_weights_constant_field():
    g = build_grid(2, 10)
    tv = tv_extended(np.ones(g.shape), WeightField.unit(g))
    assert tv.interior == 0
    assert tv.boundary == pytest.approx((4 * 10 - 4) * g.h)


def test_save_weights(tmp_path, k2d):
    W = tv_weights_2d(k2d, p=np.inf)
    path = save_weights(W, tmp_path / "w")
    text = path.read_text().splitlines()
    assert len(text) == 1 + W.w1.size + W.w2.size + W.boundary.size
    import json
    meta = json.loads((tmp_path / "w.json").read_text())
    assert meta["bc"] == "dirichlet"


def _own_side(report, edges=None):
    return {e["edge"]: e["fractions"][e["expected_side"]] for e in report
            if edges is None or e["edge"] in edges}


def test_disjointness_expected_side_dominates(k2d):
    report = disjointness_diagnostic(k2d, (0.25, 0.75, 0.25, 0.75))
    assert all(e["dominant_side"] == e["expected_side"] for e in report)


def test_disjointness_thin_lower_than_large(k2d):
    large = _own_side(disjointness_diagnostic(k2d, (0.25, 0.75, 0.25, 0.75)))
    thin = _own_side(disjointness_diagnostic(k2d, (0.25, 0.75, 0.4375, 0.5625)))
    assert np.mean(list(thin.values())) < np.mean(list(large.values()))
    # the long edges of the thin rectangle lose the most
    assert max(thin["bottom"], thin["top"]) < min(large.values())


@pytest.mark.xfail(reason="dominant side carries ~40%, not > 50%, on this discretization",
                   strict=True)
def test_disjointness_large_square_majority(k2d):
    report = disjointness_diagnostic(k2d, (0.25, 0.75, 0.25, 0.75))
    assert all(e["dominant_fraction"] > 0.5 for e in report)


def test_disjointness_rejects_touching_rect(k2d):
    with pytest.raises(Exception):
        disjointness_diagnostic(k2d, (0.0, 0.5, 0.25, 0.75))


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 199))
def test_shifted_heaviside_zero_mean(face):
    g = build_grid(1, 200)
    hb = shifted_heaviside(g, face)
    assert abs(hb.mean()) < 1e-12
    assert hb[face] - hb[face - 1] == pytest.approx(1.0)
