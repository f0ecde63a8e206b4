"""Test sources, synthetic noise and support metrics."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .pde import Grid, GridError

__all__ = [
    "PHANTOM_KINDS",
    "make_phantom",
    "add_noise",
    "support_metrics",
]

PHANTOM_KINDS = ("square", "rect", "l_shape", "diamond", "two_sources", "heaviside_1d")


def _box_mask(grid: Grid, lo, hi) -> np.ndarray:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo < 0) or np.any(hi > 1) or np.any(lo >= hi):
        raise GridError(f"box {lo.tolist()}..{hi.tolist()} must lie inside the unit square")
    c = grid.centers()
    return np.all((c >= lo) & (c <= hi), axis=-1)


def _square_box(params: dict):
    center = np.asarray(params.get("center", (0.5, 0.5)), dtype=float)
    size = params.get("size", 0.5)
    half = 0.5 * np.broadcast_to(np.asarray(size, dtype=float), (2,))
    return center - half, center + half


def make_phantom(kind: str, params: Optional[dict], grid: Grid) -> np.ndarray:
    """Cell-wise source field.

    Geometry is given in domain units; a cell belongs to a shape when its
    center does.  Supported kinds and parameters:

    ``square``       center, size (scalar), amplitude
    ``rect``         lo, hi corners
    ``l_shape``      lo, hi of the bounding box and ``notch`` (fraction of the
                     box removed at the top-right corner, default 0.5)
    ``diamond``      center, radius (l1 ball)
    ``two_sources``  ``sources``: list of square params; overlap rejected
    ``heaviside_1d`` x_star, rho, tau (1D grid)
    """
    params = dict(params or {})
    amp = float(params.get("amplitude", 1.0))
    if kind == "heaviside_1d":
        if grid.dim != 1:
            raise GridError("heaviside_1d needs a 1D grid")
        x_star = float(params.get("x_star", 0.65))
        if not 0 < x_star < 1:
            raise GridError("x_star must lie in (0, 1)")
        rho = float(params.get("rho", 1.5))
        tau = float(params.get("tau", 1.25))
        return np.where(grid.centers()[:, 0] > x_star, rho + tau, tau)
    if grid.dim != 2:
        raise GridError(f"phantom {kind!r} needs a 2D grid")
    if kind == "square":
        mask = _box_mask(grid, *_square_box(params))
    elif kind == "rect":
        mask = _box_mask(grid, params.get("lo", (0.3, 0.3)), params.get("hi", (0.7, 0.5)))
    elif kind == "l_shape":
        lo = np.asarray(params.get("lo", (0.3, 0.3)), dtype=float)
        hi = np.asarray(params.get("hi", (0.7, 0.7)), dtype=float)
        notch = float(params.get("notch", 0.5))
        mask = _box_mask(grid, lo, hi)
        cut = hi - notch * (hi - lo)
        c = grid.centers()
        mask &= ~np.all(c > cut, axis=-1)
    elif kind == "diamond":
        center = np.asarray(params.get("center", (0.5, 0.5)), dtype=float)
        r = float(params.get("radius", 0.2))
        if np.any(center - r < 0) or np.any(center + r > 1):
            raise GridError("diamond must lie inside the unit square")
        mask = np.abs(grid.centers() - center).sum(axis=-1) <= r
    elif kind == "two_sources":
        specs = params.get("sources") or [{"center": (0.3, 0.3), "size": 0.2},
                                          {"center": (0.7, 0.7), "size": 0.2}]
        mask = np.zeros(grid.shape, dtype=bool)
        for spec in specs:
            m = _box_mask(grid, *_square_box(spec))
            if np.any(mask & m):
                raise GridError("two_sources: the squares overlap")
            mask |= m
    else:
        raise ValueError(f"unknown phantom kind {kind!r}; expected one of {PHANTOM_KINDS}")
    if not mask.any():
        raise GridError(f"phantom {kind!r} covers no cell on a {grid.n}-grid")
    return amp * mask.astype(float)


def add_noise(d: np.ndarray, level: float, seed: int = 0,
              rng: Optional[np.random.Generator] = None) -> tuple:
    """Add white Gaussian noise with ``||eps|| = level * ||d||`` exactly.

    Returns ``(d + eps, ||eps||)``.  ``rng`` overrides ``seed`` when a shared
    generator is wanted.
    """
    if level < 0:
        raise ValueError("noise level must be nonnegative")
    d = np.asarray(d, dtype=float)
    if level == 0:
        return d.copy(), 0.0
    rng = rng if rng is not None else np.random.default_rng(seed)
    eps = rng.standard_normal(d.shape)
    target = level * np.linalg.norm(d)
    eps *= target / np.linalg.norm(eps)
    return d + eps, float(np.linalg.norm(eps))


def support_metrics(x_hat: np.ndarray, truth: np.ndarray, grid: Grid,
                    threshold_frac: float = 0.5) -> dict:
    """Jaccard index of half-max supports, centroid error and relative l2 error.

    Supports are ``x >= threshold_frac * max(x)``.  Centroids are the
    unweighted means of the support cell centers, in domain units.  An empty
    reconstructed support gives ``jaccard = 0`` and ``centroid_error = nan``
    with ``empty = True``.
    """
    if not 0 < threshold_frac < 1:
        raise ValueError("threshold_frac must lie in (0, 1)")
    x_hat = grid.check(x_hat)
    truth = grid.check(truth)
    s_true = truth >= threshold_frac * truth.max()
    peak = x_hat.max()
    s_hat = (x_hat >= threshold_frac * peak) if peak > 0 else np.zeros(grid.shape, dtype=bool)
    union = np.logical_or(s_hat, s_true).sum()
    jac = float(np.logical_and(s_hat, s_true).sum() / union) if union else 1.0
    centers = grid.centers().reshape(grid.size, -1)
    empty = not s_hat.any()
    if empty:
        cerr = float("nan")
    else:
        c_hat = centers[s_hat.ravel()].mean(axis=0)
        c_true = centers[s_true.ravel()].mean(axis=0)
        cerr = float(np.linalg.norm(c_hat - c_true))
    rel = float(np.linalg.norm(x_hat - truth) / max(np.linalg.norm(truth), 1e-300))
    return {"jaccard": jac, "centroid_error": cerr, "rel_l2": rel, "empty": empty,
            "support_size": int(s_hat.sum())}
