"""Discrete weighted anisotropic TV and the matching gradient operator.

Interior jumps are forward differences across interior faces; the extended
functional adds the jump from each boundary cell to the zero extension
outside the domain.  Both terms carry the face measure ``h^(dim-1)``::

    TV_w(f)     = h^(dim-1) * sum_k sum_faces w_k |D_k f|
    TVbar_w(f)  = TV_w(f) + h^(dim-1) * sum_boundary w_d |f|
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .pde import Grid, GridError, axis_difference
from .weights import WeightField

__all__ = [
    "ConfigurationError",
    "TVValue",
    "GradientOperator",
    "tv_weighted",
    "tv_extended",
    "shrink",
    "tv_value",
]


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class TVValue:
    interior: float
    boundary: float = 0.0

    @property
    def total(self) -> float:
        return self.interior + self.boundary

    def __float__(self) -> float:
        return self.total


class GradientOperator:
    """Stacked forward differences, optionally followed by boundary rows.

    ``matrix`` maps flattened cell values to the concatenation of the face
    jumps per axis (C order of each face array) and, when ``extended``, the
    boundary-cell values in ring order.  ``adjoint`` is its transpose, i.e.
    the negative discrete divergence.
    """

    def __init__(self, grid: Grid, extended: bool = False):
        self.grid = grid
        self.extended = extended
        blocks = [axis_difference(grid, k) for k in range(grid.dim)]
        self.sizes = [b.shape[0] for b in blocks]
        if extended:
            idx = grid.boundary_indices
            sel = sp.csr_matrix((np.ones(len(idx)), (np.arange(len(idx)), idx)),
                                shape=(len(idx), grid.size))
            blocks.append(sel)
            self.sizes.append(len(idx))
        self.matrix = sp.vstack(blocks, format="csr")

    @property
    def shape(self) -> tuple:
        return self.matrix.shape

    def __call__(self, f: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(f, dtype=float).ravel()

    def adjoint(self, phi: np.ndarray) -> np.ndarray:
        return self.matrix.T @ phi

    def row_weights(self, weights: WeightField) -> np.ndarray:
        """Per-row coefficient ``h^(dim-1) * w`` matching ``matrix``."""
        if weights.grid != self.grid:
            raise GridError("weights live on a different grid")
        parts = [np.asarray(a, dtype=float).ravel() for a in weights.axes]
        if self.extended:
            if weights.boundary is None:
                raise ConfigurationError("extended TV needs a boundary weight")
            parts.append(np.asarray(weights.boundary, dtype=float))
        out = np.concatenate(parts)
        if out.shape[0] != self.matrix.shape[0]:
            raise GridError("weight field does not match the face layout")
        return self.grid.boundary_weight * out


def _interior(f: np.ndarray, weights: WeightField) -> float:
    total = 0.0
    for k, w in enumerate(weights.axes):
        total += float(np.sum(w * np.abs(np.diff(f, axis=k))))
    return weights.grid.boundary_weight * total


def tv_weighted(f: np.ndarray, weights: WeightField) -> TVValue:
    """Weighted anisotropic TV with zero-flux closure (no boundary term)."""
    f = weights.grid.check(f)
    return TVValue(_interior(f, weights), 0.0)


def tv_extended(f: np.ndarray, weights: WeightField) -> TVValue:
    """TV of ``f`` extended by zero outside the domain."""
    if weights.boundary is None:
        raise ConfigurationError("extended TV needs a boundary weight")
    grid = weights.grid
    f = grid.check(f)
    bnd = np.abs(f.ravel()[grid.boundary_indices])
    return TVValue(_interior(f, weights), grid.boundary_weight * float(weights.boundary @ bnd))


def shrink(v, theta):
    """Soft thresholding ``sign(v) * max(|v| - theta, 0)``."""
    v = np.asarray(v, dtype=float)
    out = np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)
    return out if out.ndim else float(out)


def tv_value(f: np.ndarray, weights: WeightField, extended: Optional[bool] = None) -> float:
    """Scalar TV, extended when the weights carry a boundary term (or if asked)."""
    if extended is None:
        extended = weights.boundary is not None
    return (tv_extended if extended else tv_weighted)(f, weights).total
