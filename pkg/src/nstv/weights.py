"""Weight fields for weighted TV and weighted l1 regularization.

Three families live here:

* the 1D weight ``w(y) = ||Q K Hbar_y||`` built from the zero-mean step
  ``Hbar_y`` and the projector ``Q`` removing ``span{K 1}`` from data space;
* the 2D TV weights ``w_i(y) = ||K d_{y_i} G(.; y)||_{L^p(E)}`` and the
  boundary weight ``w_d(y) = ||K d_n G(.; y)||`` from discrete Green's
  functions;
* sparsity weights ``||A_q^+ A e_i||`` from a truncated SVD.

TV weights live on faces: ``w1`` has shape ``(n-1, n)`` (faces normal to x1),
``w2`` has shape ``(n, n-1)``, the boundary weight is one value per boundary
cell in ``grid.boundary_indices`` order.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .pde import (
    ConductivityField,
    ForwardOperator,
    Grid,
    GridError,
    boundary_face_coefficients,
    conductivity_field,
    elliptic_matrix,
    face_coefficients,
)

__all__ = [
    "DegenerateOperatorError",
    "UnsupportedNormError",
    "WeightField",
    "SparsityWeights",
    "ProjectedOperator",
    "GreensImages",
    "project_out_constants",
    "shifted_heaviside",
    "weight_1d",
    "greens_function",
    "greens_derivative_images",
    "tv_weights_2d",
    "sparsity_weights",
    "column_norm_weights",
    "disjointness_diagnostic",
    "save_weights",
    "DEFAULT_FLOOR",
]

DEFAULT_FLOOR = 1e-6


class DegenerateOperatorError(ValueError):
    """The operator maps constants to zero."""


class UnsupportedNormError(ValueError):
    pass


@dataclass(frozen=True)
class WeightField:
    """Per-face TV weights plus optional per-boundary-cell weights."""

    grid: Grid
    axes: tuple
    boundary: Optional[np.ndarray] = None
    p_norm: float = 1.0
    floor: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def w(self) -> np.ndarray:
        return self.axes[0]

    @property
    def w1(self) -> np.ndarray:
        return self.axes[0]

    @property
    def w2(self) -> np.ndarray:
        return self.axes[1]

    @classmethod
    def unit(cls, grid: Grid, boundary: bool = True) -> "WeightField":
        """Unweighted (standard) TV, with unit boundary weight if requested.

        One unit per boundary cell (corners included), so ``TVbar(1)`` is
        ``(4n - 4) h`` in 2D.
        """
        axes = tuple(np.ones(_face_shape(grid, k)) for k in range(grid.dim))
        bnd = np.ones(len(grid.boundary_indices)) if boundary else None
        return cls(grid, axes, bnd, meta={"kind": "unit"})

    def max(self) -> float:
        vals = [a.max() for a in self.axes]
        if self.boundary is not None:
            vals.append(self.boundary.max())
        return float(max(vals))

    def floored(self, rel: float = DEFAULT_FLOOR) -> "WeightField":
        """Clip every entry from below at ``rel * max``."""
        floor = rel * self.max()
        axes = tuple(np.maximum(a, floor) for a in self.axes)
        bnd = None if self.boundary is None else np.maximum(self.boundary, floor)
        return replace(self, axes=axes, boundary=bnd, floor=floor)

    def without_boundary(self) -> "WeightField":
        return replace(self, boundary=None)


def _face_shape(grid: Grid, axis: int) -> tuple:
    shape = list(grid.shape)
    shape[axis] -= 1
    return tuple(shape)


@dataclass(frozen=True)
class SparsityWeights:
    values: np.ndarray
    q: Optional[int]
    form: str = "projection"


@dataclass
class ProjectedOperator:
    """``C = Q K`` with ``Q`` the L2(E)-orthogonal projector onto ``{K 1}^perp``."""

    K: ForwardOperator
    k1: np.ndarray

    @property
    def grid(self) -> Grid:
        return self.K.grid

    def project(self, v: np.ndarray) -> np.ndarray:
        """Project boundary data; extra trailing axes are treated as a batch."""
        v = np.asarray(v, dtype=float)
        coef = np.tensordot(self.k1, v, axes=(0, 0)) / float(self.k1 @ self.k1)
        return v - np.multiply.outer(self.k1, coef)

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.project(self.K @ f)

    def matrix(self) -> np.ndarray:
        m = self.K.matrix
        coef = (self.k1 @ m) / (self.k1 @ self.k1)
        return m - np.outer(self.k1, coef)

    def __matmul__(self, f):
        return self.apply(f)


def project_out_constants(K: ForwardOperator) -> ProjectedOperator:
    k1 = K @ np.ones(K.grid.shape)
    if K.norm(k1) == 0.0:
        raise DegenerateOperatorError("K maps the constant source to zero")
    return ProjectedOperator(K, k1)


def shifted_heaviside(grid: Grid, face: int) -> np.ndarray:
    """Zero-mean step jumping at the face ``x = face * h`` (1 <= face <= n-1).

    Equals ``y - 1`` left of ``y`` and ``y`` right of it, so its midpoint-rule
    mean is exactly zero.
    """
    if grid.dim != 1:
        raise GridError("shifted_heaviside is defined on 1D grids")
    if not 1 <= face <= grid.n - 1:
        raise GridError(f"face index {face} outside 1..{grid.n - 1}")
    y = face * grid.h
    out = np.full(grid.n, y)
    out[:face] = y - 1.0
    return out


def _lp_norm(values: np.ndarray, p: float, quad: float, axis: int = 0) -> np.ndarray:
    a = np.abs(values)
    if p == np.inf:
        return a.max(axis=axis)
    if p == 1:
        return quad * a.sum(axis=axis)
    if p == 2:
        return np.sqrt(quad * (a**2).sum(axis=axis))
    raise UnsupportedNormError(f"p must be 1, 2 or inf, got {p}")


def weight_1d(C: ProjectedOperator, p: float = 2) -> WeightField:
    """Face weights ``w(y_j) = ||C Hbar_{y_j}||_{L^p(E)}`` for ``j = 1..n-1``."""
    grid = C.grid
    if grid.dim != 1:
        raise GridError("weight_1d needs a 1D grid")
    n = grid.n
    faces = np.arange(1, n)
    y = faces * grid.h
    # row j-1 is Hbar at face j
    steps = np.where(np.arange(n)[None, :] < faces[:, None], y[:, None] - 1.0, y[:, None])
    images = C.matrix() @ steps.T
    w = _lp_norm(images, p, C.K.quadrature)
    return WeightField(grid, (w,), None, p_norm=p, meta={"kind": "projected_heaviside"})


def _greens_system(conductivity: ConductivityField, bc: str, operator: str):
    grid = conductivity.grid
    if operator == "laplacian":
        conductivity = conductivity_field("isotropic", grid)
    elif operator != "conductivity":
        raise ValueError(f"operator must be 'conductivity' or 'laplacian', got {operator!r}")
    return conductivity, elliptic_matrix(conductivity, bc)


class _NeumannSolver:
    """Zero-mean solutions of the singular Neumann system via a bordered matrix."""

    def __init__(self, mat: sp.csc_matrix):
        size = mat.shape[0]
        ones = sp.csc_matrix(np.ones((size, 1)))
        bordered = sp.bmat([[mat, ones], [ones.T, None]], format="csc")
        self._lu = spla.splu(bordered)
        self._size = size

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.atleast_1d(rhs)
        rhs = rhs - rhs.mean(axis=0)
        pad = np.zeros((1,) + rhs.shape[1:])
        return self._lu.solve(np.concatenate([rhs, pad]))[: self._size]


def _solver(mat: sp.csc_matrix, bc: str):
    return spla.splu(mat) if bc == "dirichlet" else _NeumannSolver(mat)


def greens_function(grid: Grid, y, conductivity: Optional[ConductivityField] = None,
                    bc: str = "dirichlet", operator: str = "conductivity") -> np.ndarray:
    """Discrete Green's function with source cell ``y`` (flat index or tuple).

    The point mass is ``e_y / h^dim``.  With Neumann conditions the source is
    shifted by ``-1/|Omega|`` and the solution has zero mean.
    """
    conductivity = conductivity or conductivity_field("isotropic", grid)
    _, mat = _greens_system(conductivity, bc, operator)
    idx = np.ravel_multi_index(y, grid.shape) if isinstance(y, tuple) else int(y)
    delta = np.zeros(grid.size)
    delta[idx] = 1.0 / grid.cell_volume
    if bc == "neumann":
        delta -= 1.0
    return _solver(mat, bc).solve(delta).reshape(grid.shape)


@dataclass
class GreensImages:
    """Images under K of the conormal Green's derivatives ``D d_{y_i} G(.; y)``.

    ``axes[k]`` has shape ``(|E|,) + face_shape(k)``; ``boundary`` has shape
    ``(|E|, n_boundary)`` and holds ``K d_n G`` (outward normal) summed over
    each boundary cell's boundary faces.  They represent the data exactly::

        K f = h^(dim-1) * (sum_faces (D f) * axes - sum_boundary f * boundary)
    """

    grid: Grid
    axes: tuple
    boundary: Optional[np.ndarray]
    bc: str
    operator: str

    def data_from_field(self, f: np.ndarray) -> np.ndarray:
        f = self.grid.check(f)
        total = 0.0
        for k, img in enumerate(self.axes):
            jumps = np.diff(f, axis=k)
            total = total + np.tensordot(img, jumps, axes=self.grid.dim)
        if self.boundary is not None:
            total = total - self.boundary @ f.ravel()[self.grid.boundary_indices]
        return self.grid.boundary_weight * total


def greens_derivative_images(K: ForwardOperator, conductivity: Optional[ConductivityField] = None,
                             bc: str = "dirichlet", operator: str = "conductivity") -> GreensImages:
    """Push the discrete Green's derivatives of every face through ``K``.

    ``K G`` is formed from ``|E|`` solves with the (symmetric) Green's
    operator instead of one solve per cell.
    """
    grid = K.grid
    conductivity = conductivity or K.conductivity
    cond, mat = _greens_system(conductivity, bc, operator)
    solver = _solver(mat, bc)
    # columns of KG are K G(.; y) for every cell y
    kg = solver.solve(np.ascontiguousarray(K.matrix.T)).T / grid.cell_volume
    kg = kg.reshape((K.shape[0],) + grid.shape)
    h = grid.h
    axes = []
    for k, kappa in enumerate(face_coefficients(cond)):
        axes.append(kappa[None] * np.diff(kg, axis=k + 1) / h)
    boundary = None
    if bc == "dirichlet":
        coef = boundary_face_coefficients(cond).ravel()[grid.boundary_indices]
        flat = kg.reshape(K.shape[0], -1)[:, grid.boundary_indices]
        boundary = -2.0 * coef[None, :] * flat / h
    return GreensImages(grid, tuple(axes), boundary, bc, operator)


def tv_weights_2d(K: ForwardOperator, conductivity: Optional[ConductivityField] = None,
                  p: float = np.inf, bc: str = "dirichlet", operator: str = "conductivity",
                  floor: Optional[float] = DEFAULT_FLOOR,
                  images: Optional[GreensImages] = None) -> WeightField:
    """TV weights ``||K D d_{y_i} G(.; y)||_{L^p(E)}`` on every face.

    ``floor`` is relative to the largest weight; pass ``None`` for the raw
    field (needed for the exact Minkowski bound).
    """
    if p not in (1, 2, np.inf):
        raise UnsupportedNormError(f"p must be 1, 2 or inf, got {p}")
    if K.grid.dim != 2:
        raise GridError("tv_weights_2d needs a 2D grid")
    images = images or greens_derivative_images(K, conductivity, bc, operator)
    quad = K.quadrature
    axes = tuple(_lp_norm(img, p, quad) for img in images.axes)
    boundary = None if images.boundary is None else _lp_norm(images.boundary, p, quad)
    meta = {"kind": "greens", "bc": bc, "operator": operator,
            "conductivity": (conductivity or K.conductivity).kind}
    wf = WeightField(K.grid, axes, boundary, p_norm=p, meta=meta)
    return wf if floor is None else wf.floored(floor)


def _numerical_rank(s: np.ndarray, shape: tuple) -> int:
    if s.size == 0:
        return 0
    tol = s[0] * max(shape) * np.finfo(float).eps
    return int(np.sum(s > tol))


def sparsity_weights(K: ForwardOperator, q: int = 120) -> SparsityWeights:
    """``w_i = ||A_q^+ A e_i||``, the norms of the rows of ``V_q``.

    ``A_q^+ A`` is the orthogonal projector onto the span of the top ``q``
    right singular vectors.  ``q`` larger than the numerical rank is clamped
    with a warning.
    """
    _, s, vt = K.svd()
    rank = _numerical_rank(s, K.shape)
    if q > rank:
        warnings.warn(f"q={q} exceeds numerical rank {rank}; using q={rank}", stacklevel=2)
        q = rank
    w = np.linalg.norm(vt[:q], axis=0)
    return SparsityWeights(w.reshape(K.grid.shape), q, "projection")


def column_norm_weights(A) -> SparsityWeights:
    """``w_i = ||A e_i||_2`` (the point-source image norm)."""
    m = A.weighted_matrix() if isinstance(A, ForwardOperator) else np.asarray(A)
    w = np.linalg.norm(m, axis=0)
    if isinstance(A, ForwardOperator):
        w = w.reshape(A.grid.shape)
    return SparsityWeights(w, None, "column")


_SIDE_NAMES = ("left", "bottom", "right", "top")


def _side_membership(grid: Grid) -> np.ndarray:
    """(n_boundary, 4) membership of each ring sample in left/bottom/right/top."""
    i, j = np.unravel_index(grid.boundary_indices, grid.shape)
    n = grid.n
    member = np.stack([i == 0, j == 0, i == n - 1, j == n - 1], axis=1).astype(float)
    # corner samples split their mass between both sides
    return member / member.sum(axis=1, keepdims=True)


def disjointness_diagnostic(K: ForwardOperator, rect, conductivity=None,
                            images: Optional[GreensImages] = None,
                            project_constants: bool = True) -> list:
    """Concentration and sign-coherence of the edge images of a rectangle.

    For each edge of ``rect = (a, b, c, d)`` (``[a, b] x [c, d]`` snapped to
    faces) the function forms ``v = K int_edge grad_y G . n`` and reports the
    fraction of ``||v||_1`` carried by each side of the square, the dominant
    side, and on that side the fraction of samples where the per-face images
    all share one sign.

    With ``project_constants`` the component along ``K 1`` is removed from
    every image first.  The edge integral of the Dirichlet Green's derivative
    has a nonzero mean, and since ``K 1 = 1`` that monopole part is spread
    evenly over the boundary and masks the dipole structure the concentration
    argument is about.
    """
    grid = K.grid
    if grid.dim != 2:
        raise GridError("disjointness_diagnostic needs a 2D grid")
    n = grid.n
    a, b, c, d = (int(round(v * n)) for v in rect)
    if not (1 <= a < b <= n - 1 and 1 <= c < d <= n - 1):
        raise GridError(f"rectangle {rect} must lie strictly inside the domain")
    images = images or greens_derivative_images(K, conductivity)
    f1, f2 = images.axes
    edges = {
        "left": (-f1[:, a - 1, c:d], "left"),
        "bottom": (-f2[:, a:b, c - 1], "bottom"),
        "right": (f1[:, b - 1, c:d], "right"),
        "top": (f2[:, a:b, d - 1], "top"),
    }
    member = _side_membership(grid)
    if project_constants:
        C = project_out_constants(K)
    report = []
    for name, (per_face, expected) in edges.items():
        if project_constants:
            per_face = C.project(per_face)
        v = grid.h * per_face.sum(axis=1)
        mass = np.abs(v) @ member
        fractions = mass / mass.sum()
        dom = int(np.argmax(fractions))
        on_side = member[:, dom] > 0
        signs = np.sign(per_face[on_side])
        coherent = np.all(signs == signs[:, :1], axis=1)
        report.append({
            "edge": name,
            "fractions": dict(zip(_SIDE_NAMES, fractions.tolist())),
            "dominant_side": _SIDE_NAMES[dom],
            "expected_side": expected,
            "dominant_fraction": float(fractions[dom]),
            "sign_coherence": float(coherent.mean()),
            "projected": bool(project_constants),
        })
    return report


def save_weights(weights: WeightField, path) -> Path:
    """CSV with one row per face (and per boundary cell) plus JSON metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid = weights.grid
    h = grid.h
    with path.with_suffix(".csv").open("w", newline="") as fh:
        out = csv.writer(fh)
        if grid.dim == 1:
            out.writerow(["index", "x", "w"])
            for j, val in enumerate(weights.w):
                out.writerow([j, repr((j + 1) * h), repr(float(val))])
        else:
            out.writerow(["kind", "index", "x1", "x2", "weight"])
            for k, arr in enumerate(weights.axes):
                for idx in np.ndindex(arr.shape):
                    pos = [(idx[0] + 0.5) * h, (idx[1] + 0.5) * h]
                    pos[k] += 0.5 * h
                    flat = int(np.ravel_multi_index(idx, arr.shape))
                    out.writerow([f"w{k + 1}", flat, repr(pos[0]), repr(pos[1]), repr(float(arr[idx]))])
            if weights.boundary is not None:
                centers = grid.centers().reshape(-1, 2)
                for cell, val in zip(grid.boundary_indices, weights.boundary):
                    x1, x2 = centers[cell]
                    out.writerow(["w_boundary", int(cell), repr(x1), repr(x2), repr(float(val))])
    meta = {"grid": grid.to_dict(), "p": "inf" if weights.p_norm == np.inf else weights.p_norm,
            "floor": weights.floor, **weights.meta}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path.with_suffix(".csv")
