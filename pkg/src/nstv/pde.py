"""Cell-centered finite-difference forward model.

The forward operator maps a cell-wise source ``f`` to the boundary trace of
the solution of

    -div(D grad u) + u = f   in (0,1)^dim,
    D grad u . n = 0         on the boundary,

sampled at the ring of boundary cells.  Fields are numpy arrays of shape
``grid.shape``; index ``[i, j]`` is the cell centred at ``((i+1/2)h, (j+1/2)h)``
so that axis 0 runs along x1 and axis 1 along x2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "GridError",
    "ConductivityError",
    "AssemblyError",
    "Grid",
    "ConductivityField",
    "ForwardOperator",
    "build_grid",
    "conductivity_field",
    "elliptic_matrix",
    "assemble_forward",
    "apply_forward",
    "save_operator",
    "load_operator",
]


class GridError(ValueError):
    """Invalid grid request or a field living on the wrong grid."""


class ConductivityError(ValueError):
    """Conductivity tensor that is not symmetric positive definite."""


class AssemblyError(RuntimeError):
    """Failure while factorizing or solving the discrete PDE."""


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on the unit interval or unit square.

    ``boundary_indices`` lists the observation cells in a fixed order:
    ``[left, right]`` in 1D, and in 2D counter-clockwise starting at the
    bottom-left corner cell (bottom side left to right, right side upward,
    top side right to left, left side downward).
    """

    dim: int
    n: int

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def h_exact(self) -> Fraction:
        return Fraction(1, self.n)

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def boundary_weight(self) -> float:
        """Quadrature weight of one boundary sample (h^(dim-1))."""
        return self.h ** (self.dim - 1)

    @property
    def boundary_indices(self) -> np.ndarray:
        return _boundary_ring(self.dim, self.n)

    @property
    def interior_count(self) -> int:
        return self.size - len(self.boundary_indices)

    def centers(self) -> np.ndarray:
        """Cell centres, shape ``grid.shape + (dim,)``."""
        c = (np.arange(self.n) + 0.5) * self.h
        if self.dim == 1:
            return c[:, None]
        x1, x2 = np.meshgrid(c, c, indexing="ij")
        return np.stack([x1, x2], axis=-1)

    def faces(self) -> np.ndarray:
        """Interior face positions in 1D (``j*h`` for ``j=1..n-1``)."""
        if self.dim != 1:
            raise GridError("faces() is only defined for 1D grids")
        return np.arange(1, self.n) * self.h

    def check(self, values: np.ndarray) -> np.ndarray:
        """Return ``values`` as a float array of this grid's shape."""
        arr = np.asarray(values, dtype=float)
        if arr.shape == (self.size,) and self.dim > 1:
            arr = arr.reshape(self.shape)
        if arr.shape != self.shape:
            raise GridError(f"field of shape {arr.shape} does not live on grid {self.shape}")
        return arr

    def to_dict(self) -> dict:
        return {"dim": self.dim, "n": self.n}


def _boundary_ring(dim: int, n: int) -> np.ndarray:
    if dim == 1:
        return np.array([0, n - 1])
    flat = lambda i, j: i * n + j  # noqa: E731
    bottom = [flat(i, 0) for i in range(n)]
    right = [flat(n - 1, j) for j in range(1, n)]
    top = [flat(i, n - 1) for i in range(n - 2, -1, -1)]
    left = [flat(0, j) for j in range(n - 2, 0, -1)]
    return np.array(bottom + right + top + left)


def build_grid(dim: int, n: int) -> Grid:
    """Build a uniform grid with ``n`` cells per axis.

    Raises
    ------
    GridError
        If ``dim`` is not 1 or 2, or ``n < 4``.
    """
    if dim not in (1, 2):
        raise GridError(f"dim must be 1 or 2, got {dim}")
    if int(n) != n or n < 4:
        raise GridError(f"need at least 4 cells per axis, got {n}")
    return Grid(dim=dim, n=int(n))


@dataclass(frozen=True)
class ConductivityField:
    """Conductivity sampled at cell centres.

    ``values`` has shape ``grid.shape`` in 1D and ``grid.shape + (2, 2)`` in 2D.
    """

    kind: str
    grid: Grid
    values: np.ndarray = field(repr=False)

    def axis_coefficients(self, axis: int) -> np.ndarray:
        """Per-cell diffusion coefficient along ``axis``."""
        if self.grid.dim == 1:
            return self.values
        return self.values[..., axis, axis]

    @property
    def is_diagonal(self) -> bool:
        if self.grid.dim == 1:
            return True
        return bool(np.all(self.values[..., 0, 1] == 0.0))


def _d1_tensor(x1: float, x2: float) -> np.ndarray:
    return (1.0 + 9.0 * x1) * np.diag([5.0, 1.0])


def _d2_tensor(x1: float, x2: float) -> np.ndarray:
    # mixed quadrants take the background value 1
    return (10.0 if (x1 <= 0.4 and x2 <= 0.4) else 1.0) * np.eye(2)


_PRESETS = {"D1": _d1_tensor, "D2": _d2_tensor}


def conductivity_field(kind, grid: Grid) -> ConductivityField:
    """Sample a conductivity on ``grid``.

    Parameters
    ----------
    kind : str or callable
        ``"isotropic"``, ``"D1"``, ``"D2"`` or a callable ``(x1, x2) -> 2x2``
        (``x -> scalar`` in 1D).  ``D1`` and ``D2`` are only defined in 2D.
    grid : Grid

    Raises
    ------
    ConductivityError
        If a sampled tensor is not symmetric positive definite.
    """
    centers = grid.centers()
    if callable(kind):
        func, name = kind, "custom"
    elif kind == "isotropic":
        func, name = None, "isotropic"
    elif kind in _PRESETS:
        if grid.dim != 2:
            raise ConductivityError(f"{kind} is a 2D conductivity")
        func, name = _PRESETS[kind], kind
    else:
        raise ConductivityError(f"unknown conductivity kind {kind!r}")

    if grid.dim == 1:
        if func is None:
            values = np.ones(grid.shape)
        else:
            values = np.array([float(func(x)) for x in centers[:, 0]])
        if np.any(~np.isfinite(values)) or np.any(values <= 0):
            raise ConductivityError("1D conductivity must be positive")
        return ConductivityField(name, grid, values)

    if func is None:
        values = np.broadcast_to(np.eye(2), grid.shape + (2, 2)).copy()
    else:
        values = np.empty(grid.shape + (2, 2))
        for i in range(grid.n):
            for j in range(grid.n):
                values[i, j] = np.asarray(func(*centers[i, j]), dtype=float)
    if not np.allclose(values, np.swapaxes(values, -1, -2)):
        raise ConductivityError("conductivity tensor is not symmetric")
    if np.any(~np.isfinite(values)) or np.any(np.linalg.eigvalsh(values) <= 0):
        raise ConductivityError("conductivity tensor is not positive definite")
    return ConductivityField(name, grid, values)


def _harmonic(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 2.0 * a * b / (a + b)


def face_coefficients(conductivity: ConductivityField) -> list:
    """Harmonic means of the axis coefficients on interior faces.

    Entry ``k`` has the shape of ``np.diff(field, axis=k)``.
    """
    grid = conductivity.grid
    out = []
    for axis in range(grid.dim):
        c = conductivity.axis_coefficients(axis)
        lo = np.take(c, np.arange(grid.n - 1), axis=axis)
        hi = np.take(c, np.arange(1, grid.n), axis=axis)
        out.append(_harmonic(lo, hi))
    return out


def _difference_matrix(n: int) -> sp.csr_matrix:
    """(n-1) x n forward difference, row j gives u[j+1] - u[j]."""
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")


def axis_difference(grid: Grid, axis: int) -> sp.csr_matrix:
    """Sparse forward difference along ``axis`` acting on flattened fields."""
    d = _difference_matrix(grid.n)
    if grid.dim == 1:
        return d
    eye = sp.identity(grid.n, format="csr")
    return sp.kron(d, eye, format="csr") if axis == 0 else sp.kron(eye, d, format="csr")


def boundary_face_coefficients(conductivity: ConductivityField) -> np.ndarray:
    """Sum over each cell's boundary faces of the normal coefficient.

    Zero for interior cells; corner cells collect two faces in 2D.
    """
    grid = conductivity.grid
    total = np.zeros(grid.shape)
    for axis in range(grid.dim):
        c = conductivity.axis_coefficients(axis)
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[axis] = 0
        hi[axis] = grid.n - 1
        total[tuple(lo)] += c[tuple(lo)]
        total[tuple(hi)] += c[tuple(hi)]
    return total


def elliptic_matrix(conductivity: ConductivityField, bc: str = "neumann",
                    reaction: float = 0.0) -> sp.csc_matrix:
    """Matrix of ``-div(D grad .) + reaction`` on cell values.

    ``bc="neumann"`` closes the stencil with zero flux, ``bc="dirichlet"``
    imposes ``u = 0`` on the boundary through a mirrored ghost cell (flux
    ``2 D u / h`` across each boundary face).
    """
    grid = conductivity.grid
    h2 = grid.h**2
    mat = sp.csr_matrix((grid.size, grid.size))
    for axis, kappa in enumerate(face_coefficients(conductivity)):
        d = axis_difference(grid, axis)
        mat = mat + d.T @ sp.diags(kappa.ravel()) @ d
    if bc == "dirichlet":
        mat = mat + sp.diags(2.0 * boundary_face_coefficients(conductivity).ravel())
    elif bc != "neumann":
        raise ValueError(f"unknown boundary condition {bc!r}")
    mat = mat / h2
    if reaction:
        mat = mat + reaction * sp.identity(grid.size)
    return sp.csc_matrix(mat)


@dataclass
class ForwardOperator:
    """Dense realization of the source-to-boundary-trace map.

    ``matrix[k, i]`` is the trace at boundary cell ``grid.boundary_indices[k]``
    produced by a unit value in cell ``i`` (flattened C order).  Boundary data
    carry the quadrature weight ``grid.boundary_weight`` per sample.
    """

    matrix: np.ndarray
    grid: Grid
    conductivity: ConductivityField
    _svd: Optional[tuple] = field(default=None, repr=False)
    _factor: Optional[object] = field(default=None, repr=False)

    @property
    def shape(self) -> tuple:
        return self.matrix.shape

    @property
    def quadrature(self) -> float:
        return self.grid.boundary_weight

    def weighted_matrix(self) -> np.ndarray:
        """Matrix whose Euclidean norm equals the L2(E) norm of the trace."""
        return np.sqrt(self.quadrature) * self.matrix

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        """L2(E) inner product of two boundary vectors."""
        return self.quadrature * float(np.dot(u, v))

    def norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(self.inner(u, u)))

    def svd(self) -> tuple:
        """Cached thin SVD ``(U, s, Vt)`` of the raw matrix."""
        if self._svd is None:
            self._svd = np.linalg.svd(self.matrix, full_matrices=False)
        return self._svd

    def solve_pde(self, f: np.ndarray) -> np.ndarray:
        """Full-field solution ``u`` for the source ``f`` (direct solve)."""
        f = self.grid.check(f)
        if self._factor is None:
            self._factor = spla.splu(elliptic_matrix(self.conductivity, "neumann", 1.0))
        return self._factor.solve(f.ravel()).reshape(self.grid.shape)

    def __matmul__(self, f):
        return apply_forward(self, f)


def assemble_forward(grid: Grid, conductivity: Optional[ConductivityField] = None) -> ForwardOperator:
    """Assemble the dense forward operator column by column.

    The PDE matrix is symmetric, so the boundary rows of its inverse are
    obtained from one factorization and ``|E|`` solves.
    """
    conductivity = conductivity or conductivity_field("isotropic", grid)
    if conductivity.grid != grid:
        raise GridError("conductivity sampled on a different grid")
    if not conductivity.is_diagonal:
        raise AssemblyError("the 5-point scheme supports diagonal conductivity tensors only")
    system = elliptic_matrix(conductivity, "neumann", 1.0)
    try:
        lu = spla.splu(system)
    except RuntimeError as exc:  # pragma: no cover - system is SPD
        raise AssemblyError(f"factorization failed: {exc}") from exc
    idx = grid.boundary_indices
    rhs = np.zeros((grid.size, len(idx)))
    rhs[idx, np.arange(len(idx))] = 1.0
    rows = lu.solve(rhs).T
    if not np.all(np.isfinite(rows)):
        raise AssemblyError("non-finite values in forward operator")
    return ForwardOperator(np.ascontiguousarray(rows), grid, conductivity, _factor=lu)


def apply_forward(K: ForwardOperator, f: np.ndarray) -> np.ndarray:
    """Boundary data ``K f`` for a source living on ``K.grid``."""
    f = K.grid.check(f)
    return K.matrix @ f.ravel()


def save_operator(K: ForwardOperator, path) -> Path:
    """Write ``<path>.npy`` with the matrix and ``<path>.json`` with metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path.with_suffix(".npy"), K.matrix)
    header = {
        "grid": K.grid.to_dict(),
        "conductivity": K.conductivity.kind,
        "boundary_ordering": "1D: [left, right]; 2D: counter-clockwise from bottom-left cell",
        "boundary_indices": K.grid.boundary_indices.tolist(),
        "shape": list(K.matrix.shape),
    }
    path.with_suffix(".json").write_text(json.dumps(header, indent=2))
    return path.with_suffix(".npy")


def load_operator(path, conductivity: Optional[Callable] = None) -> ForwardOperator:
    """Inverse of :func:`save_operator`.

    Custom conductivities cannot be rebuilt from the header and must be
    passed back in as the original callable.
    """
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    grid = build_grid(header["grid"]["dim"], header["grid"]["n"])
    kind = header["conductivity"]
    if kind == "custom":
        if conductivity is None:
            raise ConductivityError("custom conductivity must be supplied when loading")
        kind = conductivity
    cond = conductivity_field(kind, grid)
    matrix = np.load(path.with_suffix(".npy"))
    if list(matrix.shape) != header["shape"]:
        raise GridError("operator file does not match its header")
    return ForwardOperator(matrix, grid, cond)
