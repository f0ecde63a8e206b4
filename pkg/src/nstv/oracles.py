"""Independent checks of the 1D theory, the K*K decomposition and the solver.

Everything here is computed from the operator directly rather than through
the ADMM solver, so the functions double as test oracles.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import scipy.optimize as opt

from .pde import ForwardOperator, GridError
from .solver import SolverConfig, TVProblem, admm_inner
from .weights import (ProjectedOperator, WeightField, project_out_constants, shifted_heaviside,
                      weight_1d)

__all__ = [
    "ValidityError",
    "JumpSolution",
    "DualCertificate",
    "nearest_face",
    "closed_form_1d",
    "verify_closed_form",
    "dual_certificate_1d",
    "verify_operator_identity",
    "parallelism_deviation",
    "DualOracleResult",
    "dual_box_oracle",
    "lp_basis_pursuit",
    "minkowski_check",
]


class ValidityError(ValueError):
    """Parameters outside the range where the closed-form solution applies."""


def nearest_face(grid, x: float) -> int:
    """Index ``j`` (1..n-1) of the interior face ``j h`` closest to ``x``."""
    if not 0.0 < x < 1.0:
        raise GridError(f"jump location {x} must lie in (0, 1)")
    return int(min(max(round(x * grid.n), 1), grid.n - 1))


@dataclass
class JumpSolution:
    x_star: float
    face: int
    rho: float
    tau: float
    alpha: float
    gamma: float
    eta: float
    w_star: float
    field: np.ndarray

    def source(self) -> np.ndarray:
        """The unregularized source ``rho * Hbar + tau``."""
        h = self.field.shape[0]
        hb = np.where(np.arange(h) < self.face, self.face / h - 1.0, self.face / h)
        return self.rho * hb + self.tau

    def to_dict(self) -> dict:
        d = asdict(self)
        d["field"] = self.field.tolist()
        return d


def closed_form_1d(K: ForwardOperator, C: ProjectedOperator, x_star: float, rho: float,
                   tau: float, alpha: float) -> JumpSolution:
    """Minimizer ``gamma rho Hbar + eta`` of the 1D penalized problem.

    ``gamma = 1 - alpha / (|rho| ||C Hbar||)`` and
    ``eta = tau + (1 - gamma) rho (K Hbar, K1) / ||K1||^2``.  The jump is
    snapped to the nearest interior face.
    """
    grid = K.grid
    if grid.dim != 1:
        raise GridError("closed_form_1d needs a 1D grid")
    if rho == 0:
        raise ValidityError("rho must be nonzero")
    face = nearest_face(grid, x_star)
    hb = shifted_heaviside(grid, face)
    w_star = K.norm(C @ hb)
    limit = abs(rho) * w_star
    if not 0.0 < alpha < limit:
        raise ValidityError(
            f"alpha={alpha:g} outside (0, |rho| ||C Hbar||) = (0, {limit:g}); "
            "the single-jump solution needs gamma in (0, 1)")
    gamma = 1.0 - alpha / limit
    k1 = C.k1
    eta = tau + (1.0 - gamma) * rho * K.inner(K @ hb, k1) / K.inner(k1, k1)
    return JumpSolution(x_star=float(x_star), face=face, rho=float(rho), tau=float(tau),
                        alpha=float(alpha), gamma=gamma, eta=float(eta), w_star=w_star,
                        field=gamma * rho * hb + eta)


def verify_closed_form(K: ForwardOperator, C: ProjectedOperator, weights: Optional[WeightField],
                       jump: JumpSolution, config: Optional[SolverConfig] = None) -> dict:
    """Solve the penalized problem numerically and compare with ``jump``.

    Besides the relative l2 distance the report carries both objective
    values, since the 1D problem can have minimizers other than the single
    jump (see ``objective_gap``).
    """
    weights = weights or weight_1d(C)
    config = config or SolverConfig(alpha=jump.alpha, admm_tol=1e-9, max_admm_iters=20000)
    A = K.weighted_matrix()
    b = A @ jump.source()
    prob = TVProblem(A, weights)
    res = admm_inner(A, b, jump.alpha, 0.0, weights, config=config, problem=prob)
    obj_closed = prob.objective(jump.field, b, jump.alpha, 0.0)
    return {
        "rel_error": float(np.linalg.norm(res.x - jump.field) / np.linalg.norm(jump.field)),
        "objective_numeric": res.objective,
        "objective_closed_form": obj_closed,
        "objective_gap": (res.objective - obj_closed) / abs(obj_closed),
        "converged": res.converged,
        "iterations": res.iterations,
        "x": res.x,
    }


@dataclass
class DualCertificate:
    z: np.ndarray
    w: np.ndarray
    face: int
    sign: float
    bound_violation: float
    end_value: float
    pairing_error: float
    tol_bound: float = 1e-8
    tol_end: float = 1e-8
    tol_pairing: float = 1e-6

    @property
    def conditions(self) -> dict:
        return {
            "bounded": self.bound_violation <= self.tol_bound,
            "vanishes_at_ends": self.end_value <= self.tol_end,
            "pairing": self.pairing_error <= self.tol_pairing,
        }

    @property
    def ok(self) -> bool:
        return all(self.conditions.values())


def dual_certificate_1d(C: ProjectedOperator, weights: Optional[WeightField], x_star: float,
                        rho: float, alpha: float) -> DualCertificate:
    """Certificate ``z`` with ``-alpha z' = (1 - gamma) rho C*C Hbar``, ``z(0) = 0``.

    For ``rho > 0`` this is the ``|rho|`` form; for ``rho < 0`` the sign flip
    mirrors the certificate, so ``z(x*) = -w(x*)``.

    ``z`` lives on the faces ``0, h, ..., 1``.  The right-hand side is piecewise
    constant on cells, so the cumulative integral is evaluated exactly (cell
    value times ``h``).  Checks ``|z| <= w``, ``z(1) = 0`` and
    ``z(x*) = sign(rho) w(x*)``.
    """
    K = C.K
    grid = K.grid
    weights = weights or weight_1d(C)
    face = nearest_face(grid, x_star)
    hb = shifted_heaviside(grid, face)
    w_star = K.norm(C @ hb)
    if not 0.0 < alpha < abs(rho) * w_star:
        raise ValidityError("alpha outside the validity interval of the certificate")
    gamma = 1.0 - alpha / (abs(rho) * w_star)
    # C* in the (L2(E), L2(Omega)) pairing: quad / h * C^T
    cstar_c_hb = (K.quadrature / grid.h) * (C.matrix().T @ (C @ hb))
    rhs = (1.0 - gamma) * rho * cstar_c_hb
    z = np.concatenate([[0.0], -np.cumsum(rhs) * grid.h / alpha])
    w = np.concatenate([[0.0], np.asarray(weights.w, dtype=float), [0.0]])
    sign = float(np.sign(rho))
    return DualCertificate(
        z=z, w=w, face=face, sign=sign,
        bound_violation=float(np.max(np.abs(z) - w)),
        end_value=float(abs(z[-1])),
        pairing_error=float(abs(sign * z[face] - w[face])),
    )


def verify_operator_identity(K: ForwardOperator, C: Optional[ProjectedOperator] = None,
                             trials: int = 50, seed: int = 0) -> float:
    """Max relative violation of ``K*K f = C*C f + (Kf, K1)/||K1||^2 K*K1``."""
    C = C or project_out_constants(K)
    grid = K.grid
    scale = K.quadrature / grid.cell_volume
    A = K.matrix
    Cm = C.matrix()
    k1 = C.k1
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        f = rng.standard_normal(grid.size)
        kf = A @ f
        lhs = scale * (A.T @ kf)
        rhs = scale * (Cm.T @ (Cm @ f)) + (K.inner(kf, k1) / K.inner(k1, k1)) * scale * (A.T @ k1)
        worst = max(worst, float(np.linalg.norm(lhs - rhs) / np.linalg.norm(lhs)))
    return worst


def parallelism_deviation(A, cells) -> dict:
    """Angles between the columns of ``A`` on ``cells`` and the centroid column.

    The reported slack ``sec(theta_max) - 1`` bounds the relative gap
    ``(sum_i ||a_i|| x_i - ||sum_i a_i x_i||) / ||sum_i a_i x_i||`` for
    nonnegative ``x``: each column's projection on the unit centroid
    direction ``u`` is at least ``cos(theta_max) ||a_i||``.  This is an
    implementation-side estimate, not a bound taken from the theory.
    """
    A = np.asarray(A, dtype=float)
    cells = np.atleast_1d(np.asarray(cells, dtype=int))
    if cells.size == 0:
        raise ValueError("cell set R is empty")
    cols = A[:, cells]
    centroid = _centroid_cell(cells, A.shape[1])
    ref = A[:, centroid]
    u = ref / np.linalg.norm(ref)
    along = u @ cols
    # atan2 keeps tiny angles accurate where arccos(1 - eps) does not
    across = np.linalg.norm(cols - np.outer(u, along), axis=0)
    angles = np.degrees(np.arctan2(across, along))
    theta = float(angles.max())
    slack = float(1.0 / np.cos(np.radians(theta)) - 1.0) if theta < 90 else np.inf
    return {"centroid_cell": int(centroid), "max_angle_deg": theta,
            "angles_deg": angles.tolist(), "slack": slack}


def _centroid_cell(cells: np.ndarray, size: int) -> int:
    n = int(round(np.sqrt(size)))
    if n * n == size and cells.size > 1:
        ij = np.stack(np.unravel_index(cells, (n, n)), axis=1).astype(float)
        c = ij.mean(axis=0)
        return int(cells[np.argmin(((ij - c) ** 2).sum(axis=1))])
    return int(cells[len(cells) // 2])


@dataclass
class DualOracleResult:
    x: np.ndarray
    primal: float
    dual: float
    gap: float
    iterations: int


def dual_box_oracle(problem: TVProblem, b: np.ndarray, alpha: float, beta: float,
                    gtol: float = 1e-14, max_iter: int = 100000) -> DualOracleResult:
    """Certified minimizer of the penalized problem for full-column-rank ``A``.

    Writing the regularizer as ``||M x||_1`` with ``M = [alpha c G; beta W]``,
    the dual is ``max_{|u| <= 1} min_x 1/2 ||A x - b||^2 + u^T M x``.  The inner
    minimizer is ``x(u) = (A^T A)^{-1} (A^T b - M^T u)`` and the box-constrained
    dual is solved by projected quasi-Newton (L-BFGS-B).  The duality gap
    ``P(x(u)) - D(u)`` certifies the result.
    """
    A = problem.A
    blocks = []
    if problem.grad is not None and alpha > 0:
        blocks.append(alpha * problem.c[:, None] * problem.grad.matrix.toarray())
    if problem.w_tilde is not None and beta > 0:
        blocks.append(beta * np.diag(problem.w_tilde))
    M = np.vstack(blocks) if blocks else np.zeros((0, problem.n))
    AtA = problem.AtA
    if np.linalg.matrix_rank(AtA) < problem.n:
        raise ValueError("dual_box_oracle needs A with full column rank")
    L = np.linalg.cholesky(AtA)
    Atb = A.T @ b

    def x_of(u):
        rhs = Atb - M.T @ u
        return np.linalg.solve(L.T, np.linalg.solve(L, rhs))

    def neg_dual(u):
        x = x_of(u)
        r = A @ x - b
        val = 0.5 * r @ r + u @ (M @ x)
        # gradient of the dual is M x(u)
        return -val, -(M @ x)

    u0 = np.zeros(M.shape[0])
    res = opt.minimize(neg_dual, u0, jac=True, method="L-BFGS-B",
                       bounds=[(-1.0, 1.0)] * M.shape[0],
                       options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-16, "maxcor": 50})
    x = x_of(res.x)
    primal = problem.objective(x, b, alpha, beta)
    dual = -float(res.fun)
    return DualOracleResult(x=x, primal=primal, dual=dual, gap=primal - dual, iterations=int(res.nit))


def lp_basis_pursuit(problem: TVProblem, b: np.ndarray, alpha: float, beta: float) -> tuple:
    """Exact ``min alpha TV_w(x) + beta ||W x||_1`` s.t. ``A x = b`` as an LP (HiGHS).

    Returns ``(value, x)``.  Variables are ``x`` and bounds ``t >= |M x|`` for
    each row of the stacked regularizer ``M``.
    """
    from scipy.sparse import bmat, csr_matrix, diags, identity, vstack

    rows = []
    if problem.grad is not None and alpha > 0:
        rows.append(diags(alpha * problem.c) @ problem.grad.matrix)
    if problem.w_tilde is not None and beta > 0:
        rows.append(diags(beta * problem.w_tilde))
    if not rows:
        raise ValueError("nothing to minimize")
    M = csr_matrix(vstack(rows))
    k, n = M.shape
    eye = identity(k, format="csr")
    A_ub = bmat([[M, -eye], [-M, -eye]], format="csr")
    A_eq = bmat([[csr_matrix(problem.A), csr_matrix((problem.A.shape[0], k))]], format="csr")
    cost = np.concatenate([np.zeros(n), np.ones(k)])
    res = opt.linprog(cost, A_ub=A_ub, b_ub=np.zeros(2 * k), A_eq=A_eq, b_eq=np.ravel(b),
                      bounds=[(None, None)] * n + [(0, None)] * k, method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    return float(res.fun), res.x[:n]


def minkowski_check(K: ForwardOperator, weights: WeightField, fields, rel_tol: float = 1e-8) -> dict:
    """Compare ``||K f||_{L1(E)}`` with ``TVbar_w(f)`` for each field."""
    from .tv import tv_extended

    ratios = []
    for f in fields:
        lhs = K.quadrature * float(np.abs(K @ f).sum())
        rhs = tv_extended(f, weights).total
        ratios.append(lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf))
    ratios = np.asarray(ratios)
    return {"max_ratio": float(ratios.max()), "ok": bool(np.all(ratios <= 1 + rel_tol)),
            "ratios": ratios.tolist()}
