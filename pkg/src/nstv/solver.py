"""ADMM for the penalized problem and Bregman iteration around it.

The inner problem is::

    min_x  1/2 ||A x - b||^2 + alpha * sum_r c_r |(G x)_r| + beta * sum_i wt_i |x_i|

with ``G`` the (optionally extended) gradient and ``c`` its row weights.
ADMM splits ``z1 = G x`` and, when ``beta > 0``, ``z2 = x``; the x-update
solves with ``A^T A + rho (G^T G + I)``.  When ``G^T G (+ I)`` is nonsingular
and ``A`` is wide this goes through a sparse factorization and the Woodbury
identity, so a new penalty only costs a small dense Cholesky.  Internally ``A``
is divided by its spectral norm (and ``alpha``, ``beta`` by its square), which
leaves the minimizer unchanged and keeps ``rho = 1`` a reasonable start.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .tv import ConfigurationError, GradientOperator, shrink
from .weights import WeightField

__all__ = [
    "SolverConfig",
    "AdmmResult",
    "SolveReport",
    "HybridBoundsReport",
    "TVProblem",
    "objective",
    "admm_inner",
    "bregman_outer",
    "basis_pursuit",
    "constrained_admm",
    "hybrid_bounds_check",
    "l1_minimum",
]

log = logging.getLogger(__name__)

# weight of the proximal identity term used for the non-extended TV-only x-update
PROX_EPS = 1e-6
# penalty adaptation schedule of the constrained solver
ADAPT_EVERY = 10
ADAPT_LIMIT = 50


@dataclass
class SolverConfig:
    alpha: float = 1e-3
    beta: float = 0.0
    admm_penalty: float = 1.0
    max_admm_iters: int = 5000
    admm_tol: float = 1e-6
    max_bregman_iters: int = 50
    morozov_tau: float = 1.0
    constraint_tol: float = 1e-8
    adapt_penalty: bool = True
    seed: int = 0

    def validate(self, penalized: bool = True) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ConfigurationError("alpha and beta must be nonnegative")
        if penalized and self.alpha == 0 and self.beta == 0:
            raise ConfigurationError("alpha and beta cannot both be zero")
        if self.admm_tol <= 0 or self.constraint_tol <= 0 or self.admm_penalty <= 0:
            raise ConfigurationError("tolerances and the ADMM penalty must be positive")


class TVProblem:
    """Operator-side data shared by all solves on one ``(A, weights)`` pair.

    Caches the Cholesky factor of the x-update matrix per penalty value.
    """

    def __init__(self, A: np.ndarray, weights: Optional[WeightField] = None,
                 w_tilde: Optional[np.ndarray] = None, extended: Optional[bool] = None):
        self.A = np.asarray(A, dtype=float)
        self.n = self.A.shape[1]
        self.weights = weights
        if weights is not None:
            if extended is None:
                extended = weights.boundary is not None
            self.grad = GradientOperator(weights.grid, extended)
            self.c = self.grad.row_weights(weights)
            if self.grad.shape[1] != self.n:
                raise ConfigurationError("operator and weights disagree on the number of unknowns")
        else:
            self.grad = None
            self.c = np.zeros(0)
        self.w_tilde = None if w_tilde is None else np.asarray(w_tilde, dtype=float).ravel()
        self._factors = {}

    @cached_property
    def AtA(self) -> np.ndarray:
        return self.A.T @ self.A

    @cached_property
    def scale(self) -> float:
        """Spectral norm of ``A``; ADMM runs on ``A / scale``."""
        s = float(np.linalg.norm(self.A, 2)) if self.A.size else 0.0
        return s if s > 0 else 1.0

    @cached_property
    def An(self) -> np.ndarray:
        return self.A / self.scale

    @cached_property
    def GtG(self) -> np.ndarray:
        if self.grad is None:
            return np.zeros((self.n, self.n))
        return (self.grad.matrix.T @ self.grad.matrix).toarray()

    @property
    def extended(self) -> bool:
        return bool(self.grad is not None and self.grad.extended)

    def grad_apply(self, x: np.ndarray) -> np.ndarray:
        return self.grad(x) if self.grad is not None else np.zeros(0)

    def grad_adjoint(self, phi: np.ndarray) -> np.ndarray:
        return self.grad.adjoint(phi) if self.grad is not None else np.zeros(self.n)

    def _splitting(self, eye: float):
        """Sparse factor of ``M = G^T G + eye I`` and the Woodbury blocks, or None.

        Only used when ``M`` is nonsingular (extended gradient or ``eye > 0``)
        and ``A`` has fewer rows than columns.
        """
        key = ("split", eye)
        if key not in self._factors:
            entry = None
            if self.A.shape[0] < self.n and (eye > 0 or self.extended):
                if self.grad is not None:
                    M = sp.csc_matrix(self.grad.matrix.T @ self.grad.matrix)
                else:
                    M = sp.csc_matrix((self.n, self.n))
                if eye > 0:
                    M = M + eye * sp.identity(self.n, format="csc")
                lu = spla.splu(sp.csc_matrix(M))
                Y = lu.solve(np.ascontiguousarray(self.An.T))
                entry = (lu, Y, self.An @ Y)
            self._factors[key] = entry
        return self._factors[key]

    def factor(self, rho: float, eye: float = 0.0):
        """Solver for ``(An^T An + rho (G^T G + eye I)) x = r``, cached per ``rho``."""
        key = (rho, eye)
        if key not in self._factors:
            split = self._splitting(eye)
            if split is not None:
                lu, Y, S = split
                small = sla.cho_factor(rho * np.eye(S.shape[0]) + S)

                def solve(r, lu=lu, Y=Y, small=small):
                    v = lu.solve(r)
                    return (v - Y @ sla.cho_solve(small, self.An @ v)) / rho
            else:
                mat = self.AtA / self.scale**2 + rho * self.GtG
                if eye > 0:
                    mat = mat + rho * eye * np.eye(self.n)
                fac = sla.cho_factor(mat)

                def solve(r, fac=fac):
                    return sla.cho_solve(fac, r)
            self._factors[key] = solve
        return self._factors[key]

    def tv(self, x: np.ndarray) -> float:
        if self.grad is None:
            return 0.0
        return float(self.c @ np.abs(self.grad_apply(x)))

    def l1(self, x: np.ndarray) -> float:
        if self.w_tilde is None:
            return 0.0
        return float(self.w_tilde @ np.abs(np.ravel(x)))

    def objective(self, x: np.ndarray, b: np.ndarray, alpha: float, beta: float) -> float:
        r = self.A @ np.ravel(x) - b
        return 0.5 * float(r @ r) + alpha * self.tv(x) + beta * self.l1(x)


def objective(A, b, x, alpha, beta, weights=None, w_tilde=None, extended=None) -> float:
    """Value of the penalized functional (convenience wrapper)."""
    return TVProblem(A, weights, w_tilde, extended).objective(x, b, alpha, beta)


@dataclass
class AdmmResult:
    x: np.ndarray
    iterations: int
    converged: bool
    primal_residual: float
    dual_residual: float
    objective: float
    penalty: float


def admm_inner(A, b, alpha: float, beta: float, weights: Optional[WeightField] = None,
               w_tilde=None, config: Optional[SolverConfig] = None, x0=None,
               problem: Optional[TVProblem] = None, extended: Optional[bool] = None) -> AdmmResult:
    """Minimize the penalized functional with scaled-form ADMM.

    Stops when both the primal residual ``||Kx - z||`` and the dual residual
    ``rho ||K^T (z - z_old)||`` (``K`` the stacked splitting operator) fall
    below ``admm_tol`` relative to the size of the iterates.  The penalty is
    adapted by residual balancing (factor 2 when one residual exceeds the
    other tenfold).  Non-convergence is reported, not raised.
    """
    config = config or SolverConfig(alpha=alpha, beta=beta)
    if alpha < 0 or beta < 0 or (alpha == 0 and beta == 0 and weights is None and w_tilde is None):
        config.validate(penalized=False)
    prob = problem or TVProblem(A, weights, w_tilde, extended)
    b = np.asarray(b, dtype=float).ravel()
    n = prob.n
    use_l1 = beta > 0 and prob.w_tilde is not None
    use_tv = prob.grad is not None
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).ravel().copy()
    start_obj = prob.objective(x, b, alpha, beta)
    zero_obj = prob.objective(np.zeros(n), b, alpha, beta)

    rho = config.admm_penalty
    z1 = prob.grad_apply(x)
    u1 = np.zeros_like(z1)
    z2 = x.copy()
    u2 = np.zeros(n)
    # work with A / ||A|| so that rho ~ 1 is a sensible scale
    s2 = prob.scale**2
    Atb = prob.An.T @ (b / prob.scale)
    # identity block: the l1 split, or a proximal term (rho eye / 2)||x - x_prev||^2
    # that makes the x-update nonsingular / sparse-factorizable
    if use_l1 or not use_tv:
        eye = 1.0
    elif not prob.extended and prob.A.shape[0] < n:
        eye = PROX_EPS
    else:
        eye = 0.0
    tv_thr = (alpha / s2) * prob.c
    l1_thr = (beta / s2) * prob.w_tilde if use_l1 else None
    abs_tol = 1e-3 * config.admm_tol * max(1.0, np.sqrt(n))

    r_norm = s_norm = np.inf
    converged = False
    it = 0
    for it in range(1, config.max_admm_iters + 1):
        rhs = Atb.copy()
        if use_tv:
            rhs += rho * prob.grad_adjoint(z1 - u1)
        if use_l1:
            rhs += rho * (z2 - u2)
        elif eye > 0:
            rhs += rho * eye * x
        x_old = x
        x = prob.factor(rho, eye)(rhs)

        gx = prob.grad_apply(x)
        z1_old, z2_old = z1, z2
        if use_tv:
            z1 = shrink(gx + u1, tv_thr / rho)
            u1 = u1 + gx - z1
        if use_l1:
            z2 = shrink(x + u2, l1_thr / rho)
            u2 = u2 + x - z2
        else:
            z2 = x

        r_sq = float(np.sum((gx - z1) ** 2)) if use_tv else 0.0
        dual = prob.grad_adjoint(z1 - z1_old) if use_tv else np.zeros(n)
        if use_l1:
            r_sq += float(np.sum((x - z2) ** 2))
            dual = dual + (z2 - z2_old)
        elif eye > 0:
            dual = dual + eye * (x - x_old)
        r_norm = np.sqrt(r_sq)
        s_norm = rho * float(np.linalg.norm(dual))

        scale_pri = max(np.sqrt(np.sum(gx**2) + (np.sum(x**2) if use_l1 else 0.0)),
                        np.sqrt(np.sum(z1**2) + (np.sum(z2**2) if use_l1 else 0.0)))
        scale_dual = max(rho * np.sqrt(np.sum(prob.grad_adjoint(u1) ** 2 if use_tv else 0.0)
                                       + (np.sum(u2**2) if use_l1 else 0.0)),
                         float(np.linalg.norm(Atb)))
        eps_pri = abs_tol + config.admm_tol * scale_pri
        eps_dual = abs_tol + config.admm_tol * scale_dual
        if r_norm <= eps_pri and s_norm <= eps_dual:
            converged = True
            break

        if config.adapt_penalty:
            if r_norm > 10.0 * s_norm and r_norm > eps_pri:
                rho *= 2.0
                u1, u2 = u1 / 2.0, u2 / 2.0
            elif s_norm > 10.0 * r_norm and s_norm > eps_dual:
                rho /= 2.0
                u1, u2 = u1 * 2.0, u2 * 2.0

    obj = prob.objective(x, b, alpha, beta)
    # never hand back something worse than the starting points
    if not converged:
        if start_obj < obj:
            x, obj = (np.zeros(n) if x0 is None else np.asarray(x0, float).ravel().copy()), start_obj
        if zero_obj < obj:
            x, obj = np.zeros(n), zero_obj
    return AdmmResult(x, it, converged, float(r_norm), float(s_norm), obj, rho)


def _constrained_blocks(prob: TVProblem):
    """Cholesky ``M = L L^T`` of ``G^T G + I`` and the thin SVD of ``A L^{-T}``."""
    key = "constrained"
    if key not in prob._factors:
        M = prob.GtG + np.eye(prob.n)
        L = np.linalg.cholesky(M)
        B = sla.solve_triangular(L, prob.A.T, lower=True).T
        U, sv, Vt = np.linalg.svd(B, full_matrices=False)
        keep = sv > 1e-13 * sv[0]
        prob._factors[key] = (L, U[:, keep], sv[keep], Vt[keep])
    return prob._factors[key]


def constrained_admm(A, b, alpha: float, beta: float, weights: Optional[WeightField] = None,
                     w_tilde=None, config: Optional[SolverConfig] = None, x0=None,
                     problem: Optional[TVProblem] = None,
                     extended: Optional[bool] = None) -> AdmmResult:
    """ADMM for ``min alpha TV_w(x) + beta ||W x||_1`` subject to ``A x = b``.

    Splits ``z1 = G x`` and ``z2 = x``.  The x-update minimizes
    ``||G x - v1||^2 + ||x - v2||^2`` on the affine set; with ``M = G^T G + I =
    L L^T`` this is a Euclidean projection in ``y = L^T x`` computed from the
    SVD of ``A L^{-T}``, so every iterate satisfies the constraint up to
    rounding.  ``objective`` in the result is the regularizer value.
    """
    config = config or SolverConfig(alpha=alpha, beta=beta)
    prob = problem or TVProblem(A, weights, w_tilde, extended)
    b = np.asarray(b, dtype=float).ravel()
    n = prob.n
    use_tv = prob.grad is not None and alpha > 0
    use_l1 = prob.w_tilde is not None and beta > 0
    if not (use_tv or use_l1):
        raise ConfigurationError("constrained_admm needs a TV or l1 term")
    L, U, sv, Vt = _constrained_blocks(prob)
    ub = (U.T @ b) / sv

    def project(r):
        # minimize 1/2 x^T M x - r^T x on {A x = b}; B y = b with y = L^T x
        y = sla.solve_triangular(L, r, lower=True)
        y = y - Vt.T @ (Vt @ y) + Vt.T @ ub
        return sla.solve_triangular(L, y, lower=True, trans="T")

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).ravel().copy()
    x = project(prob.grad_adjoint(prob.grad_apply(x)) + x)
    z1 = prob.grad_apply(x)
    z2 = x.copy()
    u1 = np.zeros_like(z1)
    u2 = np.zeros(n)
    c = prob.c if prob.grad is not None else np.zeros(0)
    tv_thr = alpha * c
    l1_thr = beta * prob.w_tilde if use_l1 else np.zeros(n)
    thr_scale = np.concatenate([tv_thr, l1_thr])
    rho = config.admm_penalty * float(np.mean(thr_scale[thr_scale > 0]))
    abs_tol = 1e-3 * config.admm_tol * max(1.0, np.sqrt(n))

    r_norm = s_norm = np.inf
    converged = False
    it = changes = 0
    for it in range(1, config.max_admm_iters + 1):
        x = project(prob.grad_adjoint(z1 - u1) + (z2 - u2))
        gx = prob.grad_apply(x)
        z1_old, z2_old = z1, z2
        z1 = shrink(gx + u1, tv_thr / rho) if use_tv else gx + u1
        z2 = shrink(x + u2, l1_thr / rho) if use_l1 else x + u2
        u1 = u1 + gx - z1
        u2 = u2 + x - z2

        r_norm = float(np.sqrt(np.sum((gx - z1) ** 2) + np.sum((x - z2) ** 2)))
        s_norm = rho * float(np.linalg.norm(prob.grad_adjoint(z1 - z1_old) + (z2 - z2_old)))
        scale_pri = max(np.sqrt(np.sum(gx**2) + np.sum(x**2)), np.sqrt(np.sum(z1**2) + np.sum(z2**2)))
        scale_dual = rho * float(np.linalg.norm(prob.grad_adjoint(u1) + u2))
        eps_pri = abs_tol + config.admm_tol * scale_pri
        eps_dual = abs_tol + config.admm_tol * scale_dual
        if r_norm <= eps_pri and s_norm <= eps_dual:
            converged = True
            break
        # unrestricted balancing can cycle here, so it is rationed
        if config.adapt_penalty and it % ADAPT_EVERY == 0 and changes < ADAPT_LIMIT:
            if r_norm > 10.0 * s_norm and r_norm > eps_pri:
                rho *= 2.0
                u1, u2 = u1 / 2.0, u2 / 2.0
                changes += 1
            elif s_norm > 10.0 * r_norm and s_norm > eps_dual:
                rho /= 2.0
                u1, u2 = u1 * 2.0, u2 * 2.0
                changes += 1

    obj = alpha * prob.tv(x) + beta * prob.l1(x)
    return AdmmResult(x, it, converged, float(r_norm), float(s_norm), obj, rho)


@dataclass
class SolveReport:
    reconstruction: np.ndarray
    objective_trajectory: list
    data_residual_trajectory: list
    bregman_iters_used: int
    stop_reason: str
    inner_iterations: list = field(default_factory=list)
    inner_converged: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    noise_norm: Optional[float] = None

    @property
    def final_residual(self) -> float:
        return self.data_residual_trajectory[-1]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "stop_reason": self.stop_reason,
            "bregman_iters_used": self.bregman_iters_used,
            "noise_norm": self.noise_norm,
            "final_residual": self.final_residual,
            "objective_trajectory": [float(v) for v in self.objective_trajectory],
            "data_residual_trajectory": [float(v) for v in self.data_residual_trajectory],
            "inner_iterations": [int(v) for v in self.inner_iterations],
            "inner_converged": [bool(v) for v in self.inner_converged],
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return path


def bregman_outer(A, d, alpha: float, beta: float, weights: Optional[WeightField] = None,
                  w_tilde=None, noise_norm: Optional[float] = None,
                  config: Optional[SolverConfig] = None, extended: Optional[bool] = None,
                  problem: Optional[TVProblem] = None, warm_start: bool = True) -> SolveReport:
    """Bregman iteration ``b_{k+1} = b_k + (d - A x_k)`` with Morozov stopping.

    Iterates stop at the first ``k`` with ``||A x_k - d|| <= tau * noise_norm``.
    A step that would increase the data residual is rejected and ends the
    iteration (``stop_reason="stagnated"``); the accepted residuals are
    therefore non-increasing.
    """
    config = config or SolverConfig(alpha=alpha, beta=beta)
    config.validate()
    if noise_norm is None or noise_norm <= 0:
        raise ConfigurationError("noise_norm must be positive")
    prob = problem or TVProblem(A, weights, w_tilde, extended)
    d = np.asarray(d, dtype=float).ravel()
    target = config.morozov_tau * noise_norm
    b = d.copy()
    x = None
    objs, resids, inner_its, inner_ok = [], [], [], []
    reason = "max_iters"
    for k in range(config.max_bregman_iters):
        res = admm_inner(prob.A, b, alpha, beta, config=config, problem=prob,
                         x0=x if warm_start else None)
        resid = float(np.linalg.norm(prob.A @ res.x - d))
        if resids and resid > resids[-1] + 1e-10 * max(1.0, resids[-1]):
            reason = "stagnated"
            break
        x = res.x
        objs.append(prob.objective(x, d, alpha, beta))
        resids.append(resid)
        inner_its.append(res.iterations)
        inner_ok.append(res.converged)
        log.debug("bregman %d: residual %.3e target %.3e (admm %d its)", k, resid, target, res.iterations)
        if resid <= target:
            reason = "morozov"
            break
        b = b + (d - prob.A @ x)
    if x is None:
        x = np.zeros(prob.n)
        objs.append(prob.objective(x, d, alpha, beta))
        resids.append(float(np.linalg.norm(d)))
    return SolveReport(x, objs, resids, len(resids), reason, inner_its, inner_ok,
                       config=asdict(config), noise_norm=noise_norm)


def basis_pursuit(A, b, weights: Optional[WeightField] = None, w_tilde=None, mode: str = "tv",
                  gamma: float = 1.0, config: Optional[SolverConfig] = None,
                  extended: Optional[bool] = None, scale: float = 1.0,
                  method: str = "bregman") -> SolveReport:
    """Equality-constrained minimization of the chosen regularizer.

    ``mode`` selects the regularizer: ``"tv"`` (``TV_w``), ``"l1"``
    (``||W x||_1``) or ``"hybrid"`` (``gamma TV_w + ||W x||_1``).

    ``method="bregman"`` runs Bregman iterations to the tolerance
    ``constraint_tol * ||b||``; ``scale`` multiplies the regularizer inside
    each penalized subproblem, which changes the path but not the limit.
    ``method="admm"`` solves the constrained problem directly with
    ``constrained_admm`` (feasible iterates).  A run that does not reach the
    tolerance ends with ``stop_reason="max_iters"``.
    """
    config = config or SolverConfig()
    if mode == "tv":
        alpha, beta = scale, 0.0
        w_tilde = None
    elif mode == "l1":
        alpha, beta = 0.0, scale
        weights = None
    elif mode == "hybrid":
        alpha, beta = scale * gamma, scale
    else:
        raise ConfigurationError(f"unknown mode {mode!r}")
    b = np.asarray(b, dtype=float).ravel()
    tol = config.constraint_tol * float(np.linalg.norm(b))
    cfg = SolverConfig(**{**asdict(config), "alpha": alpha, "beta": beta, "morozov_tau": 1.0})
    prob = TVProblem(A, weights if alpha > 0 else None, w_tilde, extended)
    if method == "bregman":
        report = bregman_outer(A, b, alpha, beta, noise_norm=tol, config=cfg, problem=prob)
        if report.stop_reason == "morozov":
            report.stop_reason = "constraint_met"
        return report
    if method != "admm":
        raise ConfigurationError(f"unknown basis-pursuit method {method!r}")
    res = constrained_admm(A, b, alpha, beta, config=cfg, problem=prob)
    resid = float(np.linalg.norm(prob.A @ res.x - b))
    reason = "constraint_met" if resid <= tol and res.converged else "max_iters"
    return SolveReport(res.x, [res.objective], [resid], 1, reason, [res.iterations],
                       [res.converged], config=asdict(cfg), noise_norm=tol)


def l1_minimum(A, b, w_tilde) -> tuple:
    """``min ||W x||_1  s.t.  A x = b`` as a linear program (HiGHS).

    Returns ``(value, x)``.  Used to bound how far a candidate is from the
    sparsity basis-pursuit optimum.
    """
    from scipy.optimize import linprog

    A = np.asarray(A, dtype=float)
    w = np.asarray(w_tilde, dtype=float).ravel()
    n = A.shape[1]
    cost = np.concatenate([w, w])
    res = linprog(cost, A_eq=np.hstack([A, -A]), b_eq=np.asarray(b, float).ravel(),
                  bounds=[(0, None)] * (2 * n), method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    x = res.x[:n] - res.x[n:]
    return float(w @ np.abs(x)), x


@dataclass
class HybridBoundsReport:
    tv_ok: bool
    l1_ok: bool
    tv_gamma: float
    tv_star: float
    l1_gap: float
    upper: float
    slack_tv: float
    slack_l1_lower: float
    slack_l1_upper: float
    constraint_residual: float
    l1_defect: float
    lip_tv: float
    lip_l1: float
    inconclusive: bool = False

    @property
    def ok(self) -> bool:
        return self.tv_ok and self.l1_ok and not self.inconclusive

    def to_dict(self) -> dict:
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else float(v))
                for k, v in asdict(self).items()}


def _row_norm_sum(M: np.ndarray) -> float:
    # bound on the 2 -> 1 operator norm
    return float(np.linalg.norm(M, axis=1).sum())


def hybrid_bounds_check(x_gamma, x_star, gamma: float, weights: WeightField, w_tilde, A,
                        constraint_tol: float = 1e-8, extended: Optional[bool] = None,
                        l1_opt: Optional[float] = None) -> HybridBoundsReport:
    """Check ``TV(x_g) <= TV(x*)`` and ``0 <= l1(x_g) - l1(x*) <= gamma TV(x*)``.

    Both bounds hold exactly when ``x*`` minimizes ``||W x||_1`` on the
    constraint set and ``x_g`` minimizes ``gamma TV + l1`` there.  The slacks
    account for two effects:

    * ``defect = ||W x*||_1 - m`` with ``m`` the sparsity basis-pursuit
      optimum (computed by LP unless ``l1_opt`` is given);
    * the inexact constraint.  With ``r = A x_g - b`` the point
      ``x_g - A^+ r`` is feasible and each regularizer changes by at most
      ``L ||r||``, where ``L`` is the sum of row norms of ``M A^+``
      (``M`` the weighted gradient or ``W``).

    This gives ``TV(x_g) <= TV(x*) + defect / gamma + L_tv ||r||`` and
    ``-defect - L_l1 ||r|| <= gap <= gamma TV(x*) + L_l1 ||r||``.

    A constraint residual above ``100 * constraint_tol * ||A x*||`` makes the
    result inconclusive.
    """
    prob = TVProblem(A, weights, w_tilde, extended)
    x_gamma = np.ravel(x_gamma)
    x_star = np.ravel(x_star)
    b = prob.A @ x_star
    resid = float(np.linalg.norm(prob.A @ x_gamma - b))
    tv_g, tv_s = prob.tv(x_gamma), prob.tv(x_star)
    l1_g, l1_s = prob.l1(x_gamma), prob.l1(x_star)
    if l1_opt is None:
        l1_opt = l1_minimum(prob.A, b, prob.w_tilde)[0]
    defect = max(0.0, l1_s - l1_opt)

    pinv = np.linalg.pinv(prob.A)
    lip_tv = _row_norm_sum(prob.c[:, None] * (prob.grad.matrix @ pinv))
    lip_l1 = _row_norm_sum(prob.w_tilde[:, None] * pinv)
    slack_lower = defect + lip_l1 * resid
    slack_upper = lip_l1 * resid
    slack_tv = defect / gamma + lip_tv * resid if gamma > 0 else np.inf
    gap = l1_g - l1_s
    upper = gamma * tv_s
    return HybridBoundsReport(
        tv_ok=bool(tv_g <= tv_s + slack_tv),
        l1_ok=bool(-slack_lower <= gap <= upper + slack_upper),
        tv_gamma=tv_g, tv_star=tv_s, l1_gap=gap, upper=upper,
        slack_tv=float(slack_tv), slack_l1_lower=float(slack_lower),
        slack_l1_upper=float(slack_upper),
        constraint_residual=resid, l1_defect=defect, lip_tv=lip_tv, lip_l1=lip_l1,
        inconclusive=bool(resid > 100 * constraint_tol * max(np.linalg.norm(b), 1e-300)),
    )
