"""Weighted total variation regularization for elliptic inverse source problems."""

from .pde import (ForwardOperator, Grid, apply_forward, assemble_forward, build_grid,
                  conductivity_field, load_operator, save_operator)
from .weights import (WeightField, column_norm_weights, disjointness_diagnostic,
                      project_out_constants, sparsity_weights, tv_weights_2d, weight_1d)
from .tv import GradientOperator, shrink, tv_extended, tv_value, tv_weighted
from .solver import (SolveReport, SolverConfig, TVProblem, admm_inner, basis_pursuit,
                     bregman_outer, hybrid_bounds_check)
from .phantoms import add_noise, make_phantom, support_metrics

__all__ = [
    "ForwardOperator", "Grid", "apply_forward", "assemble_forward", "build_grid",
    "conductivity_field", "load_operator", "save_operator",
    "WeightField", "column_norm_weights", "disjointness_diagnostic", "project_out_constants",
    "sparsity_weights", "tv_weights_2d", "weight_1d",
    "GradientOperator", "shrink", "tv_extended", "tv_value", "tv_weighted",
    "SolveReport", "SolverConfig", "TVProblem", "admm_inner", "basis_pursuit", "bregman_outer",
    "hybrid_bounds_check",
    "add_noise", "make_phantom", "support_metrics",
]
