"""Separable kernel-expansion surrogates with quadratic B-spline feature maps."""

from khronos._core import (
    Surrogate,
    build_knots,
    borehole,
    cosine_lr,
    eval_basis,
    eval_basis_deriv,
    fit_mse,
    fit_sequential,
    gauss_nodes,
    invert_batch,
    lhs_sample,
    mse,
    mse_loss,
    r2_score,
    sobol_g,
    solve_poisson,
    __version__,
)

__all__ = [
    "Surrogate",
    "build_knots",
    "borehole",
    "cosine_lr",
    "eval_basis",
    "eval_basis_deriv",
    "fit_mse",
    "fit_sequential",
    "gauss_nodes",
    "invert_batch",
    "lhs_sample",
    "mse",
    "mse_loss",
    "r2_score",
    "sobol_g",
    "solve_poisson",
    "__version__",
]
