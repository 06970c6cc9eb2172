"""Semi-dual solvers for entropic unbalanced optimal transport.

The semi-dual objective is strongly convex over a box once the target
marginal is penalized by a chi-square divergence, which makes both a
projected averaged SGD (semi-discrete sources) and a smoothness-adaptive
accelerated descent (discrete problems) come with certificates.  The
:mod:`uotsd.verify` module checks those certificates numerically.
"""

from .errors import CapacityError, InvalidInputError, NumericFailureError
from .kernels import (CHI2, KL, UotParams, conjugate_chi2, conjugate_kl,
                      lambert_w_from_log, softmax_stats, softmax_stats_batch)
from .measures import (DiscreteMeasure, SampleSource, build_cost_matrix,
                       cost_rows_fn, empirical_source,
                       gaussian_mixture_sampler, load_image_measure,
                       load_measure_csv)
from .semidual import (EvalReport, anag_constant, c_bound, gradient, hessian,
                       hvp, in_box, local_condition_number, objective,
                       project_box, recover_coupling, recover_f,
                       self_concordance_constant)
from .solvers import (PasgdConfig, SolveResult, Trace, anag_solve, gd_solve,
                      nag_solve_fixed, pasgd_solve, step_schedule,
                      stochastic_gradient)

__version__ = "0.1.0"

__all__ = [
    "CHI2", "KL", "UotParams", "conjugate_chi2", "conjugate_kl",
    "lambert_w_from_log", "softmax_stats", "softmax_stats_batch",
    "DiscreteMeasure", "SampleSource", "build_cost_matrix", "cost_rows_fn",
    "empirical_source", "gaussian_mixture_sampler", "load_image_measure",
    "load_measure_csv",
    "EvalReport", "anag_constant", "c_bound", "gradient", "hessian", "hvp",
    "in_box", "local_condition_number", "objective", "project_box",
    "recover_coupling", "recover_f", "self_concordance_constant",
    "PasgdConfig", "SolveResult", "Trace", "anag_solve", "gd_solve",
    "nag_solve_fixed", "pasgd_solve", "step_schedule", "stochastic_gradient",
    "CapacityError", "InvalidInputError", "NumericFailureError",
    "__version__",
]
