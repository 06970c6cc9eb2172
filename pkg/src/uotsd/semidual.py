"""Semi-dual objective of entropic unbalanced OT and its derivatives.

With a chi-square target relaxation the dual problem reduces to an
unconstrained minimization over the target potential g alone:

    J(g) = J_trans(g) + sum_j beta_j * (g_j^2 / (2 rho2) - g_j)

where J_trans integrates, over source points, a transform of the log
partition log Z(x, g) of the softmax kernel (see ``kernels``).  J is
(beta_min / rho2)-strongly convex regardless of the data, and its Hessian is

    H(g) = int (sigma / eps) (diag(w) - c_coef * w w^T) dmu + diag(beta) / rho2,

which yields the computable smoothness certificates exposed here: the
operator-norm bound ||grad J_trans||_inf / eps + beta_max / rho2 and the
adaptive step bound L(g) used by the accelerated solver.

All reductions are plain numpy sums over fixed axes, so repeated evaluation
at a fixed thread count is bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import CapacityError, InvalidInputError, NumericFailureError
from .kernels import CHI2, KL, UotParams, lambert_w_from_log, softmax_stats_batch
from .measures import DiscreteMeasure

# A potential is a bare (n,) float array.
Potential = np.ndarray

DENSE_HESSIAN_LIMIT = 2000


@dataclass
class EvalReport:
    """Objective value, gradients and local smoothness certificates at g."""

    objective: float
    gradient: np.ndarray
    transport_gradient: np.ndarray
    local_smoothness_bound: float
    anag_step_bound: float


class ConditionReport(NamedTuple):
    kappa: float
    box_bound: float


def anag_constant(params: UotParams) -> float:
    """Divergence constant C of the adaptive step bound L(g)."""
    if params.source_divergence == KL:
        return (2.0 + 3.0 * params.alpha) * math.e
    return 6.0 * math.e


def self_concordance_constant(params: UotParams) -> float:
    """M with |d^3 J[h,h,h]| <= M ||h||_inf <h, H h> for all g, h."""
    if params.source_divergence == KL:
        return (2.0 + 3.0 * params.alpha) / params.epsilon
    return 6.0 / params.epsilon


def in_box(g: Potential, params: UotParams, margin: float | None = None) -> bool:
    """Whether every coordinate satisfies g_j <= rho2 + margin."""
    return bool(np.all(g <= params.box_limit(margin)))


def project_box(g: Potential, params: UotParams, margin: float | None = None) -> Potential:
    """Euclidean projection onto the upper box {g_j <= rho2 + margin}."""
    return np.minimum(g, params.box_limit(margin))


def _check_problem(g, mu: DiscreteMeasure, cost: np.ndarray, nu: DiscreteMeasure):
    g = np.asarray(g, dtype=float)
    cost = np.asarray(cost, dtype=float)
    if g.ndim != 1 or g.shape[0] != nu.n:
        raise InvalidInputError(f"potential must have shape ({nu.n},), got {g.shape}")
    if cost.shape != (mu.n, nu.n):
        raise InvalidInputError(
            f"cost must have shape {(mu.n, nu.n)}, got {cost.shape}"
        )
    if not np.all(np.isfinite(g)):
        raise InvalidInputError("potential contains non-finite entries")
    return g, cost


def _transport_terms(stats, params: UotParams, a: np.ndarray):
    """Per-point transport objective terms and the sigma-weighted masses."""
    if params.source_divergence == KL:
        point_obj = (params.rho1 + params.epsilon) * stats.sigma
    else:
        lam = stats.lambert
        point_obj = (params.epsilon**2 / params.rho1) * (lam + 0.5 * lam**2)
    if not np.all(np.isfinite(stats.sigma)):
        bad = int(np.flatnonzero(~np.isfinite(stats.sigma))[0])
        raise NumericFailureError(f"non-finite marginal factor at source index {bad}")
    return point_obj, a * stats.sigma


def gradient(g, mu: DiscreteMeasure, cost, nu: DiscreteMeasure,
             params: UotParams) -> EvalReport:
    """Objective, gradient and smoothness certificates in one pass.

    Parameters
    ----------
    g : (n,) array_like
        Target potential.
    mu, nu : DiscreteMeasure
        Source and target measures; ``cost`` is their (n1, n2) cost matrix.
    params : UotParams

    Returns
    -------
    EvalReport
        ``gradient`` = ``transport_gradient`` + beta * (g / rho2 - 1);
        ``transport_gradient`` is entrywise nonnegative.
    """
    g, cost = _check_problem(g, mu, cost, nu)
    a = mu.weights
    beta = nu.weights
    stats = softmax_stats_batch(cost, g, params, nu.log_weights)
    point_obj, sig_mass = _transport_terms(stats, params, a)

    j_trans = float(a @ point_obj)
    grad_trans = sig_mass @ stats.w
    quad = float(beta @ (g * g / (2.0 * params.rho2) - g))
    grad = grad_trans + beta * (g / params.rho2 - 1.0)

    obj = j_trans + quad
    if not math.isfinite(obj) or not np.all(np.isfinite(grad)):
        raise NumericFailureError("non-finite objective or gradient")

    smooth = float(grad_trans.max()) / params.epsilon + float(beta.max()) / params.rho2
    c_div = anag_constant(params)
    step_bound = c_div * smooth + c_div / (math.e * params.epsilon) * float(
        np.abs(grad).max()
    )
    return EvalReport(
        objective=obj,
        gradient=grad,
        transport_gradient=grad_trans,
        local_smoothness_bound=smooth,
        anag_step_bound=step_bound,
    )


def objective(g, mu: DiscreteMeasure, cost, nu: DiscreteMeasure,
              params: UotParams) -> float:
    """J(g); see ``gradient`` for the full report."""
    return gradient(g, mu, cost, nu, params).objective


def hessian(g, mu: DiscreteMeasure, cost, nu: DiscreteMeasure, params: UotParams,
            dense_limit: int = DENSE_HESSIAN_LIMIT) -> np.ndarray:
    """Dense Hessian of J at g.

    Refuses n > dense_limit (quadratic memory); use ``hvp`` beyond that.
    The result is symmetric positive definite with smallest eigenvalue at
    least beta_min / rho2.
    """
    g, cost = _check_problem(g, mu, cost, nu)
    if nu.n > dense_limit:
        raise CapacityError(f"dense Hessian limited to n <= {dense_limit}, got {nu.n}")
    a = mu.weights
    beta = nu.weights
    stats = softmax_stats_batch(cost, g, params, nu.log_weights)
    _, sig_mass = _transport_terms(stats, params, a)

    eps = params.epsilon
    diag_vec = (sig_mass @ stats.w) / eps + beta / params.rho2
    scaled = stats.w * (sig_mass * stats.concavity)[:, None]
    h = -(scaled.T @ stats.w) / eps
    h += np.diag(diag_vec)
    return 0.5 * (h + h.T)


def hvp(g, mu: DiscreteMeasure, cost, nu: DiscreteMeasure, params: UotParams,
        v) -> np.ndarray:
    """Hessian-vector product H(g) v without forming H."""
    g, cost = _check_problem(g, mu, cost, nu)
    v = np.asarray(v, dtype=float)
    if v.shape != g.shape:
        raise InvalidInputError("direction must match the potential's shape")
    a = mu.weights
    beta = nu.weights
    stats = softmax_stats_batch(cost, g, params, nu.log_weights)
    _, sig_mass = _transport_terms(stats, params, a)
    eps = params.epsilon
    diag_vec = (sig_mass @ stats.w) / eps + beta / params.rho2
    wv = stats.w @ v
    return diag_vec * v - (stats.w.T @ (sig_mass * stats.concavity * wv)) / eps


def recover_f(g, mu: DiscreteMeasure, cost, nu: DiscreteMeasure,
              params: UotParams) -> np.ndarray:
    """Optimal source potential f*(x_i; g), the partial minimizer over f."""
    g, cost = _check_problem(g, mu, cost, nu)
    stats = softmax_stats_batch(cost, g, params, nu.log_weights)
    if params.source_divergence == KL:
        return -params.rho1 * params.alpha * stats.log_z
    return params.rho1 - params.epsilon * stats.lambert


def recover_coupling(g, mu: DiscreteMeasure, cost, nu: DiscreteMeasure,
                     params: UotParams) -> np.ndarray:
    """Primal plan pi_ij = a_i beta_j exp((f*_i + g_j - c_ij) / eps).

    Assembled in the log domain.  At a stationary g its column sums match
    beta_j (1 - g_j / rho2) and its row sums equal a_i sigma_i.
    """
    g, cost = _check_problem(g, mu, cost, nu)
    stats = softmax_stats_batch(cost, g, params, nu.log_weights)
    if params.source_divergence == KL:
        f_over_eps = -(1.0 - params.alpha) * stats.log_z
    else:
        f_over_eps = params.rho1 / params.epsilon - stats.lambert
    log_b = nu.log_weights + (g - cost) / params.epsilon
    log_pi = (np.log(mu.weights) + f_over_eps)[:, None] + log_b
    return np.exp(log_pi)


def c_bound(mu_total_mass: float, nu_total_mass: float, params: UotParams,
            delta: float | None = None) -> float:
    """Uniform bound on ||grad J_trans(g)||_1 over the box {g <= rho2 + delta}.

    Doubles as an a.s. bound (after dividing by mu(X)) on the per-sample
    transport gradient mass, hence controls the stochastic estimator noise.
    """
    if delta is None:
        delta = params.margin_safeguard
    if mu_total_mass <= 0 or nu_total_mass <= 0:
        raise InvalidInputError("total masses must be positive")
    top = params.rho2 + delta
    if params.source_divergence == KL:
        return (
            mu_total_mass
            * nu_total_mass**params.alpha
            * math.exp(top / (params.rho1 + params.epsilon))
        )
    log_arg = (
        math.log(params.rho1 / params.epsilon)
        + params.rho1 / params.epsilon
        + math.log(nu_total_mass)
        + top / params.epsilon
    )
    return mu_total_mass * (params.epsilon / params.rho1) * lambert_w_from_log(log_arg)


def local_condition_number(g_star, mu: DiscreteMeasure, cost, nu: DiscreteMeasure,
                           params: UotParams) -> ConditionReport:
    """Condition number of H(g*) next to its closed-form box bound.

    The bound (beta_max / beta_min) (1 + max_k (rho2 - g*_k) / eps) is valid
    at any stationary point; the measured kappa comes from a dense
    eigensolve and is reported unclamped.
    """
    h = hessian(g_star, mu, cost, nu, params)
    eigs = np.linalg.eigvalsh(h)
    kappa = float(eigs[-1] / eigs[0])
    beta = nu.weights
    bound = float(
        (beta.max() / beta.min())
        * (1.0 + max(float(np.max(params.rho2 - np.asarray(g_star))), 0.0) / params.epsilon)
    )
    return ConditionReport(kappa=kappa, box_bound=bound)
