"""Independent numerical oracles: finite differences and a tiny primal solver.

Nothing here reuses the semi-dual evaluation path: derivatives come from
central differences of a supplied callable, and the primal solver minimizes
the original plan-space objective directly with damped Newton steps.  That
independence is what makes the cross-checks in the verification suite
meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, InvalidInputError
from .kernels import KL, UotParams
from .measures import DiscreteMeasure

PRIMAL_SIZE_CAP = 100


def _default_step(g):
    return 1e-5 * (1.0 + float(np.max(np.abs(g), initial=0.0)))


def fd_gradient(objective_fn, g, h_step: float | None = None) -> np.ndarray:
    """Central-difference gradient, truncation O(h^2)."""
    g = np.asarray(g, dtype=float)
    h = _default_step(g) if h_step is None else h_step
    out = np.empty_like(g)
    for k in range(g.size):
        e = np.zeros_like(g)
        e[k] = h
        out[k] = (objective_fn(g + e) - objective_fn(g - e)) / (2.0 * h)
    return out


def fd_hessian(gradient_fn, g, h_step: float | None = None) -> np.ndarray:
    """Central-difference Jacobian of a gradient callable, truncation O(h^2).

    Row i holds d(grad)/d(g_i); no symmetrization is applied.
    """
    g = np.asarray(g, dtype=float)
    h = _default_step(g) if h_step is None else h_step
    rows = []
    for k in range(g.size):
        e = np.zeros_like(g)
        e[k] = h
        rows.append((gradient_fn(g + e) - gradient_fn(g - e)) / (2.0 * h))
    return np.asarray(rows)


def fd_third_directional(objective_fn, g, direction, h_step: float = 1e-4) -> float:
    """d^3 J[u, u, u] from a five-point objective stencil, truncation O(h^2).

    Roundoff grows like |J| / h^3, so prefer ``fd_third_via_hessian`` when an
    (independently validated) Hessian is available and high accuracy matters.
    """
    g = np.asarray(g, dtype=float)
    u = np.asarray(direction, dtype=float)
    h = h_step
    return float(
        (
            objective_fn(g + 2.0 * h * u)
            - 2.0 * objective_fn(g + h * u)
            + 2.0 * objective_fn(g - h * u)
            - objective_fn(g - 2.0 * h * u)
        )
        / (2.0 * h**3)
    )


def fd_third_via_hessian(hessian_fn, g, direction, h_step: float = 1e-5) -> float:
    """d^3 J[u, u, u] as a central difference of the Hessian quadratic form.

    Two Hessian evaluations; truncation O(h^2) with roundoff ~|u' H u| / h,
    orders of magnitude tamer than the objective stencil at small eps.
    """
    g = np.asarray(g, dtype=float)
    u = np.asarray(direction, dtype=float)
    h = h_step
    qp = float(u @ hessian_fn(g + h * u) @ u)
    qm = float(u @ hessian_fn(g - h * u) @ u)
    return (qp - qm) / (2.0 * h)


@dataclass
class PrimalPlan:
    """Result of the plan-space solver."""

    pi: np.ndarray
    objective: float
    converged: bool
    iterations: int
    grad_norm: float


def primal_objective(pi, mu: DiscreteMeasure, cost, nu: DiscreteMeasure,
                     params: UotParams) -> float:
    """Plan-space objective: transport cost + entropy + marginal penalties."""
    a = mu.weights
    beta = nu.weights
    ref = np.outer(a, beta)
    ent = float(np.sum(pi * np.log(pi / ref) - pi + ref))
    row = pi.sum(axis=1)
    col = pi.sum(axis=0)
    if params.source_divergence == KL:
        d1 = float(np.sum(row * np.log(row / a) - row + a))
    else:
        d1 = float(np.sum((row - a) ** 2 / (2.0 * a)))
    d2 = float(np.sum((col - beta) ** 2 / (2.0 * beta)))
    return float(np.sum(cost * pi)) + params.epsilon * ent + params.rho1 * d1 + params.rho2 * d2


def _primal_gradient(pi, mu, cost, nu, params):
    a = mu.weights
    beta = nu.weights
    row = pi.sum(axis=1)
    col = pi.sum(axis=0)
    grad = cost + params.epsilon * np.log(pi / np.outer(a, beta))
    if params.source_divergence == KL:
        grad += params.rho1 * np.log(row / a)[:, None]
    else:
        grad += params.rho1 * ((row - a) / a)[:, None]
    grad += params.rho2 * ((col - beta) / beta)[None, :]
    return grad


def _primal_hessian(pi, mu, cost, nu, params):
    """Exact plan-space Hessian, dense over the n1*n2 flattened entries.

    Entropic part is diag(eps / pi); each marginal penalty couples one row
    (resp. column) block with a rank-one all-ones pattern.
    """
    n1, n2 = pi.shape
    n = n1 * n2
    idx = np.arange(n).reshape(n1, n2)
    hess = np.zeros((n, n))
    hess[np.arange(n), np.arange(n)] = params.epsilon / pi.ravel()
    row = pi.sum(axis=1)
    for i in range(n1):
        denom = row[i] if params.source_divergence == KL else mu.weights[i]
        hess[np.ix_(idx[i], idx[i])] += params.rho1 / denom
    for j in range(n2):
        hess[np.ix_(idx[:, j], idx[:, j])] += params.rho2 / nu.weights[j]
    return hess


def primal_solve_tiny(mu: DiscreteMeasure, cost, nu: DiscreteMeasure,
                      params: UotParams, tol: float = 1e-9,
                      max_iters: int = 200) -> PrimalPlan:
    """Damped Newton on the plan, for cross-checking only.

    The primal objective is strictly convex with a cheap exact Hessian at
    oracle sizes (capped at n1 * n2 <= 100 entries), so Newton steps with a
    fraction-to-boundary cap and Armijo backtracking converge in a couple
    dozen iterations.  The entropic barrier keeps iterates strictly
    positive; convergence is declared on the plain gradient norm.
    """
    cost = np.asarray(cost, dtype=float)
    if mu.n * nu.n > PRIMAL_SIZE_CAP:
        raise CapacityError(
            f"primal_solve_tiny handles at most {PRIMAL_SIZE_CAP} plan entries, "
            f"got {mu.n * nu.n}"
        )
    if cost.shape != (mu.n, nu.n):
        raise InvalidInputError(f"cost must have shape {(mu.n, nu.n)}")

    pi = np.outer(mu.weights, nu.weights)
    f_val = primal_objective(pi, mu, cost, nu, params)
    grad_norm = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        grad = _primal_gradient(pi, mu, cost, nu, params)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= tol:
            return PrimalPlan(pi=pi, objective=f_val, converged=True,
                              iterations=it - 1, grad_norm=grad_norm)
        hess = _primal_hessian(pi, mu, cost, nu, params)
        direction = -np.linalg.solve(hess, grad.ravel()).reshape(pi.shape)
        slope = float(np.sum(grad * direction))
        neg = direction < 0.0
        t = 1.0
        if np.any(neg):
            t = min(1.0, 0.99 * float(np.min(-pi[neg] / direction[neg])))
        while t > 1e-18:
            cand = pi + t * direction
            f_cand = primal_objective(cand, mu, cost, nu, params)
            if f_cand <= f_val + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            return PrimalPlan(pi=pi, objective=f_val, converged=False,
                              iterations=it, grad_norm=grad_norm)
        pi = cand
        f_val = f_cand
    return PrimalPlan(pi=pi, objective=f_val, converged=False,
                      iterations=it, grad_norm=grad_norm)


def dual_value(j_at_g_star: float, mu_total_mass: float, nu_total_mass: float,
               params: UotParams) -> float:
    """Optimal primal value implied by the semi-dual minimum.

    The semi-dual J drops every term constant in (f, g); restoring them
    gives, at a minimizer g*,

        primal optimum = r * mu(X) + eps * mu(X) * nu(Y) - J(g*)

    with r = rho1 for a KL source and rho1 / 2 for a chi-square source.
    The eps * mu(X) * nu(Y) piece is the entropic normalization constant
    of KL(pi | mu x nu); it is pinned here and certified numerically by the
    duality-gap checks.
    """
    r = params.rho1 if params.source_divergence == KL else 0.5 * params.rho1
    return (
        r * mu_total_mass
        + params.epsilon * mu_total_mass * nu_total_mass
        - j_at_g_star
    )


def duality_gap(plan: PrimalPlan, j_at_g_star: float, mu: DiscreteMeasure,
                nu: DiscreteMeasure, params: UotParams) -> float:
    """Primal objective minus the dual value implied by J(g*).

    Nonnegative up to solver tolerance; ~0 certifies strong duality and that
    both solvers found the same optimum.
    """
    return plan.objective - dual_value(j_at_g_star, mu.total_mass, nu.total_mass, params)
