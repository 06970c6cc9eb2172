"""Randomized numerical certification of the semi-dual's structural claims.

Every check draws small random instances from a seeded RNG, measures a
quantity whose admissible range is known (derivative consistency, eigenvalue
bounds, self-concordance, duality gaps, estimator variance, ...), and
returns a CheckResult with the measured value next to its tolerance.  The
``uot verify`` subcommand runs the whole battery and fails loudly on any
violation.

Checks that validate a derivative accept the evaluation callable as an
argument, so the suite's own sensitivity can be demonstrated by injecting a
broken one (see the mutation test in the test suite).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import oracle, semidual, solvers
from .kernels import (CHI2, KL, UotParams, lambert_w_from_log,
                      softmax_stats_batch)
from .measures import DiscreteMeasure, build_cost_matrix, empirical_source

GRAD_FD_RTOL = 1e-6
HESS_FD_RTOL = 1e-5
STRONG_CONVEXITY_SLACK = 1e-10
SELF_CONCORDANCE_SLACK = 1e-3
BOX_SLACK = 1e-6
DUALITY_ATOL = 1e-4
COUPLING_ATOL = 1e-3
MARGINAL_ATOL = 1e-6
LAMBERT_ATOL = 1e-10
SHIFT_ATOL = 1e-12
BRACKET_SLACK = 1e-8


@dataclass
class Instance:
    mu: DiscreteMeasure
    cost: np.ndarray
    nu: DiscreteMeasure
    params: UotParams

    def as_args(self):
        return self.mu, self.cost, self.nu, self.params


@dataclass
class CheckResult:
    name: str
    passed: bool
    tolerance: float
    measured: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"[{tag}] {self.name}: measured={self.measured:.6g} "
                f"tol={self.tolerance:.6g} {self.detail}".rstrip())


def _weights(rng, n, total):
    w = 0.2 + rng.random(n)
    return w * (total / w.sum())


def random_instance(rng, n1=None, n2=None, dim=None, epsilon=None, rho1=None,
                    rho2=None, divergence=None) -> Instance:
    """A small random problem on [0, 1]^d with benign weights."""
    n1 = int(rng.integers(2, 11)) if n1 is None else n1
    n2 = int(rng.integers(2, 11)) if n2 is None else n2
    dim = int(rng.integers(2, 4)) if dim is None else dim
    divergence = (KL if rng.random() < 0.5 else CHI2) if divergence is None else divergence
    epsilon = float(rng.choice([1.0, 0.1, 0.01])) if epsilon is None else epsilon
    rho1 = float(rng.uniform(0.5, 3.0)) if rho1 is None else rho1
    rho2 = float(rng.uniform(0.5, 3.0)) if rho2 is None else rho2
    mu = DiscreteMeasure(points=rng.random((n1, dim)),
                         weights=_weights(rng, n1, float(rng.uniform(0.5, 2.0))))
    nu = DiscreteMeasure(points=rng.random((n2, dim)),
                         weights=_weights(rng, n2, float(rng.uniform(0.5, 2.0))))
    cost = build_cost_matrix(mu.points, nu.points)
    params = UotParams(epsilon=epsilon, rho1=rho1, rho2=rho2,
                       source_divergence=divergence)
    return Instance(mu=mu, cost=cost, nu=nu, params=params)


def random_potential(rng, inst: Instance, margin: float | None = None) -> np.ndarray:
    """Uniform draw from [-1.5, rho2 + margin] per coordinate (inside the box)."""
    hi = inst.params.box_limit(inst.params.margin_safeguard if margin is None else margin)
    return rng.uniform(-1.5, hi, size=inst.nu.n)


def _rel_err(approx, exact):
    scale = max(float(np.max(np.abs(exact))), 1.0)
    return float(np.max(np.abs(approx - exact))) / scale


def check_gradient_fd(instances, rng, gradient_fn=None) -> CheckResult:
    """Analytic gradient against a central difference of the objective."""
    gradient_fn = gradient_fn or semidual.gradient
    worst = 0.0
    for inst in instances:
        g = random_potential(rng, inst, margin=0.0)
        rep = gradient_fn(g, *inst.as_args())

        def j(v, inst=inst):
            return semidual.objective(v, *inst.as_args())

        fd = oracle.fd_gradient(j, g)
        worst = max(worst, _rel_err(fd, rep.gradient))
    return CheckResult("gradient_fd", worst < GRAD_FD_RTOL, GRAD_FD_RTOL, worst,
                       f"({len(instances)} instances)")


def check_hessian_fd(instances, rng, hessian_fn=None) -> CheckResult:
    """Analytic Hessian against a central difference of the gradient."""
    hessian_fn = hessian_fn or semidual.hessian
    worst = 0.0
    for inst in instances:
        g = random_potential(rng, inst, margin=0.0)
        h = hessian_fn(g, *inst.as_args())

        def grad(v, inst=inst):
            return semidual.gradient(v, *inst.as_args()).gradient

        fd = oracle.fd_hessian(grad, g)
        worst = max(worst, _rel_err(fd, h))
    return CheckResult("hessian_fd", worst < HESS_FD_RTOL, HESS_FD_RTOL, worst,
                       f"({len(instances)} instances)")


def check_smoothness_bound(instances, rng, draws_per_instance=100) -> CheckResult:
    """lambda_max(H) <= ||grad J_trans||_inf / eps + beta_max / rho2, everywhere."""
    violations = 0
    worst = -np.inf
    total = 0
    for inst in instances:
        for _ in range(draws_per_instance):
            g = random_potential(rng, inst)
            rep = semidual.gradient(g, *inst.as_args())
            h = semidual.hessian(g, *inst.as_args())
            lam_max = float(np.linalg.eigvalsh(h)[-1])
            excess = lam_max / rep.local_smoothness_bound - 1.0
            worst = max(worst, excess)
            if excess > 1e-12:
                violations += 1
            total += 1
    return CheckResult("smoothness_bound", violations == 0, 0.0, worst,
                       f"({violations}/{total} violations, worst relative excess)")


def check_strong_convexity(instances, rng, draws_per_instance=100) -> CheckResult:
    """lambda_min(H) >= beta_min / rho2 - slack, everywhere."""
    worst = np.inf
    for inst in instances:
        floor = float(inst.nu.weights.min()) / inst.params.rho2
        for _ in range(draws_per_instance):
            g = random_potential(rng, inst)
            h = semidual.hessian(g, *inst.as_args())
            lam_min = float(np.linalg.eigvalsh(h)[0])
            worst = min(worst, lam_min - floor)
    return CheckResult("strong_convexity", worst >= -STRONG_CONVEXITY_SLACK,
                       STRONG_CONVEXITY_SLACK, worst,
                       "(min over draws of lambda_min - beta_min/rho2)")


def check_self_concordance(instances, rng, pairs_per_instance=50) -> CheckResult:
    """|d^3 J[h,h,h]| <= M ||h||_inf <h, H h> with the divergence constant M."""
    worst = -np.inf
    for inst in instances:
        m_const = semidual.self_concordance_constant(inst.params)

        def hess(v, inst=inst):
            return semidual.hessian(v, *inst.as_args())

        for _ in range(pairs_per_instance):
            g = random_potential(rng, inst, margin=0.0)
            h = rng.standard_normal(inst.nu.n)
            h /= float(np.linalg.norm(h))
            step = 1e-5 * (1.0 + float(np.abs(g).max()))
            d3 = oracle.fd_third_via_hessian(hess, g, h, step)
            quad = float(h @ hess(g) @ h)
            bound = m_const * float(np.abs(h).max()) * quad
            worst = max(worst, abs(d3) / bound - 1.0)
    return CheckResult("self_concordance", worst < SELF_CONCORDANCE_SLACK,
                       SELF_CONCORDANCE_SLACK, worst,
                       "(worst |d3|/bound - 1)")


def check_hessian_bracketing(instances, rng, pairs_per_instance=10) -> CheckResult:
    """exp(-M ||dg||_inf) H(g1) <= H(g2) <= exp(M ||dg||_inf) H(g1)."""
    worst = -np.inf
    for inst in instances:
        m_const = semidual.self_concordance_constant(inst.params)
        for _ in range(pairs_per_instance):
            g1 = random_potential(rng, inst, margin=0.0)
            delta = rng.uniform(-1.0, 1.0, size=inst.nu.n)
            if m_const * np.abs(delta).max() > 40.0:
                delta *= 40.0 / (m_const * np.abs(delta).max())
            g2 = g1 + delta
            h1 = semidual.hessian(g1, *inst.as_args())
            h2 = semidual.hessian(g2, *inst.as_args())
            chol = np.linalg.cholesky(h1)
            mid = np.linalg.solve(chol, np.linalg.solve(chol, h2).T)
            eigs = np.linalg.eigvalsh(0.5 * (mid + mid.T))
            span = m_const * float(np.abs(delta).max())
            lo, hi = math.exp(-span), math.exp(span)
            worst = max(worst,
                        (lo - float(eigs[0])) / lo,
                        (float(eigs[-1]) - hi) / hi)
    return CheckResult("hessian_bracketing", worst <= BRACKET_SLACK, BRACKET_SLACK,
                       worst, "(worst relative excursion outside the bracket)")


def _solve_star(inst: Instance, tol=1e-11):
    res = solvers.anag_solve(*inst.as_args(), tol=tol, max_iters=200_000,
                             trace_every=10)
    return res


def check_box_constraint(instances) -> CheckResult:
    """Converged minimizers satisfy max_k g*_k <= rho2 + slack."""
    worst = -np.inf
    solved = 0
    for inst in instances:
        res = _solve_star(inst, tol=1e-10)
        if not res.converged:
            continue
        solved += 1
        worst = max(worst, float(res.g.max()) - inst.params.rho2)
    return CheckResult("box_constraint", worst <= BOX_SLACK and solved == len(instances),
                       BOX_SLACK, worst, f"({solved}/{len(instances)} solved; max g*-rho2)")


def check_marginal_identity(instances) -> CheckResult:
    """Column sums of the recovered plan equal beta * (1 - g*/rho2) at g*."""
    worst = 0.0
    for inst in instances:
        res = _solve_star(inst, tol=1e-10)
        pi = semidual.recover_coupling(res.g, *inst.as_args())
        expected = inst.nu.weights * (1.0 - res.g / inst.params.rho2)
        worst = max(worst, float(np.abs(pi.sum(axis=0) - expected).max()))
    return CheckResult("marginal_identity", worst < MARGINAL_ATOL, MARGINAL_ATOL,
                       worst, "(max |col sum - beta(1 - g*/rho2)|)")


def check_duality(instances) -> CheckResult:
    """Primal optimum equals the dual value recovered from J(g*)."""
    worst = 0.0
    for inst in instances:
        res = _solve_star(inst, tol=1e-11)
        j_star = semidual.objective(res.g, *inst.as_args())
        plan = oracle.primal_solve_tiny(inst.mu, inst.cost, inst.nu, inst.params,
                                        tol=1e-9)
        gap = oracle.duality_gap(plan, j_star, inst.mu, inst.nu, inst.params)
        worst = max(worst, abs(gap))
    return CheckResult("strong_duality", worst <= DUALITY_ATOL, DUALITY_ATOL, worst,
                       f"({len(instances)} tiny instances, |primal - dual|)")


def check_coupling_match(instances) -> CheckResult:
    """Dual-recovered plan matches the independently solved primal plan."""
    worst = 0.0
    for inst in instances:
        res = _solve_star(inst, tol=1e-11)
        pi_dual = semidual.recover_coupling(res.g, *inst.as_args())
        plan = oracle.primal_solve_tiny(inst.mu, inst.cost, inst.nu, inst.params,
                                        tol=1e-9)
        worst = max(worst, float(np.abs(pi_dual - plan.pi).max()))
    return CheckResult("coupling_match", worst <= COUPLING_ATOL, COUPLING_ATOL,
                       worst, "(max entrywise |dual plan - primal plan|)")


def check_variance_bound(rng, n_batches=10_000, batch_sizes=(1, 8, 32),
                         n_draws_g=5) -> CheckResult:
    """Estimator second moment E||est - grad||^2 <= 4 c_bound^2 / m_b."""
    inst = random_instance(rng, n1=40, n2=25, dim=3, epsilon=0.5)
    g_args = inst.as_args()
    worst = -np.inf
    bound_c = semidual.c_bound(inst.mu.total_mass, inst.nu.total_mass, inst.params,
                               delta=inst.params.margin_safeguard)
    for _ in range(n_draws_g):
        g = random_potential(rng, inst)
        exact = semidual.gradient(g, *g_args).gradient
        for m_b in batch_sizes:
            src = empirical_source(inst.mu, seed=int(rng.integers(2**31)))
            acc = 0.0
            chunk = 1000
            done = 0
            while done < n_batches:
                take = min(chunk, n_batches - done)
                idx = src.draw_indices(m_b * take)
                rows = inst.cost[idx]
                stats = softmax_stats_batch(rows, g, inst.params, inst.nu.log_weights)
                per = (stats.sigma[:, None] * stats.w).reshape(take, m_b, inst.nu.n)
                est = inst.mu.total_mass * per.mean(axis=1) \
                    + inst.nu.weights * (g / inst.params.rho2 - 1.0)
                acc += float(((est - exact) ** 2).sum())
                done += take
            mean_sq = acc / n_batches
            bound = 4.0 * bound_c**2 / m_b
            worst = max(worst, mean_sq / bound - 1.0)
    return CheckResult("variance_bound", worst < 0.0, 0.0, worst,
                       "(worst E||est-grad||^2 / bound - 1)")


def check_shift_covariance(instances, rng, shifts_per_instance=20) -> CheckResult:
    """g -> g + t shifts log_z by t/eps and leaves w unchanged."""
    worst = 0.0
    for inst in instances:
        lb = inst.nu.log_weights
        for _ in range(shifts_per_instance):
            g = random_potential(rng, inst, margin=0.0)
            t = float(rng.uniform(-3.0, 3.0))
            s0 = softmax_stats_batch(inst.cost, g, inst.params, lb)
            s1 = softmax_stats_batch(inst.cost, g + t, inst.params, lb)
            worst = max(worst,
                        float(np.abs(s1.log_z - s0.log_z - t / inst.params.epsilon).max()),
                        float(np.abs(s1.w - s0.w).max()))
    return CheckResult("shift_covariance", worst < SHIFT_ATOL, SHIFT_ATOL, worst)


def check_lambert_residual(rng, n_draws=10_000) -> CheckResult:
    """w + log(w) returns the queried log argument to 1e-10."""
    log_u = rng.uniform(-30.0, 1e6, size=n_draws)
    w = lambert_w_from_log(log_u)
    resid = np.abs((w - log_u) + np.log(w))
    worst = float(resid.max())
    return CheckResult("lambert_residual", worst < LAMBERT_ATOL, LAMBERT_ATOL, worst)


def run_all_checks(seed: int = 0, n_instances: int = 8, n_batches: int = 2000,
                   draws_per_instance: int = 25,
                   pairs_per_instance: int = 10) -> list[CheckResult]:
    """The full battery on seeded random instances.

    ``n_instances`` small instances are drawn once and shared by the
    derivative/eigenvalue checks; the duality checks draw their own 2x3
    instances because the primal oracle is capped at tiny sizes.
    """
    rng = np.random.default_rng(seed)
    instances = [random_instance(rng) for _ in range(n_instances)]
    tiny = [random_instance(rng, n1=2, n2=3,
                            epsilon=float(rng.uniform(0.5, 1.0)),
                            rho1=float(rng.uniform(0.8, 2.0)),
                            rho2=float(rng.uniform(0.8, 2.0)),
                            divergence=KL if k % 2 == 0 else CHI2)
            for k in range(6)]
    mid = [random_instance(rng, n1=12, n2=8) for _ in range(4)]

    results = [
        check_gradient_fd(instances, rng),
        check_hessian_fd(instances, rng),
        check_smoothness_bound(instances, rng, draws_per_instance),
        check_strong_convexity(instances, rng, draws_per_instance),
        check_self_concordance(instances, rng, pairs_per_instance),
        check_hessian_bracketing(instances, rng, max(pairs_per_instance // 2, 3)),
        check_box_constraint(mid),
        check_marginal_identity(mid),
        check_duality(tiny),
        check_coupling_match(tiny),
        check_variance_bound(rng, n_batches=n_batches),
        check_shift_covariance(instances, rng),
        check_lambert_residual(rng),
    ]
    return results
