"""Log-domain softmax kernel for the semi-dual of entropic unbalanced OT.

Everything downstream (objective, gradients, Hessians, solvers) is built from
the per-source-point quantities computed here:

    log_b[j] = log(beta_j) + (g_j - c_j) / eps          (tilted kernel weights)
    log_z    = logsumexp_j(log_b[j])                    (log partition)
    w[j]     = exp(log_b[j] - log_z)                    (softmax weights)
    sigma    = marginal density factor of the source relaxation
    c_coef   = curvature coefficient in [0, 1) scaling the w w^T Hessian term

For a KL source relaxation sigma = Z**alpha with alpha = eps / (eps + rho1)
and c_coef = 1 - alpha.  For a chi-square source relaxation sigma and c_coef
are expressed through the Lambert W function of U = (rho1/eps) e^{rho1/eps} Z,
which is evaluated directly from log(U) so that no intermediate ever leaves
the representable range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NumericFailureError

KL = "kl"
CHI2 = "chi2"

_DIVERGENCES = (KL, CHI2)


@dataclass(frozen=True)
class UotParams:
    """Regularization parameters of one unbalanced transport problem.

    Parameters
    ----------
    epsilon : float
        Entropic regularization strength, > 0.
    rho1 : float
        Source marginal relaxation strength, > 0.
    rho2 : float
        Target marginal relaxation strength, > 0.  The target divergence is
        always chi-square; it is what makes the semi-dual strongly convex
        with modulus beta_min / rho2 independently of the data.
    source_divergence : str
        Source marginal divergence, ``"kl"`` or ``"chi2"``.
    margin_project : float
        Slack delta of the box {g : g_j <= rho2 + delta} that iterates are
        projected onto.
    margin_safeguard : float
        Larger slack used by the momentum safeguard; must be >= margin_project.
    """

    epsilon: float
    rho1: float
    rho2: float
    source_divergence: str = KL
    margin_project: float = 0.1
    margin_safeguard: float = 1.0

    def __post_init__(self):
        for name in ("epsilon", "rho1", "rho2"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InvalidInputError(f"{name} must be a positive finite number, got {v!r}")
        div = self.source_divergence.lower()
        if div not in _DIVERGENCES:
            raise InvalidInputError(
                f"source_divergence must be one of {_DIVERGENCES}, got {self.source_divergence!r}"
            )
        object.__setattr__(self, "source_divergence", div)
        if self.margin_project < 0 or self.margin_safeguard < self.margin_project:
            raise InvalidInputError("need 0 <= margin_project <= margin_safeguard")

    @property
    def alpha(self) -> float:
        """eps / (eps + rho1), the KL-source exponent."""
        return self.epsilon / (self.epsilon + self.rho1)

    def box_limit(self, margin: float | None = None) -> float:
        """Upper bound rho2 + margin of the feasible box."""
        if margin is None:
            margin = self.margin_project
        return self.rho2 + margin


@dataclass
class SoftmaxStats:
    """Kernel quantities of a single source point (see module docstring)."""

    log_b: np.ndarray
    log_z: float
    w: np.ndarray
    sigma: float
    concavity_coeff: float


@dataclass
class BatchStats:
    """Vectorized kernel quantities for a batch of m source points.

    ``w`` has shape (m, n); the remaining arrays have shape (m,).
    ``lambert`` holds W(U) per point for the chi-square source and is None
    for the KL source.
    """

    log_z: np.ndarray
    w: np.ndarray
    sigma: np.ndarray
    concavity: np.ndarray
    lambert: np.ndarray | None = field(default=None)


def lambert_w_from_log(log_u):
    """Principal branch W(u) evaluated from log(u).

    Solves w + log(w) = log_u for w > 0, which is the principal Lambert W
    of u = exp(log_u) without ever forming u.  This matters because the
    chi-square path needs W of U = (rho1/eps) e^{rho1/eps} Z whose plain
    value overflows for small eps while log(U) stays modest.

    Parameters
    ----------
    log_u : float or ndarray
        Logarithm of the argument; any finite value up to ~1e6 is fine.

    Returns
    -------
    float or ndarray
        W(exp(log_u)), accurate to ~1e-14 relative error.
    """
    arr = np.asarray(log_u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("lambert_w_from_log requires finite log_u")
    scalar = arr.ndim == 0
    t = np.atleast_1d(arr)

    # Below exp(-700) the root equals exp(log_u) to full double precision
    # (the relative correction is itself ~exp(log_u)); clamp so the Halley
    # loop never sees a denormal.
    t_eff = np.maximum(t, -700.0)

    # Piecewise starter: w ~ exp(t) for t <= 0, a linear bridge in the
    # middle, the classic asymptotic t - log(t) for large t.
    with np.errstate(over="ignore"):
        w = np.where(
            t_eff <= 0.0,
            np.exp(t_eff),
            np.where(
                t_eff < 2.0,
                0.567 + 0.45 * t_eff,
                t_eff - np.log(np.maximum(t_eff, 2.0)) * (1.0 - 1.0 / np.maximum(t_eff, 2.0)),
            ),
        )

    # Halley iterations on f(w) = w + log(w) - t; cubic convergence, so the
    # loop exits after 3-4 rounds everywhere on the supported range.
    for _ in range(50):
        f = w + np.log(w) - t_eff
        step = 2.0 * f * w * (w + 1.0) / (2.0 * (w + 1.0) ** 2 + f)
        w_new = w - step
        w = np.where(w_new > 0.0, w_new, 0.5 * w)
        if np.all(np.abs(step) <= 4.5e-16 * np.abs(w)):
            break

    w = np.where(t < -700.0, np.exp(np.minimum(t, 0.0)), w)
    return float(w[0]) if scalar else w.reshape(arr.shape)


def conjugate_kl(s):
    """Convex conjugate of t*log(t) - t + 1 composed with negation: e^s - 1."""
    return np.exp(s) - 1.0 if isinstance(s, np.ndarray) else math.exp(s) - 1.0


def conjugate_chi2(s):
    """Conjugate of the half chi-square divergence: s + s^2/2 on s >= -1, else -1/2."""
    s_arr = np.asarray(s, dtype=float)
    out = np.where(s_arr >= -1.0, s_arr + 0.5 * s_arr**2, -0.5)
    return float(out) if np.isscalar(s) or s_arr.ndim == 0 else out


def softmax_stats_batch(cost_rows: np.ndarray, g: np.ndarray, params: UotParams,
                        log_beta: np.ndarray) -> BatchStats:
    """Kernel statistics for m source points at once.

    ``cost_rows`` is the (m, n) slice of the cost matrix for the batch,
    ``log_beta`` the log target weights.  All arithmetic is log-domain; the
    only exponentials taken are of non-positive numbers.
    """
    eps = params.epsilon
    log_b = log_beta + (g - cost_rows) / eps
    mx = log_b.max(axis=1)
    w = np.exp(log_b - mx[:, None])
    zsum = w.sum(axis=1)
    log_z = mx + np.log(zsum)
    if not np.all(np.isfinite(log_z)):
        bad = int(np.flatnonzero(~np.isfinite(log_z))[0])
        raise NumericFailureError(f"non-finite log partition at batch index {bad}")
    w /= zsum[:, None]

    if params.source_divergence == KL:
        sigma = np.exp(params.alpha * log_z)
        conc = np.full(log_z.shape, 1.0 - params.alpha)
        lam = None
    else:
        log_u = math.log(params.rho1 / eps) + params.rho1 / eps + log_z
        lam = lambert_w_from_log(log_u)
        sigma = (eps / params.rho1) * lam
        conc = lam / (1.0 + lam)
    return BatchStats(log_z=log_z, w=w, sigma=sigma, concavity=conc, lambert=lam)


def softmax_stats(x_cost_row: np.ndarray, g: np.ndarray, params: UotParams,
                  target_log_weights: np.ndarray) -> SoftmaxStats:
    """Kernel statistics of one source point against the whole target.

    Parameters
    ----------
    x_cost_row : (n,) ndarray
        Costs c(x, y_j) from the source point to every target point.
    g : (n,) ndarray
        Current dual potential on the target.
    params : UotParams
    target_log_weights : (n,) ndarray
        log(beta_j).

    Returns
    -------
    SoftmaxStats
    """
    row = np.asarray(x_cost_row, dtype=float)
    g = np.asarray(g, dtype=float)
    lb = np.asarray(target_log_weights, dtype=float)
    if row.ndim != 1 or row.shape != g.shape or row.shape != lb.shape:
        raise InvalidInputError("cost row, potential and log weights must share shape (n,)")
    if not (np.all(np.isfinite(row)) and np.all(np.isfinite(g)) and np.all(np.isfinite(lb))):
        raise InvalidInputError("softmax_stats requires finite inputs")
    stats = softmax_stats_batch(row[None, :], g, params, lb)
    log_b = lb + (g - row) / params.epsilon
    return SoftmaxStats(
        log_b=log_b,
        log_z=float(stats.log_z[0]),
        w=stats.w[0],
        sigma=float(stats.sigma[0]),
        concavity_coeff=float(stats.concavity[0]),
    )
