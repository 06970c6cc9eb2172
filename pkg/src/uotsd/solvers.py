"""Solvers for the semi-dual: online averaged SGD and adaptive Nesterov.

Two regimes share the same objective machinery:

* ``pasgd_solve`` — projected averaged SGD for the semi-discrete / online
  setting.  Source points are drawn from a ``SampleSource``; the unbiased
  gradient estimator touches only the sampled cost rows, iterates are
  projected onto the box {g <= rho2 + margin}, and the returned potential is
  the running (or suffix) average of the iterates.

* ``anag_solve`` — full-batch accelerated gradient descent whose step size
  1 / L_t adapts to the computable smoothness bound L(g) at the current
  extrapolation point, with a safeguard that restarts the momentum whenever
  the extrapolation leaves the widened box.  ``gd_solve`` (fixed or adaptive
  step) and ``nag_solve_fixed`` (conservative constant step and momentum)
  are the comparison baselines.

Conventions shared by every solver: g starts at zero, a run owns exactly one
RNG (the sample source's), and per-iteration telemetry goes into a ``Trace``
whose CSV schema is fixed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NumericFailureError
from .kernels import UotParams, softmax_stats_batch
from .measures import DiscreteMeasure, SampleSource
from .semidual import EvalReport, gradient as semidual_gradient, in_box, project_box

TRACE_HEADER = "iter,objective,grad_norm_2,grad_norm_inf,step_or_L,restart_flag,wall_clock_ms"

SCHEDULES = ("poly", "poly_offset", "opt_linear")
AVERAGING = ("full", "suffix_half")
RESTART_MODES = ("reset", "literal")

# Stay on the fly rather than materializing a cost matrix beyond this.
_PRECOMPUTE_ENTRY_CAP = 40_000_000


class Trace:
    """Per-iteration solver telemetry with a fixed CSV schema."""

    def __init__(self):
        self.iters: list[int] = []
        self.objective: list[float] = []
        self.grad_norm_2: list[float] = []
        self.grad_norm_inf: list[float] = []
        self.step_or_l: list[float] = []
        self.restart_flag: list[int] = []
        self.wall_clock_ms: list[float] = []

    def add(self, iteration, objective, grad_norm_2, grad_norm_inf, step_or_l,
            restart_flag, wall_clock_ms):
        if self.iters and iteration <= self.iters[-1]:
            raise InvalidInputError("trace iterations must be strictly increasing")
        if self.wall_clock_ms and wall_clock_ms < self.wall_clock_ms[-1]:
            raise InvalidInputError("trace wall clock must be nondecreasing")
        self.iters.append(int(iteration))
        self.objective.append(float(objective))
        self.grad_norm_2.append(float(grad_norm_2))
        self.grad_norm_inf.append(float(grad_norm_inf))
        self.step_or_l.append(float(step_or_l))
        self.restart_flag.append(int(restart_flag))
        self.wall_clock_ms.append(float(wall_clock_ms))

    def __len__(self):
        return len(self.iters)

    @property
    def restarts(self) -> int:
        return int(sum(self.restart_flag))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(TRACE_HEADER + "\n")
            for row in zip(self.iters, self.objective, self.grad_norm_2,
                           self.grad_norm_inf, self.step_or_l,
                           self.restart_flag, self.wall_clock_ms):
                fh.write(f"{row[0]},{row[1]!r},{row[2]!r},{row[3]!r},{row[4]!r},"
                         f"{row[5]},{row[6]!r}\n")


@dataclass
class AnagState:
    """Mutable state of the accelerated loop (exposed for inspection)."""

    g: np.ndarray
    g_prev: np.ndarray
    y: np.ndarray
    iteration: int
    restarts: int
    last_l: float


@dataclass
class SolveResult:
    """What every solver returns.

    ``g`` is the solver's output potential (the averaged iterate for PASGD,
    the last iterate otherwise); ``g_last`` carries the raw final iterate of
    PASGD so last-iterate SGD can be read off the same run.
    """

    g: np.ndarray
    trace: Trace
    converged: bool
    iterations: int
    restarts: int = 0
    g_last: np.ndarray | None = None
    state: AnagState | None = None


@dataclass
class PasgdConfig:
    """Configuration of one projected averaged SGD run.

    ``scale_c = None`` uses the natural scale n / rho2.  Schedules (t is the
    1-based iteration):

    * ``poly``         eta_t = c * t**(-gamma)
    * ``poly_offset``  eta_t = c * (t + 1/eps)**(-gamma)
    * ``opt_linear``   eta_t = c / (1/eps + t**gamma)
    """

    max_iters: int
    batch_size: int = 32
    schedule: str = "poly_offset"
    scale_c: float | None = None
    exponent_gamma: float = 2.0 / 3.0
    averaging: str = "full"
    seed: int = 0
    projection_margin: float | None = None
    checkpoints: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.max_iters < 1 or self.batch_size < 1:
            raise InvalidInputError("max_iters and batch_size must be >= 1")
        if self.schedule not in SCHEDULES:
            raise InvalidInputError(f"schedule must be one of {SCHEDULES}")
        if self.averaging not in AVERAGING:
            raise InvalidInputError(f"averaging must be one of {AVERAGING}")
        if self.schedule in ("poly", "poly_offset"):
            if not 0.5 < self.exponent_gamma < 1.0:
                raise InvalidInputError(
                    "exponent_gamma must lie in (1/2, 1) for polynomial schedules"
                )
        elif not 0.0 < self.exponent_gamma <= 1.0:
            raise InvalidInputError("exponent_gamma must lie in (0, 1] for opt_linear")


def step_schedule(config: PasgdConfig, params: UotParams, n_target: int):
    """The step-size function t -> eta_t implied by a config."""
    c = config.scale_c if config.scale_c is not None else n_target / params.rho2
    gamma = config.exponent_gamma
    inv_eps = 1.0 / params.epsilon
    if config.schedule == "poly":
        return lambda t: c * t**-gamma
    if config.schedule == "poly_offset":
        return lambda t: c * (t + inv_eps) ** -gamma
    return lambda t: c / (inv_eps + t**gamma)


def stochastic_gradient(g, batch_points, total_mass, cost_fn,
                        nu: DiscreteMeasure, params: UotParams) -> np.ndarray:
    """Unbiased gradient estimate from a batch of source samples.

    ``batch_points`` are draws from the normalized source measure and
    ``total_mass`` its total mass, so that

        est_k = (mass / m) * sum_i sigma(X_i, g) w_k(X_i, g)
                + beta_k g_k / rho2 - beta_k

    has expectation equal to the full gradient.
    """
    rows = cost_fn(np.asarray(batch_points, dtype=float))
    return _estimate_from_rows(np.asarray(g, dtype=float), rows, total_mass, nu, params)


def _estimate_from_rows(g, rows, total_mass, nu, params):
    stats = softmax_stats_batch(rows, g, params, nu.log_weights)
    trans = (total_mass / rows.shape[0]) * (stats.sigma @ stats.w)
    return trans + nu.weights * (g / params.rho2 - 1.0)


def _auto_checkpoints(max_iters, count=24):
    if max_iters <= count:
        return list(range(1, max_iters + 1))
    pts = np.unique(np.geomspace(1, max_iters, count).astype(int))
    return sorted(set(pts.tolist()) | {max_iters})


def pasgd_solve(source: SampleSource, cost_fn, nu: DiscreteMeasure,
                params: UotParams, config: PasgdConfig,
                eval_mu: DiscreteMeasure | None = None,
                eval_cost: np.ndarray | None = None) -> SolveResult:
    """Projected averaged SGD on the semi-dual.

    Parameters
    ----------
    source : SampleSource
        Seeded stream of source samples; owns all randomness of the run.
    cost_fn : callable
        Maps a (m, d) batch of source points to its (m, n) cost rows.
    nu : DiscreteMeasure
        Discrete target.
    params, config : problem and run configuration.
    eval_mu, eval_cost : optional
        A full discrete source (and its cost matrix) on which the averaged
        iterate is evaluated at checkpoint iterations; without it checkpoint
        rows carry NaN objective/gradient columns.

    Returns
    -------
    SolveResult
        ``g`` is the averaged potential, ``g_last`` the raw final iterate.
    """
    n = nu.n
    t0 = time.perf_counter()
    eta = step_schedule(config, params, n)
    margin = (params.margin_project if config.projection_margin is None
              else config.projection_margin)
    limit = params.box_limit(margin)
    beta = nu.weights
    checkpoints = (sorted(set(config.checkpoints) | {config.max_iters})
                   if config.checkpoints is not None
                   else _auto_checkpoints(config.max_iters))
    snapshot_at = {ck // 2 for ck in checkpoints}
    mass = source.total_mass

    # For a finite source the full cost row matrix is gathered once.
    rows_table = None
    if source.is_finite and source.points.shape[0] * n <= _PRECOMPUTE_ENTRY_CAP:
        rows_table = cost_fn(source.points)
        cost_scale = float(rows_table.max())
    else:
        cost_scale = 0.0

    g = np.zeros(n)
    cum = np.zeros(n)
    snapshots = {0: np.zeros(n)}
    trace = Trace()
    check_iter = iter(checkpoints)
    next_check = next(check_iter, None)

    def averaged(t):
        if config.averaging == "full":
            return cum / t
        half = t // 2
        base = snapshots[half]
        return (cum - base) / (t - half)

    for t in range(1, config.max_iters + 1):
        if rows_table is not None:
            rows = rows_table[source.draw_indices(config.batch_size)]
        else:
            rows = cost_fn(source.draw(config.batch_size))
            cost_scale = max(cost_scale, float(rows.max()))
        est = _estimate_from_rows(g, rows, mass, nu, params)
        g = g - eta(t) * est
        np.minimum(g, limit, out=g)
        cum += g

        bound = 10.0 * (params.rho2 + 1.0 + cost_scale)
        if float(np.abs(g).max()) > bound:
            raise NumericFailureError(
                f"PASGD diverged at iteration {t}: ||g||_inf exceeds {bound:.3g} "
                f"(schedule {config.schedule}, step {eta(t):.3g})"
            )
        if t in snapshot_at:
            snapshots[t] = cum.copy()
        if t == next_check:
            wall = (time.perf_counter() - t0) * 1000.0
            if eval_mu is not None:
                rep = semidual_gradient(averaged(t), eval_mu, eval_cost, nu, params)
                trace.add(t, rep.objective, float(np.linalg.norm(rep.gradient)),
                          float(np.abs(rep.gradient).max()), eta(t), 0, wall)
            else:
                trace.add(t, math.nan, math.nan, math.nan, eta(t), 0, wall)
            next_check = next(check_iter, None)

    g_avg = averaged(config.max_iters)
    return SolveResult(g=g_avg, trace=trace, converged=True,
                       iterations=config.max_iters, g_last=g)


def _theta(l_value, strong):
    if l_value <= strong:
        return 0.0
    rl, rs = math.sqrt(l_value), math.sqrt(strong)
    return (rl - rs) / (rl + rs)


def anag_solve(mu: DiscreteMeasure, cost, nu: DiscreteMeasure, params: UotParams,
               tol: float = 1e-9, max_iters: int = 100_000,
               restart_mode: str = "reset", trace_every: int = 1,
               _evaluate=None) -> SolveResult:
    """Adaptive-smoothness accelerated gradient descent with safeguard restarts.

    Each iteration evaluates the gradient at the extrapolation point y, takes
    the step 1 / L(y) given by the computable smoothness bound, projects onto
    {g <= rho2 + margin_project}, and extrapolates with the momentum implied
    by L(y) and the strong convexity beta_min / rho2.  If the extrapolation
    leaves the wider safeguard box the momentum is restarted: mode "reset"
    (default) zeroes it by re-centering at the new iterate, mode "literal"
    rolls the extrapolation back to the previous iterate.

    Stops when ||grad J(g)||_2 <= tol; if max_iters runs out first the best
    iterate so far is returned with ``converged=False``.
    """
    if restart_mode not in RESTART_MODES:
        raise InvalidInputError(f"restart_mode must be one of {RESTART_MODES}")
    evaluate = _evaluate or (lambda v: semidual_gradient(v, mu, cost, nu, params))
    strong = float(nu.weights.min()) / params.rho2
    t0 = time.perf_counter()
    n = nu.n

    g = np.zeros(n)
    y = g
    trace = Trace()
    restarts = 0
    rep_y: EvalReport = evaluate(y)
    gn0 = float(np.linalg.norm(rep_y.gradient))
    last_l = rep_y.anag_step_bound
    if gn0 <= tol:
        trace.add(0, rep_y.objective, gn0, float(np.abs(rep_y.gradient).max()),
                  last_l, 0, (time.perf_counter() - t0) * 1000.0)
        state = AnagState(g=g, g_prev=g, y=y, iteration=0, restarts=0, last_l=last_l)
        return SolveResult(g=g, trace=trace, converged=True, iterations=0,
                           restarts=0, state=state)

    best_g, best_norm = g, gn0
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        last_l = rep_y.anag_step_bound
        theta = _theta(last_l, strong)
        g_next = project_box(y - rep_y.gradient / last_l, params)
        y_next = g_next + theta * (g_next - g)
        flag = 0
        if not in_box(y_next, params, params.margin_safeguard):
            flag = 1
            restarts += 1
            y_next = g if restart_mode == "literal" else g_next
        g_prev, g, y = g, g_next, y_next

        gy = float(np.linalg.norm(rep_y.gradient))
        if it % trace_every == 0 or gy <= 3.0 * tol or it == max_iters:
            rep_g = evaluate(g)
            gn = float(np.linalg.norm(rep_g.gradient))
            trace.add(it, rep_g.objective, gn, float(np.abs(rep_g.gradient).max()),
                      last_l, flag, (time.perf_counter() - t0) * 1000.0)
            if gn < best_norm:
                best_g, best_norm = g, gn
            if gn <= tol:
                converged = True
                break
        rep_y = evaluate(y)

    state = AnagState(g=g, g_prev=g_prev, y=y, iteration=it,
                      restarts=restarts, last_l=last_l)
    out_g = g if converged else best_g
    return SolveResult(g=out_g, trace=trace, converged=converged, iterations=it,
                       restarts=restarts, state=state)


def gd_solve(mu: DiscreteMeasure, cost, nu: DiscreteMeasure, params: UotParams,
             step_L: float | None = None, max_iters: int = 100_000,
             tol: float = 1e-9, trace_every: int = 1, _evaluate=None) -> SolveResult:
    """Projected gradient descent, fixed step 1/step_L or adaptive 1/L(g_t).

    With ``step_L=None`` the step adapts to the same smoothness bound the
    accelerated solver uses.  ``_evaluate`` swaps the objective for tests.
    """
    evaluate = _evaluate or (lambda v: semidual_gradient(v, mu, cost, nu, params))
    t0 = time.perf_counter()
    g = np.zeros(nu.n)
    trace = Trace()
    converged = False
    it = 0
    used_l = math.nan
    for it in range(max_iters + 1):
        rep = evaluate(g)
        gn = float(np.linalg.norm(rep.gradient))
        used_l = step_L if step_L is not None else rep.anag_step_bound
        if it % trace_every == 0 or gn <= tol or it == max_iters:
            trace.add(it, rep.objective, gn, float(np.abs(rep.gradient).max()),
                      used_l, 0, (time.perf_counter() - t0) * 1000.0)
        if gn <= tol:
            converged = True
            break
        if it == max_iters:
            break
        g = project_box(g - rep.gradient / used_l, params)
    return SolveResult(g=g, trace=trace, converged=converged, iterations=it)


def nag_solve_fixed(mu: DiscreteMeasure, cost, nu: DiscreteMeasure,
                    params: UotParams, step_L: float, max_iters: int = 100_000,
                    tol: float = 1e-9, trace_every: int = 50,
                    _evaluate=None) -> SolveResult:
    """Conservative Nesterov baseline: fixed step, blind momentum.

    ``step_L`` must dominate the smoothness everywhere visited (use
    ``c_bound(...) / eps + beta_max / rho2``).  The momentum follows the
    classical schedule for smooth convex objectives, theta_t =
    (a_t - 1) / a_{t+1} with a_{t+1} = (1 + sqrt(1 + 4 a_t^2)) / 2 — it
    uses no problem constant beyond step_L, which is exactly what makes it
    the "pay for the worst case everywhere" reference point.  No safeguard,
    no restarts.
    """
    evaluate = _evaluate or (lambda v: semidual_gradient(v, mu, cost, nu, params))
    t0 = time.perf_counter()
    n = nu.n

    g = np.zeros(n)
    y = g
    a_t = 1.0
    trace = Trace()
    rep_y = evaluate(y)
    gn0 = float(np.linalg.norm(rep_y.gradient))
    if gn0 <= tol:
        trace.add(0, rep_y.objective, gn0, float(np.abs(rep_y.gradient).max()),
                  step_L, 0, (time.perf_counter() - t0) * 1000.0)
        return SolveResult(g=g, trace=trace, converged=True, iterations=0)

    best_g, best_norm = g, gn0
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        g_next = project_box(y - rep_y.gradient / step_L, params)
        a_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * a_t * a_t))
        y = g_next + ((a_t - 1.0) / a_next) * (g_next - g)
        a_t = a_next
        g = g_next
        gy = float(np.linalg.norm(rep_y.gradient))
        if it % trace_every == 0 or gy <= 3.0 * tol or it == max_iters:
            rep_g = evaluate(g)
            gn = float(np.linalg.norm(rep_g.gradient))
            trace.add(it, rep_g.objective, gn, float(np.abs(rep_g.gradient).max()),
                      step_L, 0, (time.perf_counter() - t0) * 1000.0)
            if gn < best_norm:
                best_g, best_norm = g, gn
            if gn <= tol:
                converged = True
                break
        rep_y = evaluate(y)
    return SolveResult(g=g if converged else best_g, trace=trace,
                       converged=converged, iterations=it)
