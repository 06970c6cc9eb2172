"""Experiment drivers behind the ``uot`` CLI subcommands.

Each driver takes a validated config dict, lays its results out as

    <output_dir>/<experiment>/<run_id>/trace.csv  (+ per-run summary.json)
    <output_dir>/<experiment>/summary.json        (aggregate, schema: 1)

and returns the aggregate summary.  Everything is deterministic given the
config and its seeds except the wall-clock column of the traces.  Default
configs are sized for a desk machine: they exercise the structure under
test (convergence slopes, orderings, scale invariance) rather than
reproducing large-scale magnitudes, and summaries carry ``scale: "desk"``.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from . import semidual, solvers, verify
from .errors import InvalidInputError
from .kernels import UotParams
from .measures import (DiscreteMeasure, build_cost_matrix, cost_rows_fn,
                       empirical_source, gaussian_mixture_sampler,
                       image_shape, load_image_measure)

SCHEMA_VERSION = 1
SCALE = "desk"

EXPERIMENTS = ("pasgd_rate", "eps_sweep", "anag_scale", "color_transfer", "verify")


# ---------------------------------------------------------------------------
# config plumbing

_PARAM_KEYS = {"epsilon", "rho1", "rho2", "source_divergence",
               "margin_project", "margin_safeguard"}
_SOLVER_KEYS = {"max_iters", "batch_size", "schedule", "scale_c",
                "exponent_gamma", "averaging", "checkpoints"}
_MIXTURE_KEYS = {"modes", "dim", "spread", "scale", "seed"}

_TOP_KEYS = {
    "pasgd_rate": {"experiment", "output_dir", "seeds", "params", "solver",
                   "mixture", "n_target", "n_source_samples", "c_scales",
                   "fit_window", "ground_truth_tol"},
    "eps_sweep": {"experiment", "output_dir", "seeds", "params", "solver",
                  "mixture", "n_target", "n_source_samples", "eps_list",
                  "ground_truth_tol"},
    "anag_scale": {"experiment", "output_dir", "seed", "params", "sizes",
                   "dim", "tol", "max_iters", "methods"},
    "color_transfer": {"experiment", "output_dir", "seed", "params",
                       "source_image", "target_image", "rhos", "max_iters",
                       "batch_size"},
    "verify": {"experiment", "output_dir", "seed", "n_instances", "n_batches",
               "draws_per_instance", "pairs_per_instance"},
}


def _check_keys(d, allowed, where):
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise InvalidInputError(f"unknown config key(s) in {where}: {unknown}")


def validate_config(config: dict) -> dict:
    """Strictly validate a config dict; unknown keys anywhere are an error."""
    if not isinstance(config, dict):
        raise InvalidInputError("config must be a JSON object")
    exp = config.get("experiment")
    if exp == "baselines":  # alias: the scale study runs every baseline
        exp = "anag_scale"
        config = {**config, "experiment": "anag_scale"}
    if exp not in EXPERIMENTS:
        raise InvalidInputError(
            f"experiment must be one of {EXPERIMENTS} (or 'baselines'), got {exp!r}"
        )
    _check_keys(config, _TOP_KEYS[exp], "config")
    if "params" in config:
        _check_keys(config["params"], _PARAM_KEYS, "params")
    if "solver" in config:
        _check_keys(config["solver"], _SOLVER_KEYS, "solver")
    if "mixture" in config:
        _check_keys(config["mixture"], _MIXTURE_KEYS, "mixture")
    return config


def load_config(path) -> dict:
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}: invalid JSON ({exc})") from exc
    return validate_config(cfg)


def _params_from(config, **overrides) -> UotParams:
    kw = dict(config.get("params", {}))
    kw.update(overrides)
    kw.setdefault("epsilon", 0.01)
    kw.setdefault("rho1", 1.0)
    kw.setdefault("rho2", 1.0)
    return UotParams(**kw)


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _run_dir(output_dir, experiment, run_id) -> Path:
    p = Path(output_dir) / experiment / run_id
    p.mkdir(parents=True, exist_ok=True)
    return p


def _base_summary(experiment, config) -> dict:
    return {"schema": SCHEMA_VERSION, "scale": SCALE, "experiment": experiment,
            "config": config}


# ---------------------------------------------------------------------------
# shared benchmark construction

def mixture_benchmark(config, n_target, n_source_samples):
    """Synthetic semi-discrete benchmark: Gaussian-mixture source and target.

    Mode centers, the target cloud and the source dataset each come from
    their own seeded stream, so every piece is reproducible independently
    of how many solver runs consume them.
    """
    mix = dict(config.get("mixture", {}))
    modes = int(mix.get("modes", 4))
    dim = int(mix.get("dim", 10))
    spread = float(mix.get("spread", 1.0))
    scale = float(mix.get("scale", 0.35))
    seed = int(mix.get("seed", 7))

    centers = spread * np.random.default_rng(seed).standard_normal((modes, dim))
    target_src = gaussian_mixture_sampler(centers, scale, seed=seed + 1)
    nu = DiscreteMeasure(points=target_src.draw(n_target),
                         weights=np.full(n_target, 1.0 / n_target))
    data_src = gaussian_mixture_sampler(centers, scale, seed=seed + 2)
    mu = DiscreteMeasure(points=data_src.draw(n_source_samples),
                         weights=np.full(n_source_samples, 1.0 / n_source_samples))
    cost = build_cost_matrix(mu.points, nu.points)
    return mu, nu, cost


def _ground_truth(mu, cost, nu, params, tol):
    res = solvers.anag_solve(mu, cost, nu, params, tol=tol, max_iters=50_000,
                             trace_every=25)
    rep = semidual.gradient(res.g, mu, cost, nu, params)
    return res.g, rep.objective, res.converged


def _loglog_slope(ts, gaps):
    x = np.log(np.asarray(ts, dtype=float))
    y = np.log(np.asarray(gaps, dtype=float))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


# ---------------------------------------------------------------------------
# pasgd_rate

def run_pasgd_rate(config: dict, output_dir) -> dict:
    """Averaged-SGD convergence-rate study against a high-precision optimum.

    For each step-size scale C and each seed, one PASGD run records the
    objective of the averaged iterate at log-spaced checkpoints; the
    summary fits the log-log slope of the seed-averaged gap inside
    ``fit_window`` and compares the final averaged gap to the final
    last-iterate (plain SGD) gap from the same runs.
    """
    config = validate_config(config)
    params = _params_from(config)
    n_target = int(config.get("n_target", 2000))
    n_samples = int(config.get("n_source_samples", 10_000))
    seeds = [int(s) for s in config.get("seeds", list(range(1, 21)))]
    c_scales = [float(c) for c in config.get("c_scales", [0.05, 1.0, 10.0])]
    solver_cfg = dict(config.get("solver", {}))
    max_iters = int(solver_cfg.pop("max_iters", 100_000))
    batch_size = int(solver_cfg.pop("batch_size", 8))
    fit_window = [int(v) for v in config.get("fit_window", [1000, max_iters])]
    gt_tol = float(config.get("ground_truth_tol", 1e-12))

    mu, nu, cost = mixture_benchmark(config, n_target, n_samples)
    g_star, j_star, gt_ok = _ground_truth(mu, cost, nu, params, gt_tol)

    lo, hi = fit_window
    checkpoints = sorted(set(
        np.unique(np.geomspace(max(lo // 10, 10), max_iters, 16).astype(int)).tolist()
    ) | {lo, hi, max_iters})
    rows_fn = cost_rows_fn(nu.points)

    summary = _base_summary("pasgd_rate", config)
    summary.update({"j_star": float(j_star), "ground_truth_converged": bool(gt_ok),
                    "by_scale": {}})
    for c_scale in c_scales:
        curves = []
        finals_avg, finals_last = [], []
        for seed in seeds:
            cfg = solvers.PasgdConfig(
                max_iters=max_iters, batch_size=batch_size, seed=seed,
                scale_c=c_scale * n_target / params.rho2,
                checkpoints=tuple(checkpoints), **solver_cfg,
            )
            src = empirical_source(mu, seed)
            res = solvers.pasgd_solve(src, rows_fn, nu, params, cfg,
                                      eval_mu=mu, eval_cost=cost)
            rid = f"c{c_scale:g}_seed{seed:04d}"
            rdir = _run_dir(output_dir, "pasgd_rate", rid)
            res.trace.to_csv(rdir / "trace.csv")
            gaps = np.asarray(res.trace.objective) - j_star
            curves.append(gaps)
            final_avg = float(gaps[-1])
            rep_last = semidual.gradient(res.g_last, mu, cost, nu, params)
            final_last = float(rep_last.objective - j_star)
            finals_avg.append(final_avg)
            finals_last.append(final_last)
            _write_json(rdir / "summary.json", {
                "schema": SCHEMA_VERSION, "scale": SCALE, "run_id": rid,
                "seed": seed, "c_scale": c_scale,
                "final_gap_averaged": final_avg,
                "final_gap_last_iterate": final_last,
            })
        mean_gap = np.mean(np.stack(curves), axis=0)
        ts = np.asarray(res.trace.iters)
        mask = (ts >= lo) & (ts <= hi)
        slope = _loglog_slope(ts[mask], np.maximum(mean_gap[mask], 1e-300))
        summary["by_scale"][f"{c_scale:g}"] = {
            "slope_averaged_gap": slope,
            "median_final_gap_averaged": float(np.median(finals_avg)),
            "median_final_gap_last_iterate": float(np.median(finals_last)),
            "checkpoints": [int(t) for t in ts],
            "mean_gap_curve": [float(v) for v in mean_gap],
        }
    _write_json(Path(output_dir) / "pasgd_rate" / "summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# eps_sweep

def run_eps_sweep(config: dict, output_dir) -> dict:
    """PASGD accuracy across entropic regularization strengths.

    Reports, per epsilon, the median final objective gap and the median
    squared parameter error against that epsilon's own high-precision
    optimum, plus the max/min spread of both across the sweep.
    """
    config = validate_config(config)
    n_target = int(config.get("n_target", 100))
    n_samples = int(config.get("n_source_samples", 600))
    seeds = [int(s) for s in config.get("seeds", [1, 2, 3])]
    eps_list = [float(e) for e in config.get("eps_list", [0.1, 0.01, 0.001])]
    solver_cfg = dict(config.get("solver", {}))
    max_iters = int(solver_cfg.pop("max_iters", 30_000))
    batch_size = int(solver_cfg.pop("batch_size", 8))
    gt_tol = float(config.get("ground_truth_tol", 1e-10))

    summary = _base_summary("eps_sweep", config)
    summary["by_epsilon"] = {}
    rows_fn = None
    for eps in eps_list:
        params = _params_from(config, epsilon=eps)
        mu, nu, cost = mixture_benchmark(config, n_target, n_samples)
        if rows_fn is None:
            rows_fn = cost_rows_fn(nu.points)
        g_star, j_star, gt_ok = _ground_truth(mu, cost, nu, params, gt_tol)
        gaps, perrs = [], []
        for seed in seeds:
            cfg = solvers.PasgdConfig(max_iters=max_iters, batch_size=batch_size,
                                      seed=seed, **solver_cfg)
            res = solvers.pasgd_solve(empirical_source(mu, seed), rows_fn, nu,
                                      params, cfg, eval_mu=mu, eval_cost=cost)
            rid = f"eps{eps:g}_seed{seed:04d}"
            rdir = _run_dir(output_dir, "eps_sweep", rid)
            res.trace.to_csv(rdir / "trace.csv")
            gap = float(res.trace.objective[-1] - j_star)
            perr = float(np.sum((res.g - g_star) ** 2))
            gaps.append(gap)
            perrs.append(perr)
            _write_json(rdir / "summary.json", {
                "schema": SCHEMA_VERSION, "scale": SCALE, "run_id": rid,
                "seed": seed, "epsilon": eps, "final_gap": gap,
                "param_error_sq": perr,
            })
        summary["by_epsilon"][f"{eps:g}"] = {
            "median_final_gap": float(np.median(gaps)),
            "median_param_error_sq": float(np.median(perrs)),
            "ground_truth_converged": bool(gt_ok),
        }
    med_gaps = [summary["by_epsilon"][f"{e:g}"]["median_final_gap"] for e in eps_list]
    med_errs = [summary["by_epsilon"][f"{e:g}"]["median_param_error_sq"] for e in eps_list]
    order = np.argsort(eps_list)[::-1]  # descending epsilon
    summary["gap_increases_as_eps_decreases"] = bool(
        all(med_gaps[order[i]] < med_gaps[order[i + 1]] for i in range(len(order) - 1))
    )
    summary["gap_spread_ratio"] = float(max(med_gaps) / min(med_gaps))
    summary["param_error_spread_ratio"] = float(max(med_errs) / min(med_errs))
    summary["param_spread_below_gap_spread"] = bool(
        summary["param_error_spread_ratio"] < summary["gap_spread_ratio"]
    )
    _write_json(Path(output_dir) / "eps_sweep" / "summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# anag_scale

_DEFAULT_CAPS = {"anag": 20_000, "gd_adaptive": 100_000,
                 "gd_fixed": 30_000, "nag_fixed": 60_000}


def run_anag_scale(config: dict, output_dir) -> dict:
    """Iteration counts of the adaptive solvers across problem sizes.

    Random uniform measures on [0, 1]^dim at each size; every method runs to
    the same gradient tolerance (or its cap).  The point being probed is
    that the adaptive methods' iteration counts barely move with n while the
    conservative fixed-step baselines degrade.
    """
    config = validate_config(config)
    params = _params_from(config, epsilon=config.get("params", {}).get("epsilon", 0.01),
                          rho1=config.get("params", {}).get("rho1", 10.0),
                          rho2=config.get("params", {}).get("rho2", 10.0))
    sizes = [int(n) for n in config.get("sizes", [100, 200, 400])]
    dim = int(config.get("dim", 10))
    tol = float(config.get("tol", 1e-8))
    seed = int(config.get("seed", 0))
    caps = {**_DEFAULT_CAPS, **{k: int(v) for k, v in config.get("max_iters", {}).items()}}
    methods = list(config.get("methods", list(_DEFAULT_CAPS)))
    bad = sorted(set(methods) - set(_DEFAULT_CAPS))
    if bad:
        raise InvalidInputError(f"unknown method(s) {bad}; choose from {sorted(_DEFAULT_CAPS)}")

    summary = _base_summary("anag_scale", config)
    summary["tol"] = tol
    summary["by_size"] = {}
    for k, n in enumerate(sizes):
        rng = np.random.default_rng(seed + 1000 * k)
        mu = DiscreteMeasure(points=rng.random((n, dim)), weights=np.full(n, 1.0 / n))
        nu = DiscreteMeasure(points=rng.random((n, dim)), weights=np.full(n, 1.0 / n))
        cost = build_cost_matrix(mu.points, nu.points)
        l_glob = (semidual.c_bound(mu.total_mass, nu.total_mass, params,
                                   delta=params.margin_project) / params.epsilon
                  + float(nu.weights.max()) / params.rho2)
        per_method = {}
        for method in methods:
            if method == "anag":
                res = solvers.anag_solve(mu, cost, nu, params, tol=tol,
                                         max_iters=caps[method], trace_every=10)
            elif method == "gd_adaptive":
                res = solvers.gd_solve(mu, cost, nu, params, step_L=None, tol=tol,
                                       max_iters=caps[method], trace_every=200)
            elif method == "gd_fixed":
                res = solvers.gd_solve(mu, cost, nu, params, step_L=l_glob, tol=tol,
                                       max_iters=caps[method], trace_every=200)
            else:
                res = solvers.nag_solve_fixed(mu, cost, nu, params, step_L=l_glob,
                                              tol=tol, max_iters=caps[method],
                                              trace_every=200)
            rid = f"n{n}_{method}"
            rdir = _run_dir(output_dir, "anag_scale", rid)
            res.trace.to_csv(rdir / "trace.csv")
            per_method[method] = {
                "iterations": int(res.iterations),
                "converged": bool(res.converged),
                "restarts": int(res.restarts),
            }
            _write_json(rdir / "summary.json", {
                "schema": SCHEMA_VERSION, "scale": SCALE, "run_id": rid,
                "size": n, "method": method, **per_method[method],
            })
        summary["by_size"][str(n)] = {"l_global": float(l_glob), **per_method}

    if "anag" in methods:
        counts = [summary["by_size"][str(n)]["anag"]["iterations"] for n in sizes]
        summary["anag_iteration_ratio"] = float(max(counts) / max(min(counts), 1))
    _write_json(Path(output_dir) / "anag_scale" / "summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# color_transfer

def _recolor(source_points, g, nu, params, chunk=1024):
    """Barycentric projection of each source color through the softmax weights."""
    from .kernels import softmax_stats_batch

    out = np.empty_like(source_points)
    for lo in range(0, len(source_points), chunk):
        block = source_points[lo:lo + chunk]
        rows = build_cost_matrix(block, nu.points)
        stats = softmax_stats_batch(rows, g, params, nu.log_weights)
        out[lo:lo + chunk] = stats.w @ nu.points
    return out


def run_color_transfer(config: dict, output_dir) -> dict:
    """Color-palette transport between two RGB images.

    Pixels are points in the color cube; PASGD solves source -> target for
    each requested rho (= rho1 = rho2) and each source pixel is recolored to
    the barycentric mean of its softmax weights over target pixels.  The
    summary records the transported mass fraction per rho and the max
    channel deviation of the recolored image from the source image.
    """
    from PIL import Image

    config = validate_config(config)
    if "source_image" not in config or "target_image" not in config:
        raise InvalidInputError("color_transfer needs source_image and target_image")
    eps = float(config.get("params", {}).get("epsilon", 5e-3))
    divergence = config.get("params", {}).get("source_divergence", "kl")
    rhos = [float(r) for r in config.get("rhos", [0.1, 1.0, 10.0])]
    max_iters = int(config.get("max_iters", 20_000))
    batch_size = int(config.get("batch_size", 32))
    seed = int(config.get("seed", 0))

    mu = load_image_measure(config["source_image"])
    nu_meas = load_image_measure(config["target_image"])
    nu = DiscreteMeasure(points=nu_meas.points,
                         weights=np.full(nu_meas.n, 1.0 / nu_meas.n))
    shape = image_shape(config["source_image"])
    rows_fn = cost_rows_fn(nu.points)

    summary = _base_summary("color_transfer", config)
    summary["by_rho"] = {}
    for rho in rhos:
        params = UotParams(epsilon=eps, rho1=rho, rho2=rho,
                           source_divergence=divergence)
        cfg = solvers.PasgdConfig(
            max_iters=max_iters, batch_size=batch_size, seed=seed,
            schedule="opt_linear", exponent_gamma=2.0 / 3.0,
            scale_c=nu.n * params.rho2,
        )
        res = solvers.pasgd_solve(empirical_source(mu, seed), rows_fn, nu,
                                  params, cfg)
        g_avg = res.g
        mass_fraction = float(np.sum(nu.weights * (1.0 - g_avg / params.rho2))
                              / nu.total_mass)
        new_colors = _recolor(mu.points, g_avg, nu, params)
        rid = f"rho{rho:g}"
        rdir = _run_dir(output_dir, "color_transfer", rid)
        res.trace.to_csv(rdir / "trace.csv")
        img = np.clip(new_colors.reshape(shape[0], shape[1], 3), 0.0, 1.0)
        out_path = rdir / "recolored.png"
        Image.fromarray(np.round(img * 255.0).astype(np.uint8), "RGB").save(out_path)
        max_dev = float(np.abs(new_colors - mu.points).max())
        entry = {"mass_fraction": mass_fraction,
                 "max_channel_diff_vs_source": max_dev,
                 "recolored": str(Path("color_transfer") / rid / "recolored.png")}
        summary["by_rho"][f"{rho:g}"] = entry
        _write_json(rdir / "summary.json", {
            "schema": SCHEMA_VERSION, "scale": SCALE, "run_id": rid,
            "rho": rho, **entry,
        })
    fractions = [summary["by_rho"][f"{r:g}"]["mass_fraction"] for r in rhos]
    order = np.argsort(rhos)
    summary["mass_fraction_monotone_in_rho"] = bool(
        all(fractions[order[i]] < fractions[order[i + 1]]
            for i in range(len(order) - 1))
    )
    _write_json(Path(output_dir) / "color_transfer" / "summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# verify

def run_verify(config: dict, output_dir) -> tuple[dict, bool]:
    """Run the numerical certification battery; returns (summary, all_passed)."""
    config = validate_config(config)
    seed = int(config.get("seed", 0))
    results = verify.run_all_checks(
        seed=seed,
        n_instances=int(config.get("n_instances", 8)),
        n_batches=int(config.get("n_batches", 2000)),
        draws_per_instance=int(config.get("draws_per_instance", 25)),
        pairs_per_instance=int(config.get("pairs_per_instance", 10)),
    )
    all_passed = all(r.passed for r in results)
    summary = _base_summary("verify", config)
    summary["all_passed"] = all_passed
    summary["checks"] = [dataclasses.asdict(r) for r in results]
    rdir = _run_dir(output_dir, "verify", f"seed{seed:04d}")
    _write_json(rdir / "summary.json", summary)
    with open(rdir / "report.txt", "w") as fh:
        for r in results:
            fh.write(r.line() + "\n")
    _write_json(Path(output_dir) / "verify" / "summary.json", summary)
    return summary, all_passed


RUNNERS = {
    "pasgd_rate": run_pasgd_rate,
    "eps_sweep": run_eps_sweep,
    "anag_scale": run_anag_scale,
    "color_transfer": run_color_transfer,
}


def run_experiment(config: dict, output_dir):
    """Dispatch on config['experiment']; verify returns its pass flag too."""
    config = validate_config(config)
    exp = config["experiment"]
    if exp == "verify":
        return run_verify(config, output_dir)
    return RUNNERS[exp](config, output_dir), True
