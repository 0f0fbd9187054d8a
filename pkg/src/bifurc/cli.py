"""Command-line interface binding the experiments and labs to files.

Subcommands
-----------
calibrate-hessian   closed-form vs finite-difference critical-precision scan
toy bimodal         forward precision traversal on two-cluster data
toy unimodal        the same traversal on a single Gaussian (control)
toy hierarchy       two-stage traversal on nested clusters
toy reverse         anneal-hold forward run plus reverse traversal
toy endogenous      linear-autoencoder + probe co-evolution
sde pitchfork       scalar normal-form integration
sde coupled         multi-mode lottery run with persistence statistics
escape sweep        first-passage sweep over coupling levels, then model fits
escape fit          model comparison on a per-gamma statistics CSV
classify            shape-class report for a trajectory CSV

Every run writes into the output directory (``[run] out``, flag ``--out``);
all outputs embed the 12-hex config hash and the package version. Exit codes:
0 success, 2 configuration or validation problem, 3 numerical failure,
4 I/O failure. Seed sweeps run in a process pool; each per-seed file is
written by exactly one worker and the merged summary by the parent.
"""

import argparse
import importlib.resources
import json
import math
import os
import sys
from concurrent.futures import BrokenExecutor, ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import build_config
from .errors import ConfigError, NoFitError, NumericalError, ValidationError
from .escape_lab import (
    aggregate_observations,
    fit_escape_models,
    measure_escape,
    quadratic_well_tilt,
    read_sweep_csv,
    write_sweep_csv,
)
from .experiments import (
    AnnealHoldSchedule,
    HierarchySchedule,
    LearnedBetaSchedule,
    ReverseSchedule,
    branch_overlap,
    gen_bimodal,
    gen_hierarchical,
    gen_unimodal,
    read_trajectory_csv,
    run_endogenous,
    run_forward_split,
    run_hierarchical,
    run_reverse_traversal,
    trajectory_summary,
    write_trajectory_csv,
)
from .gmm_probe import ProbeConfig, beta_c, exact_collapsed
from .hessian import analytic_hessian, find_crossing, find_crossing_numeric, numerical_hessian
from .mathcore import covariance
from .sde import (
    SdeConfig,
    persistence_stats,
    predict_persistence,
    simulate_coupled_modes,
    simulate_pitchfork_1d,
)
from .svgplot import line_chart
from .taxonomy import ClassifierThresholds, axis_reading, classify

# Per-command defaults layered under any user-provided configuration: each
# experiment keeps the prototype counts, learning rates, and sizes its
# protocol was calibrated with unless the user explicitly overrides them.
_OVERLAYS = {
    ("toy", "bimodal"): {"probe": {"k": "8", "lr_means": "0.02"}},
    ("toy", "unimodal"): {"probe": {"k": "8", "lr_means": "0.02"}},
    ("toy", "hierarchy"): {"probe": {"k": "8", "lr_means": "0.08"}, "data": {"n": "4000"}},
    ("toy", "reverse"): {"probe": {"k": "2", "lr_means": "0.05"}, "data": {"n": "3000"}},
    ("toy", "endogenous"): {"probe": {"k": "8", "lr_means": "0.015"}, "data": {"n": "4000"}},
    ("sde", "pitchfork"): {
        "sde": {"steps": "10000", "init_scale": "1e-3", "eps0": "1e-3"}
    },
    ("sde", "coupled"): {
        "sde": {
            "coupling": "1e-3",
            "noise_intensity": "1e-5",
            "dt": "0.05",
            "steps": "1000",
            "modes": "50",
            "dim": "10",
            "init_scale": "0.05",
        }
    },
}

# Keys too bulky for the merged cross-seed summary; they stay in the
# per-seed JSON files.
_BULKY_SUMMARY_KEYS = ("loss_trace", "branch")


# ---------------------------------------------------------------------------
# small shared helpers


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _payload(cfg, **fields):
    return {"config_hash": cfg.config_hash, "version": __version__, **fields}


def _fit_report_dict(report):
    if report is None:
        return None
    return {
        "model": report.model_kind,
        "intercept": float(report.coefficients[0]),
        "slope": float(report.coefficients[1]),
        "chi_squared": float(report.chi_squared),
        "aic": float(report.aic),
    }


def _resolve_input(raw):
    """An existing path, else a bundled fixture of the same name."""
    if raw is None:
        raise ConfigError("this command needs --input PATH")
    p = Path(raw)
    if p.exists():
        return p
    bundled = importlib.resources.files("bifurc") / "fixtures" / raw
    if bundled.is_file():
        return bundled
    raise FileNotFoundError(f"input not found: {raw}")


def _parallel_map(fn, jobs):
    """Map over jobs in a process pool; serial for single jobs or broken pools."""
    jobs = list(jobs)
    if len(jobs) <= 1:
        return [fn(j) for j in jobs]
    workers = min(len(jobs), os.cpu_count() or 1)
    try:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    except (BrokenExecutor, OSError):
        return [fn(j) for j in jobs]


def _probe_config(cfg):
    return ProbeConfig(
        K_probe=cfg.get_int("probe", "k"),
        lr_means=cfg.get_float("probe", "lr_means"),
        lr_logbeta=cfg.get_float("probe", "lr_logbeta"),
        log_beta_init=cfg.get_float("probe", "log_beta_init"),
    )


def _sde_config(cfg, seed):
    return SdeConfig(
        growth_rate=cfg.get_float("sde", "growth_rate"),
        alpha=cfg.get_float("sde", "alpha"),
        coupling=cfg.get_float("sde", "coupling"),
        noise_intensity=cfg.get_float("sde", "noise_intensity"),
        dt=cfg.get_float("sde", "dt"),
        steps=cfg.get_int("sde", "steps"),
        modes=cfg.get_int("sde", "modes"),
        dim=cfg.get_int("sde", "dim"),
        init_scale=cfg.get_float("sde", "init_scale"),
        seed=seed,
    )


def _write_csv_rows(path, header, rows, comment):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {comment}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("" if v is None else repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# calibrate-hessian


def _cmd_calibrate_hessian(cfg, out_dir):
    k = cfg.get_int("hessian", "k")
    source = cfg.get_choice("hessian", "source", {"bimodal", "identity"})
    seed = cfg.seeds()[0]
    if source == "identity":
        cov = np.eye(cfg.get_int("hessian", "dim"))
        samples = None
    else:
        ds = gen_bimodal(
            cfg.get_int("hessian", "n"),
            cfg.get_float("hessian", "center_offset"),
            cfg.get_float("hessian", "scale"),
            seed=seed,
        )
        samples = ds.samples
        cov = covariance(samples)
    guess = beta_c(cov)
    lo = guess * cfg.get_float("hessian", "bracket_lo_ratio")
    hi = guess * cfg.get_float("hessian", "bracket_hi_ratio")
    report = find_crossing(k, cov, lo, hi)
    result = {
        "k": k,
        "source": source,
        "seed": seed,
        "beta_critical_analytic": float(report.beta_critical_analytic),
        "beta_critical_numeric": float(report.beta_critical_numeric),
        "crossing_gap": float(
            abs(report.beta_critical_numeric - report.beta_critical_analytic)
        ),
    }
    if samples is None:
        result.update(
            beta_critical_finite_difference=None,
            finite_difference_gap=None,
            max_abs_hessian_difference=None,
        )
    else:
        fd_bc = find_crossing_numeric(k, samples, lo, hi)
        beta_ref = report.beta_critical_analytic
        state = exact_collapsed(samples, k, math.log(beta_ref))
        numeric = numerical_hessian(state, samples)
        analytic = analytic_hessian(beta_ref, k, cov)
        result.update(
            beta_critical_finite_difference=float(fd_bc),
            finite_difference_gap=float(abs(fd_bc - report.beta_critical_analytic)),
            max_abs_hessian_difference=float(np.max(np.abs(numeric - analytic))),
        )
    _write_json(out_dir / "hessian_report.json", _payload(cfg, **result))
    xs = [b for b, _ in report.scan_points]
    ys = [v for _, v in report.scan_points]
    line_chart(
        out_dir / "hessian_scan.svg",
        [("lowest eigenvalue", xs, ys), ("zero", [xs[0], xs[-1]], [0.0, 0.0])],
        title="lowest Hessian eigenvalue vs precision",
        x_label="beta",
        y_label="lowest eigenvalue",
    )
    print(f"wrote {out_dir / 'hessian_report.json'}")
    return 0


# ---------------------------------------------------------------------------
# toy experiments


def _toy_dataset(sub, cfg, seed):
    n = cfg.get_int("data", "n")
    if sub in ("bimodal", "reverse", "endogenous"):
        return gen_bimodal(
            n,
            cfg.get_float("data", "center_offset"),
            cfg.get_float("data", "scale"),
            seed=seed,
        )
    if sub == "unimodal":
        return gen_unimodal(
            n, cfg.get_int("data", "dim"), cfg.get_float("data", "scale"), seed=seed
        )
    return gen_hierarchical(
        n,
        cfg.get_float("data", "super_spacing"),
        cfg.get_float("data", "sub_spacing"),
        cfg.get_float("data", "cluster_scale"),
        seed=seed,
    )


def _toy_worker(job):
    """Run one (subcommand, seed) cell and write its own files."""
    sub, cfg, seed, out = job
    out_dir = Path(out)
    dataset = _toy_dataset(sub, cfg, seed)
    probe = _probe_config(cfg)
    record_every = cfg.get_int("experiment", "record_every")
    logs = {}
    if sub in ("bimodal", "unimodal"):
        mode = cfg.get_choice("experiment", "mode", {"learned", "anneal"})
        if mode == "learned":
            schedule = LearnedBetaSchedule(
                steps=cfg.get_int("experiment", "steps"), record_every=record_every
            )
        else:
            schedule = AnnealHoldSchedule(record_every=record_every)
        log, _ = run_forward_split(dataset, probe, schedule)
        logs[""] = log
    elif sub == "reverse":
        forward, state = run_forward_split(
            dataset, probe, AnnealHoldSchedule(record_every=record_every)
        )
        reverse = run_reverse_traversal(
            dataset, state, ReverseSchedule(), lr_means=probe.lr_means
        )
        merge_err = reverse.summary.get("merge_relative_error")
        reverse.summary["reverse_tracking_error"] = (
            None if merge_err is None else abs(float(merge_err))
        )
        reverse.summary["branch_overlap"] = branch_overlap(forward, reverse)
        logs["_forward"] = forward
        logs["_reverse"] = reverse
    elif sub == "endogenous":
        log = run_endogenous(
            dataset,
            encoder_lr=cfg.get_float("experiment", "encoder_lr"),
            config=probe,
            steps=cfg.get_int("experiment", "encoder_steps"),
            latent_dim=cfg.get_int("experiment", "latent_dim"),
            init_weight_scale=cfg.get_float("experiment", "init_weight_scale"),
            record_every=record_every,
        )
        logs[""] = log
    else:  # hierarchy
        log = run_hierarchical(
            dataset, probe, HierarchySchedule(record_every=record_every)
        )
        logs[""] = log
    summaries = {}
    for suffix, log in logs.items():
        log.config_hash = cfg.config_hash
        write_trajectory_csv(log, out_dir / f"toy-{sub}_seed{seed}{suffix}.csv")
        summaries[suffix] = trajectory_summary(log)
    _write_json(out_dir / f"toy-{sub}_seed{seed}.json", _payload(cfg, **{
        "experiment": f"toy-{sub}",
        "seed": seed,
        **(summaries[""] if "" in summaries else {
            "forward": summaries["_forward"],
            "reverse": summaries["_reverse"],
            "reverse_tracking_error": summaries["_reverse"]["reverse_tracking_error"],
        }),
    }))
    return seed, summaries


def _prune_summary(summary):
    return {k: v for k, v in summary.items() if k not in _BULKY_SUMMARY_KEYS}


def _plot_toy(sub, cfg, seeds, results, out_dir):
    if sub == "reverse":
        series = []
        for seed, summaries in results:
            for leg in ("_forward", "_reverse"):
                branch = summaries[leg].get("branch") or []
                if branch:
                    pts = sorted(branch)
                    series.append(
                        (
                            f"seed {seed}{leg.replace('_', ' ')}",
                            [p[0] for p in pts],
                            [p[1] for p in pts],
                        )
                    )
        if not series:
            return
        line_chart(
            out_dir / f"toy-{sub}.svg",
            series,
            title="equilibrium branches: prototype separation vs precision",
            x_label="beta",
            y_label="order parameter",
        )
        return
    series = []
    for seed, _ in results:
        log = read_trajectory_csv(out_dir / f"toy-{sub}_seed{seed}.csv")
        steps = [r.step for r in log.readings]
        series.append((f"seed {seed}", steps, list(log.column("log_ratio"))))
    if series:
        xs = series[0][1]
        series.append(("crossing", [xs[0], xs[-1]], [0.0, 0.0]))
    line_chart(
        out_dir / f"toy-{sub}.svg",
        series,
        title=f"toy {sub}: precision ratio trajectory",
        x_label="step",
        y_label="log(beta / beta_c)",
    )


def _cmd_toy(sub, cfg, out_dir):
    seeds = cfg.seeds()
    jobs = [(sub, cfg, seed, str(out_dir)) for seed in seeds]
    results = sorted(_parallel_map(_toy_worker, jobs), key=lambda r: r[0])
    per_seed = {}
    for seed, summaries in results:
        if "" in summaries:
            per_seed[str(seed)] = _prune_summary(summaries[""])
        else:
            per_seed[str(seed)] = {
                "forward": _prune_summary(summaries["_forward"]),
                "reverse": _prune_summary(summaries["_reverse"]),
            }
    merged = {"experiment": f"toy-{sub}", "seeds": seeds, "per_seed": per_seed}
    if sub == "reverse":
        errors = [
            per_seed[str(s)]["reverse"]["reverse_tracking_error"] for s in seeds
        ]
        merged["reverse_tracking_error"] = (
            None if any(e is None for e in errors) else max(errors)
        )
    _write_json(out_dir / f"toy-{sub}_summary.json", _payload(cfg, **merged))
    _plot_toy(sub, cfg, seeds, results, out_dir)
    print(f"wrote {out_dir / f'toy-{sub}_summary.json'}")
    return 0


# ---------------------------------------------------------------------------
# sde


def _pitchfork_worker(job):
    cfg, seed, out = job
    config = _sde_config(cfg, seed)
    run = simulate_pitchfork_1d(config, eps0=cfg.get_optional_float("sde", "eps0"))
    eps = run.path_samples[:, 0, 0]
    _write_csv_rows(
        Path(out) / f"sde-pitchfork_seed{seed}.csv",
        ["t", "epsilon"],
        list(zip([float(t) for t in run.times], [float(e) for e in eps])),
        f"experiment=sde-pitchfork seed={seed} config={cfg.config_hash} version={__version__}",
    )
    return seed, [float(t) for t in run.times], [float(e) for e in eps]


def _cmd_sde_pitchfork(cfg, out_dir):
    seeds = cfg.seeds()
    results = sorted(
        _parallel_map(_pitchfork_worker, [(cfg, s, str(out_dir)) for s in seeds]),
        key=lambda r: r[0],
    )
    base = _sde_config(cfg, seeds[0])
    eps_star = base.epsilon_star if base.growth_rate > 0 else 0.0
    merged = {
        "experiment": "sde-pitchfork",
        "seeds": seeds,
        "saturation_amplitude": float(eps_star),
        "per_seed": {
            str(seed): {"final_epsilon": eps[-1], "n_recorded": len(eps)}
            for seed, _, eps in results
        },
    }
    _write_json(out_dir / "sde-pitchfork_summary.json", _payload(cfg, **merged))
    series = [(f"seed {s}", ts, eps) for s, ts, eps in results]
    t_lo, t_hi = results[0][1][0], results[0][1][-1]
    series.append(("saturation", [t_lo, t_hi], [eps_star, eps_star]))
    line_chart(
        out_dir / "sde-pitchfork.svg",
        series,
        title="pitchfork normal form: amplitude vs time",
        x_label="t",
        y_label="epsilon",
    )
    print(f"wrote {out_dir / 'sde-pitchfork_summary.json'}")
    return 0


def _coupled_worker(job):
    cfg, seed, out = job
    run = simulate_coupled_modes(_sde_config(cfg, seed))
    stats = persistence_stats(run)
    cos_by_mode = {}
    kept = [
        i for i in range(run.final_state.shape[0]) if i not in run.zero_final_modes
    ]
    for idx, mode in enumerate(kept):
        cos_by_mode[mode] = float(stats.cosines[idx])
    rows = []
    for mode in range(run.final_state.shape[0]):
        p0, p1 = stats.projection_pairs[mode]
        rows.append((mode, float(p0), float(p1), cos_by_mode.get(mode)))
    _write_csv_rows(
        Path(out) / f"sde-coupled_seed{seed}.csv",
        ["mode", "projection_initial", "projection_final", "cosine"],
        rows,
        f"experiment=sde-coupled seed={seed} config={cfg.config_hash} version={__version__}",
    )
    mean_cos = float(np.mean(stats.cosines)) if len(stats.cosines) else None
    return seed, float(stats.spearman_rho), mean_cos, len(stats.excluded_modes)


def _cmd_sde_coupled(cfg, out_dir):
    seeds = cfg.seeds()
    results = sorted(
        _parallel_map(_coupled_worker, [(cfg, s, str(out_dir)) for s in seeds]),
        key=lambda r: r[0],
    )
    rhos = [r[1] for r in results]
    prediction = predict_persistence(_sde_config(cfg, seeds[0]))
    merged = {
        "experiment": "sde-coupled",
        "seeds": seeds,
        "mean_spearman_rho": float(np.mean(rhos)),
        "min_spearman_rho": float(np.min(rhos)),
        "per_seed": {
            str(seed): {
                "spearman_rho": rho,
                "mean_cosine": mean_cos,
                "excluded_modes": excluded,
            }
            for seed, rho, mean_cos, excluded in results
        },
        "prediction": {
            "sigma_star": float(prediction.sigma_star),
            "tau_r": float(prediction.tau_r),
            "t_rand": float(prediction.t_rand),
            "theta_sq": float(prediction.theta_sq),
            "expected_cosine": float(prediction.expected_cosine),
            "saturation_dominated": bool(prediction.saturation_dominated),
        },
    }
    _write_json(out_dir / "sde-coupled_summary.json", _payload(cfg, **merged))
    mean_rho = merged["mean_spearman_rho"]
    series = [
        ("spearman rho", seeds, rhos),
        ("mean", [seeds[0], seeds[-1]], [mean_rho, mean_rho]),
    ]
    cosines = [r[2] for r in results]
    if all(c is not None for c in cosines):
        series.append(("mean cosine", seeds, cosines))
    line_chart(
        out_dir / "sde-coupled.svg",
        series,
        title="mode-lottery persistence across seeds",
        x_label="seed",
        y_label="statistic",
    )
    print(f"wrote {out_dir / 'sde-coupled_summary.json'}")
    return 0


# ---------------------------------------------------------------------------
# escape


def _escape_base_config(cfg):
    return SdeConfig(
        growth_rate=cfg.get_float("escape", "growth_rate"),
        alpha=cfg.get_float("escape", "alpha"),
        coupling=0.0,
        noise_intensity=cfg.get_float("escape", "noise_intensity"),
        dt=cfg.get_float("escape", "dt"),
        steps=1,
        modes=1,
        dim=1,
        init_scale=cfg.get_float("escape", "init_scale"),
        seed=0,
    )


def _escape_cell(job):
    cfg, gamma, seed = job
    from dataclasses import replace

    base = replace(_escape_base_config(cfg), coupling=gamma, seed=1000 * seed)
    tilt = quadratic_well_tilt(cfg.get_float("escape", "tilt_curvature"))
    return measure_escape(
        base,
        tilt,
        cfg.get_float("escape", "threshold"),
        horizon=cfg.get_int("escape", "horizon"),
    )


def _fit_payload(summary):
    return {
        "power_law": _fit_report_dict(summary.power_law),
        "kramers": _fit_report_dict(summary.kramers),
        "delta_aic": None if summary.delta_aic is None else float(summary.delta_aic),
        "unit_weights_used": bool(summary.unit_weights_used),
    }


def _plot_escape_fit(path, stats, summary):
    points = [
        (s.gamma, s.tau_mean)
        for s in stats
        if s.tau_mean is not None and s.gamma > 0 and s.tau_mean > 0
    ]
    if not points:
        return
    lg = [math.log10(g) for g, _ in points]
    lt = [math.log10(t) for _, t in points]
    series = [("measured", lg, lt)]
    if summary is not None and summary.power_law is not None:
        grid = np.linspace(min(lg), max(lg), 40)
        a, b = summary.power_law.coefficients
        series.append(
            ("power law", list(grid), [(a + b * (x * math.log(10))) / math.log(10) for x in grid])
        )
        a, b = summary.kramers.coefficients
        series.append(
            (
                "exponential",
                list(grid),
                [(a + b * (10.0 ** x)) / math.log(10) for x in grid],
            )
        )
    line_chart(
        path,
        series,
        title="mean escape time vs coupling",
        x_label="log10 gamma",
        y_label="log10 tau",
    )


def _cmd_escape_sweep(cfg, out_dir):
    gammas = cfg.get_float_list("escape", "gammas")
    seeds_per_gamma = cfg.get_int("escape", "seeds_per_gamma")
    if seeds_per_gamma < 1:
        raise ConfigError("escape.seeds_per_gamma must be >= 1")
    jobs = [(cfg, g, s) for g in sorted(set(gammas)) for s in range(seeds_per_gamma)]
    observations = _parallel_map(_escape_cell, jobs)
    stats = aggregate_observations(observations)
    write_sweep_csv(
        out_dir / "escape-sweep.csv",
        stats,
        preamble=f"experiment=escape-sweep config={cfg.config_hash} version={__version__}",
    )
    warning = None
    summary = None
    try:
        summary = fit_escape_models(stats)
    except NoFitError:
        warning = "all sweep cells censored within the horizon; no model fit performed"
    if summary is not None and summary.power_law is None:
        warning = "fewer than 3 uncensored gamma > 0 levels; no model fit performed"
    payload = {
        "experiment": "escape-sweep",
        "per_gamma": [
            {
                "gamma": s.gamma,
                "tau_mean": s.tau_mean,
                "tau_std": s.tau_std,
                "n_seeds": s.n_seeds,
                "n_censored": s.n_censored,
            }
            for s in stats
        ],
        "fit": None if summary is None else _fit_payload(summary),
        "warning": warning,
    }
    _write_json(out_dir / "escape-sweep.json", _payload(cfg, **payload))
    _plot_escape_fit(out_dir / "escape-sweep.svg", stats, summary)
    if warning:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"wrote {out_dir / 'escape-sweep.json'}")
    return 0


def _cmd_escape_fit(cfg, out_dir, input_arg):
    path = _resolve_input(input_arg)
    stats = read_sweep_csv(path)
    summary = fit_escape_models(stats)
    if summary.power_law is None:
        raise NoFitError("fewer than 3 uncensored gamma > 0 levels: cannot fit")
    payload = {"experiment": "escape-fit", "input": Path(str(path)).name}
    payload.update(_fit_payload(summary))
    _write_json(out_dir / "escape-fit.json", _payload(cfg, **payload))
    _plot_escape_fit(out_dir / "escape-fit.svg", stats, summary)
    print(f"wrote {out_dir / 'escape-fit.json'}")
    return 0


# ---------------------------------------------------------------------------
# classify


def _cmd_classify(cfg, out_dir, input_arg):
    path = _resolve_input(input_arg)
    log = read_trajectory_csv(path)
    thresholds = ClassifierThresholds(
        decoupling_abs_corr=cfg.get_float("taxonomy", "decoupling_abs_corr"),
        plateau_fraction=cfg.get_float("taxonomy", "plateau_fraction"),
        descent_decades=cfg.get_float("taxonomy", "descent_decades"),
        fold_return=cfg.get_float("taxonomy", "fold_return"),
        smooth_window=cfg.get_int("taxonomy", "smooth_window"),
        min_readings=cfg.get_int("taxonomy", "min_readings"),
    )
    horizon = cfg.get_optional_float("taxonomy", "horizon")
    shape = classify(log, horizon=horizon, thresholds=thresholds)
    axes = axis_reading(log, horizon=horizon, thresholds=thresholds)
    payload = _payload(
        cfg,
        input=Path(str(path)).name,
        label=shape.label,
        descent_corr=float(shape.descent_corr),
        descent_sign=int(shape.descent_sign),
        plateau_fraction=float(shape.plateau_fraction),
        decoupling_corr=float(shape.decoupling_corr),
        indeterminate=bool(shape.indeterminate),
        axes={
            "initial_criticality": axes.initial_criticality,
            "rate_ordering": axes.rate_ordering,
            "dissipation_regime": axes.dissipation_regime,
        },
    )
    _write_json(out_dir / "classify.json", payload)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch


def _add_common(parser, with_input=False):
    parser.add_argument("--config", metavar="PATH", help="INI configuration file")
    parser.add_argument("--preset", metavar="NAME", help="bundled preset name")
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--seed", type=int, metavar="N", help="single RNG seed")
    group.add_argument(
        "--seeds", type=int, metavar="N", help="sweep over seeds 0..N-1"
    )
    parser.add_argument("--out", metavar="DIR", help="output directory")
    if with_input:
        parser.add_argument(
            "--input",
            metavar="PATH",
            help="input CSV (a path, or the name of a bundled fixture)",
        )


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="bifurc",
        description="Representation-bifurcation toolkit: probes, Hessians, "
        "stochastic simulators, escape fits, and trajectory classification.",
    )
    parser.add_argument(
        "--version", action="version", version=f"bifurc {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "calibrate-hessian",
        help="compare closed-form and finite-difference critical precision",
    )
    _add_common(p)

    p = sub.add_parser("toy", help="run one toy experiment")
    p.add_argument(
        "subcommand",
        choices=["bimodal", "unimodal", "hierarchy", "reverse", "endogenous"],
    )
    _add_common(p)

    p = sub.add_parser("sde", help="run one stochastic simulator")
    p.add_argument("subcommand", choices=["pitchfork", "coupled"])
    _add_common(p)

    p = sub.add_parser("escape", help="escape-time sweep or model fit")
    p.add_argument("subcommand", choices=["sweep", "fit"])
    _add_common(p, with_input=True)

    p = sub.add_parser("classify", help="classify a trajectory CSV")
    _add_common(p, with_input=True)

    return parser


def _flag_overrides(args):
    flags = {}
    if getattr(args, "seed", None) is not None:
        flags.setdefault("run", {})["seeds"] = str(args.seed)
    if getattr(args, "seeds", None) is not None:
        if args.seeds < 1:
            raise ConfigError("--seeds must be >= 1")
        flags.setdefault("run", {})["seeds"] = ",".join(
            str(i) for i in range(args.seeds)
        )
    if getattr(args, "out", None) is not None:
        flags.setdefault("run", {})["out"] = args.out
    return flags


def _dispatch(args):
    sub = getattr(args, "subcommand", None)
    overlay = _OVERLAYS.get((args.command, sub), {})
    cfg = build_config(
        overlay=overlay,
        preset=args.preset,
        path=args.config,
        flags=_flag_overrides(args),
    )
    if not cfg.seeds():
        raise ConfigError("run.seeds must list at least one seed")
    out_dir = Path(cfg.get("run", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.command == "calibrate-hessian":
        return _cmd_calibrate_hessian(cfg, out_dir)
    if args.command == "toy":
        return _cmd_toy(sub, cfg, out_dir)
    if args.command == "sde":
        if sub == "pitchfork":
            return _cmd_sde_pitchfork(cfg, out_dir)
        return _cmd_sde_coupled(cfg, out_dir)
    if args.command == "escape":
        if sub == "sweep":
            return _cmd_escape_sweep(cfg, out_dir)
        return _cmd_escape_fit(cfg, out_dir, args.input)
    return _cmd_classify(cfg, out_dir, args.input)


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ValidationError as exc:  # includes ConfigError
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
