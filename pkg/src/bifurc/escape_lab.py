"""Escape-time measurement, dissipation sweeps, and model comparison.

The metastable scenario: after the pitchfork crossing the order parameter
sits microscopically close to the (now unstable) symmetric state; an extra
drift -gamma U'(eps) from upstream dissipation tilts the effective potential

    V_eff(eps) = -(1/2) mu eps^2 + (1/4) alpha eps^4 + gamma U(eps)

and controls how long the escape to the broken-symmetry branch takes. This
module measures first-passage times over gamma sweeps with censoring at a
horizon, and compares two functional forms for tau(gamma):

    power_law            log tau = a + b log gamma
    kramers_exponential  log tau = a + b gamma

by weighted least squares in log tau with relative-error weights
(mean/std)^2, AIC = chi^2 + 2k. Censored levels are reported but never
fitted. Escape times are in integrator steps.

The built-in tilt is U(eps) = -(1/2) eps^2: the drift gains +gamma eps, the
drift-dominated regime with effective linear rate mu + gamma.
"""

import csv
import math
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from .errors import ConfigError, NoFitError, ValidationError
from .mathcore import FitReport, fit_model

DEFAULT_HORIZON = 10**6


@dataclass
class TiltPotential:
    """An evaluable tilt U(eps) with its exact derivative U'(eps).

    Construction spot-checks that dU matches a central difference of U at a
    few points (1e-8 band), so a mistyped derivative fails fast.
    """

    U: callable
    dU: callable
    description: str = ""

    def __post_init__(self):
        for x in (-0.7, 0.11, 0.9):
            h = 1e-6
            fd = (self.U(x + h) - self.U(x - h)) / (2 * h)
            if abs(fd - self.dU(x)) > 1e-8 * max(1.0, abs(self.dU(x))):
                raise ValidationError(
                    f"dU is not the derivative of U at {x}: {self.dU(x)} vs {fd}"
                )


def quadratic_well_tilt(c=1.0):
    """The canonical built-in tilt U(eps) = -(1/2) c eps^2 (c > 0).

    -gamma U' = +gamma c eps: linear destabilization, escape rate mu + gamma c.
    """
    if c <= 0:
        raise ValidationError("quadratic_well_tilt needs c > 0")
    return TiltPotential(
        U=lambda e: -0.5 * c * e * e,
        dU=lambda e: -c * e,
        description=f"U(eps) = -(1/2)*{c}*eps^2",
    )


@dataclass
class EscapeObservation:
    """First-passage result for one (gamma, seed) cell.

    tau is in integrator steps; censored means |eps| never reached the
    threshold within the horizon (tau is then None).
    """

    gamma: float
    seed: int
    tau: Optional[int]
    horizon: int
    censored: bool


@dataclass
class GammaStats:
    gamma: float
    tau_mean: Optional[float]
    tau_std: Optional[float]
    n_seeds: int
    n_censored: int


@dataclass
class SweepSummary:
    """Per-gamma statistics plus both model fits (when fittable)."""

    per_gamma: List[GammaStats]
    power_law: Optional[FitReport]
    kramers: Optional[FitReport]
    delta_aic: Optional[float]
    unit_weights_used: bool = False


def measure_escape(config, tilt, threshold, horizon=DEFAULT_HORIZON, eps0=None):
    """First step at which |eps| >= threshold, or a censored observation.

    Starts at eps0 (default: config.init_scale, exactly). The threshold must
    lie strictly between init_scale and the saturation amplitude eps*.
    Noise uses the config seed; with noise_intensity 0 the path is
    deterministic and no random numbers are drawn.
    """
    if config.modes != 1 or config.dim != 1:
        raise ConfigError("measure_escape runs the scalar dynamics (modes = dim = 1)")
    if config.growth_rate > 0:
        eps_star = config.epsilon_star
        if not (config.init_scale < threshold < eps_star):
            raise ConfigError(
                f"threshold {threshold} outside (init_scale, eps*) = "
                f"({config.init_scale}, {eps_star})"
            )
    elif threshold <= config.init_scale:
        raise ConfigError("threshold must exceed init_scale")
    start = config.init_scale if eps0 is None else float(eps0)
    if abs(start) >= threshold:
        return EscapeObservation(config.coupling, config.seed, 0, horizon, False)
    mu = config.growth_rate
    al = config.alpha
    ga = config.coupling
    dt = config.dt
    amp = math.sqrt(2.0 * config.noise_intensity * dt)
    du = tilt.dU if (tilt is not None and ga != 0.0) else None
    eps = start
    if amp == 0.0:
        # deterministic: plain float loop, no draws
        for n in range(1, horizon + 1):
            drift = mu * eps - al * eps * eps * eps
            if du is not None:
                drift -= ga * du(eps)
            eps += dt * drift
            if abs(eps) >= threshold:
                return EscapeObservation(ga, config.seed, n, horizon, False)
        return EscapeObservation(ga, config.seed, None, horizon, True)
    rng = np.random.default_rng(config.seed)
    chunk = 65536
    n = 0
    while n < horizon:
        draws = rng.standard_normal(min(chunk, horizon - n))
        for g in draws:
            n += 1
            drift = mu * eps - al * eps * eps * eps
            if du is not None:
                drift -= ga * du(eps)
            eps += dt * drift + amp * g
            if abs(eps) >= threshold:
                return EscapeObservation(ga, config.seed, n, horizon, False)
    return EscapeObservation(ga, config.seed, None, horizon, True)


def default_sweep_config():
    """Scalar base config for the built-in dissipation sweep.

    mu = 1e-5 and alpha = 0.1 put eps* at 0.01; the threshold eps*/2 and
    start eps*/20 give tau ~= ln(10)/(mu + gamma) time units, so the gamma=0
    deterministic control needs ~4.9e6 steps and censors at the 1e6 horizon
    while every gamma >= 1e-4 escapes well inside it.
    """
    from .sde import SdeConfig

    return SdeConfig(
        growth_rate=1e-5,
        alpha=0.1,
        coupling=0.0,
        noise_intensity=0.0,
        dt=0.05,
        steps=1,
        modes=1,
        dim=1,
        init_scale=5e-4,
        seed=0,
    )


DEFAULT_GAMMAS = (0.0, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2)
DEFAULT_THRESHOLD = 5e-3


def run_sweep(
    gammas,
    seeds_per_gamma,
    config,
    tilt,
    threshold,
    horizon=DEFAULT_HORIZON,
):
    """Escape-time sweep over gamma levels.

    Each (gamma, seed) cell runs measure_escape with the config's coupling
    replaced by gamma and the seed offset deterministically. Censored cells
    are counted per level; levels with no uncensored cell get empty means.
    Fitting needs >= 3 distinct uncensored gamma > 0 levels; with none at
    all this raises NoFitError (callers that want the statistics anyway
    should use aggregate_observations and fit separately).
    """
    gl = list(gammas)
    if len(set(gl)) < 3:
        raise ValidationError("run_sweep needs >= 3 distinct gamma values")
    if seeds_per_gamma < 1:
        raise ValidationError("seeds_per_gamma must be >= 1")
    obs = []
    for g in sorted(gl):
        for s in range(seeds_per_gamma):
            cell = replace(config, coupling=float(g), seed=config.seed + 1000 * s)
            obs.append(measure_escape(cell, tilt, threshold, horizon))
    return summarize_observations(obs)


def aggregate_observations(observations):
    """Per-gamma escape statistics, sorted by gamma (no fitting)."""
    by_gamma = {}
    for o in sorted(observations, key=lambda o: (o.gamma, o.seed)):
        by_gamma.setdefault(o.gamma, []).append(o)
    stats = []
    for g in sorted(by_gamma):
        cells = by_gamma[g]
        taus = [o.tau for o in cells if not o.censored]
        n_cens = sum(1 for o in cells if o.censored)
        if taus:
            mean = float(np.mean(taus))
            std = float(np.std(taus))
        else:
            mean = std = None
        stats.append(GammaStats(g, mean, std, len(cells), n_cens))
    return stats


def summarize_observations(observations):
    """Aggregate observations per gamma and fit both models if possible."""
    return _fit_stats(aggregate_observations(observations))


def _fit_stats(stats):
    fittable = [s for s in stats if s.tau_mean is not None and s.gamma > 0 and s.tau_mean > 0]
    if not any(s.tau_mean is not None for s in stats):
        raise NoFitError("all sweep cells censored: nothing to fit")
    if len(fittable) < 3:
        return SweepSummary(stats, None, None, None)
    g = np.array([s.gamma for s in fittable])
    m = np.array([s.tau_mean for s in fittable])
    sd = np.array([s.tau_std for s in fittable])
    unit = bool(np.any(sd <= 0))
    w = np.ones_like(m) if unit else (m / sd) ** 2
    power = fit_model("power_law", g, np.log(m), w)
    kram = fit_model("kramers_exponential", g, np.log(m), w)
    return SweepSummary(
        per_gamma=stats,
        power_law=power,
        kramers=kram,
        delta_aic=kram.aic - power.aic,
        unit_weights_used=unit,
    )


def fit_escape_models(per_gamma_stats):
    """Model comparison on pre-aggregated (gamma, mean, std, counts) rows."""
    return _fit_stats(list(per_gamma_stats))


CSV_HEADER = ["gamma", "tau_mean", "tau_std", "n_seeds", "censored"]


def read_sweep_csv(path):
    """Ingest per-gamma escape statistics from the documented CSV schema.

    Header: gamma,tau_mean,tau_std,n_seeds,censored. Empty tau fields mark
    fully censored levels; censored is the count of censored seeds.
    """
    rows = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != CSV_HEADER:
        raise ValidationError(
            f"bad escape CSV header: expected {','.join(CSV_HEADER)}"
        )
    for rec in reader:
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != 5:
            raise ValidationError(f"bad escape CSV row: {rec}")
        g = float(rec[0])
        mean = float(rec[1]) if rec[1].strip() else None
        std = float(rec[2]) if rec[2].strip() else None
        n = int(rec[3])
        cens = int(rec[4])
        rows.append(GammaStats(g, mean, std if mean is not None else None, n, cens))
    if not rows:
        raise ValidationError("escape CSV has no data rows")
    return rows


def write_sweep_csv(path, stats, preamble=None):
    with open(path, "w", newline="") as fh:
        if preamble:
            fh.write(f"# {preamble}\n")
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for s in stats:
            w.writerow(
                [
                    repr(s.gamma),
                    "" if s.tau_mean is None else repr(s.tau_mean),
                    "" if s.tau_std is None else repr(s.tau_std),
                    s.n_seeds,
                    s.n_censored,
                ]
            )
