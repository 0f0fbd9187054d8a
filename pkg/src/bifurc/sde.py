"""Euler-Maruyama simulators for the order-parameter dynamics.

Three systems share one integrator convention:

  * scalar supercritical pitchfork   eps' = mu eps - alpha eps^3 + eta
  * tilted scalar Langevin           eps' = mu eps - alpha eps^3 - gamma U'(eps) + eta
  * K coupled modes in R^d           eps_k' = mu eps_k - alpha ||eps_k||^2 eps_k
                                             - gamma sum_{j!=k} (eps_j^T eps_k) eps_j
                                             + eta_k

with white noise <eta(t) eta(t')> = 2 D delta(t - t'), i.e. a per-coordinate
increment of sqrt(2 D dt) * N(0,1) per step. The generator is numpy's
default_rng (PCG64, ziggurat normal transform), seeded from SdeConfig.seed;
identical seeds reproduce identical paths bit-for-bit on one platform.

Paths are decimated to at most ~2000 recorded states. The coupled-mode
simulator also draws a fixed random unit reference direction (after the
initial condition, before the path noise) used by the scalar-projection
persistence proxy.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import ValidationError
from .mathcore import spearman

STABILITY_LIMIT = 0.2


@dataclass
class SdeConfig:
    """Parameters shared by the three simulators.

    growth_rate is the linear rate mu = beta - beta_c; alpha the cubic
    self-saturation; coupling the inter-mode (or tilt) strength gamma;
    noise_intensity the D of the 2D-delta convention; init_scale the
    per-coordinate standard deviation sigma_0 of the initial condition.
    """

    growth_rate: float
    alpha: float
    coupling: float = 0.0
    noise_intensity: float = 0.0
    dt: float = 0.01
    steps: int = 1000
    modes: int = 1
    dim: int = 1
    init_scale: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValidationError("alpha must be > 0")
        if self.coupling < 0 or self.noise_intensity < 0:
            raise ValidationError("coupling and noise_intensity must be >= 0")
        if self.dt <= 0 or self.steps < 1 or self.modes < 1 or self.dim < 1:
            raise ValidationError("dt, steps, modes, dim must be positive")
        guard = abs(self.growth_rate)
        if self.growth_rate > 0:
            guard = max(guard, self.alpha * (self.growth_rate / self.alpha))  # alpha*eps*^2 = mu
        guard = max(guard, self.coupling * self.modes)
        if self.dt * guard > STABILITY_LIMIT:
            raise ValidationError(
                f"stability guard violated: dt*max(|mu|, alpha*eps*^2, gamma*K) = "
                f"{self.dt * guard:.3g} > {STABILITY_LIMIT}"
            )

    @property
    def epsilon_star(self):
        """Equilibrium amplitude sqrt(mu/alpha); defined only for mu > 0."""
        if self.growth_rate <= 0:
            raise ValidationError("epsilon_star requires growth_rate > 0")
        return math.sqrt(self.growth_rate / self.alpha)


@dataclass
class SdeRunResult:
    """Decimated path plus endpoint data for one simulation."""

    times: np.ndarray  # strictly increasing recorded times
    path_samples: np.ndarray  # (n_rec, modes, dim)
    final_state: np.ndarray  # (modes, dim)
    initial_directions: np.ndarray  # (modes, dim) unit rows
    final_directions: np.ndarray  # (modes, dim) unit rows; zero rows flagged
    zero_final_modes: List[int]
    seed: int
    reference_direction: Optional[np.ndarray] = None


@dataclass
class PersistencePrediction:
    """Closed-form angular-diffusion budget for one coupled-mode run.

    theta_sq is the predicted accumulated squared angle at T = steps*dt:
    a growth-phase term (d-1)/sigma_star^2 plus a saturated-phase
    random-walk term 2 (d-1) D (T - tau_r) / r_star^2 (clamped at zero
    before tau_r). expected_cosine = 1 - theta_sq/2 (small-angle form).
    """

    sigma_star: float
    tau_r: float
    t_rand: float
    theta_sq: float
    expected_cosine: float
    saturation_dominated: bool = False


def _decimation(steps):
    return max(1, steps // 2000)


def _unit_rows(m):
    norms = np.linalg.norm(m, axis=1)
    zero = [i for i, v in enumerate(norms) if v == 0.0]
    safe = np.where(norms > 0, norms, 1.0)
    return m / safe[:, None], zero


def _record(times, samples, step, dt, state):
    times.append(step * dt)
    samples.append(state.copy())


def simulate_pitchfork_1d(config, eps0=None):
    """Scalar pitchfork normal form; requires modes = dim = 1.

    eps0 overrides the random N(0, init_scale^2) initial condition with an
    exact starting value (deterministic studies).
    """
    if config.modes != 1 or config.dim != 1:
        raise ValidationError("simulate_pitchfork_1d requires modes = dim = 1")
    return simulate_tilted_langevin(config, tilt=None, eps0=eps0)


def simulate_tilted_langevin(config, tilt, eps0=None):
    """Scalar Langevin with an optional tilt -gamma U'(eps) in the drift.

    With tilt None (or coupling 0 and a null tilt) this is exactly the
    pitchfork simulator: same seed, same path.
    """
    if config.modes != 1 or config.dim != 1:
        raise ValidationError("tilted Langevin requires modes = dim = 1")
    rng = np.random.default_rng(config.seed)
    mu, al, ga, d_noise, dt = (
        config.growth_rate,
        config.alpha,
        config.coupling,
        config.noise_intensity,
        config.dt,
    )
    if eps0 is None:
        eps = config.init_scale * float(rng.standard_normal())
    else:
        eps = float(eps0)
    amp = math.sqrt(2.0 * d_noise * dt)
    dec = _decimation(config.steps)
    times, samples = [], []
    _record(times, samples, 0, dt, np.array([[eps]]))
    eps0 = eps
    for n in range(1, config.steps + 1):
        drift = mu * eps - al * eps * eps * eps
        if tilt is not None and ga != 0.0:
            drift -= ga * tilt.dU(eps)
        eps = eps + dt * drift
        if amp > 0.0:
            eps += amp * float(rng.standard_normal())
        if n % dec == 0 or n == config.steps:
            _record(times, samples, n, dt, np.array([[eps]]))
    init = np.array([[eps0]])
    final = np.array([[eps]])
    idirs, _ = _unit_rows(init)
    fdirs, zero = _unit_rows(final)
    return SdeRunResult(
        times=np.asarray(times),
        path_samples=np.asarray(samples),
        final_state=final,
        initial_directions=idirs,
        final_directions=fdirs,
        zero_final_modes=zero,
        seed=config.seed,
    )


def effective_potential(config, tilt, eps):
    """V_eff(eps) = -(1/2) mu eps^2 + (1/4) alpha eps^4 + gamma U(eps)."""
    e = np.asarray(eps, dtype=float)
    v = -0.5 * config.growth_rate * e**2 + 0.25 * config.alpha * e**4
    if tilt is not None and config.coupling != 0.0:
        v = v + config.coupling * tilt.U(e)
    return v


def simulate_coupled_modes(config):
    """K modes in R^d with cubic self-saturation and inter-mode coupling.

    Initial condition: every entry of the K x d mode matrix i.i.d.
    N(0, init_scale^2). Coupling uses the Gram matrix G = E E^T:
    the j != k sum equals G E - ||eps_k||^2 eps_k row-wise.
    """
    if config.dim < 2 and config.modes > 1:
        raise ValidationError("coupled modes require dim >= 2")
    rng = np.random.default_rng(config.seed)
    k, d = config.modes, config.dim
    mu, al, ga, d_noise, dt = (
        config.growth_rate,
        config.alpha,
        config.coupling,
        config.noise_intensity,
        config.dt,
    )
    e = config.init_scale * rng.standard_normal((k, d))
    ref = rng.standard_normal(d)
    ref /= np.linalg.norm(ref)
    e0 = e.copy()
    amp = math.sqrt(2.0 * d_noise * dt)
    dec = _decimation(config.steps)
    times, samples = [], []
    _record(times, samples, 0, dt, e)
    for n in range(1, config.steps + 1):
        nr2 = np.einsum("kd,kd->k", e, e)
        drift = mu * e - al * nr2[:, None] * e
        if ga != 0.0 and k > 1:
            gram = e @ e.T
            drift -= ga * (gram @ e - nr2[:, None] * e)
        e = e + dt * drift
        if amp > 0.0:
            e += amp * rng.standard_normal((k, d))
        if n % dec == 0 or n == config.steps:
            _record(times, samples, n, dt, e)
    idirs, _ = _unit_rows(e0)
    fdirs, zero = _unit_rows(e)
    return SdeRunResult(
        times=np.asarray(times),
        path_samples=np.asarray(samples),
        final_state=e,
        initial_directions=idirs,
        final_directions=fdirs,
        zero_final_modes=zero,
        seed=config.seed,
        reference_direction=ref,
    )


@dataclass
class PersistenceStats:
    """Per-mode directional persistence and the scalar-projection proxy."""

    cosines: np.ndarray  # d_k(0)^T d_k(T), excluded modes dropped
    projection_pairs: np.ndarray  # (modes, 2): <eps_k(0), r>, <eps_k(T), r>
    spearman_rho: float
    excluded_modes: List[int] = field(default_factory=list)


def persistence_stats(run, reference=None):
    """Cosines d_k(0)^T d_k(T) and the Spearman of reference projections.

    reference defaults to the run's stored random direction. Modes whose
    final magnitude is exactly zero are excluded from the cosine list and
    reported in excluded_modes.
    """
    ref = reference if reference is not None else run.reference_direction
    if ref is None:
        raise ValidationError("no reference direction available")
    ref = np.asarray(ref, dtype=float)
    keep = [i for i in range(run.final_state.shape[0]) if i not in run.zero_final_modes]
    cos = np.einsum(
        "kd,kd->k", run.initial_directions[keep], run.final_directions[keep]
    )
    e0 = run.path_samples[0]
    p0 = e0 @ ref
    p1 = run.final_state @ ref
    rho = spearman(p0, p1)
    return PersistenceStats(
        cosines=cos,
        projection_pairs=np.stack([p0, p1], axis=1),
        spearman_rho=float(rho),
        excluded_modes=list(run.zero_final_modes),
    )


def predict_persistence(config):
    """Two-term angular-variance budget for the coupled-mode lottery.

    sigma_star = init_scale / sqrt(D/mu) is the initial amplitude in units
    of the linear-phase noise floor; tau_r the radial saturation time;
    t_rand = r_star^2 / (2 (d-1) D) the post-saturation randomization time.
    With D = 0 the floor vanishes: t_rand is +inf and only the (then zero)
    growth term remains.
    """
    if config.growth_rate <= 0:
        raise ValidationError("predict_persistence requires growth_rate > 0")
    mu, al, d_noise = config.growth_rate, config.alpha, config.noise_intensity
    d = config.dim
    t_total = config.steps * config.dt
    r_star = math.sqrt(mu / al)
    if d_noise == 0.0:
        return PersistencePrediction(
            sigma_star=math.inf,
            tau_r=math.log(r_star / config.init_scale) / mu if config.init_scale > 0 else math.inf,
            t_rand=math.inf,
            theta_sq=0.0,
            expected_cosine=1.0,
        )
    sigma_star = config.init_scale / math.sqrt(d_noise / mu)
    tau_r = (1.0 / mu) * math.log(sigma_star * math.sqrt(mu / (al * d_noise)))
    t_rand = r_star * r_star / (2.0 * (d - 1) * d_noise) if d > 1 else math.inf
    growth_term = (d - 1) / (sigma_star * sigma_star)
    sat_term = 2.0 * (d - 1) * d_noise * max(t_total - tau_r, 0.0) / (r_star * r_star)
    theta_sq = growth_term + sat_term
    return PersistencePrediction(
        sigma_star=sigma_star,
        tau_r=tau_r,
        t_rand=t_rand,
        theta_sq=theta_sq,
        expected_cosine=1.0 - theta_sq / 2.0,
        saturation_dominated=sat_term > 1.0,
    )


def measured_theta_sq(run):
    """Ensemble mean squared angle between initial and final directions."""
    keep = [i for i in range(run.final_state.shape[0]) if i not in run.zero_final_modes]
    cos = np.einsum("kd,kd->k", run.initial_directions[keep], run.final_directions[keep])
    ang = np.arccos(np.clip(cos, -1.0, 1.0))
    return float(np.mean(ang * ang))


def mean_abs_pair_overlap(directions):
    """Mean |d_j . d_k| over unordered mode pairs (self-orthogonalization probe)."""
    d = np.asarray(directions)
    g = np.abs(d @ d.T)
    k = g.shape[0]
    iu = np.triu_indices(k, 1)
    return float(g[iu].mean())
