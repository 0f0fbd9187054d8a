"""Passive K-prototype isotropic GMM probe with a shared learned precision.

The probe models latents z with K equal-weight isotropic Gaussian components
N(mu_k, I/beta) and is trained by plain gradient descent on the full
per-sample-mean negative log-likelihood

    nll = mean_z[ -LSE_k(-(beta/2)||z - mu_k||^2) ] + log K
          + (d/2) log(2 pi) - (d/2) log beta.

The beta-dependent normalization term is kept: without it the precision
channel has no optimum and beta diverges. Latents are treated as constants
throughout (the probe is "detached": nothing here ever writes to them).

The critical precision of a latent distribution is beta_c = 1/lambda_max(Cov(z)):
the collapsed state (all prototypes at the data mean) loses stability when
beta exceeds it.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DegenerateInputError, DimensionError, NumericalError
from .mathcore import check_symmetric, covariance, sym_eigen


@dataclass
class ProbeConfig:
    """Probe protocol constants.

    init_spread is the prototype jitter scale; None selects the default
    1e-3 * sqrt(lambda_max) of the data at initialization time.
    """

    K_probe: int = 10
    lr_means: float = 5e-3
    lr_logbeta: float = 1e-2
    log_beta_init: float = -2.5
    init_spread: Optional[float] = None

    def __post_init__(self):
        if self.lr_means <= 0 or self.lr_logbeta <= 0:
            raise DegenerateInputError("learning rates must be positive")
        if self.K_probe < 1:
            raise DegenerateInputError("K_probe must be >= 1")


@dataclass
class GmmProbeState:
    """Prototype means (K x d) and the shared log-precision."""

    means: np.ndarray
    log_precision: float
    K: int
    d: int

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        if self.means.shape != (self.K, self.d):
            raise DimensionError(
                f"means shape {self.means.shape} != (K, d) = ({self.K}, {self.d})"
            )
        if self.K < 1 or self.d < 1:
            raise DimensionError("K and d must be >= 1")
        if not math.isfinite(self.log_precision):
            raise DegenerateInputError("log_precision must be finite")

    @property
    def beta(self):
        return math.exp(self.log_precision)


@dataclass
class CriticalityReading:
    """One trajectory sample: the probe's phase coordinates at a step.

    log_ratio == log_beta - log_beta_c (within 1e-12). nc1 is present only
    when the caller supplies a labeled latent batch. degenerate marks a
    reading whose latent covariance had no positive top eigenvalue
    (log_beta_c is the +inf sentinel there).
    """

    step: int
    log_beta: float
    log_beta_c: float
    log_ratio: float
    nc1: Optional[float]
    order_parameter: float
    degenerate: bool = False


def beta_c(cov):
    """Critical precision 1/lambda_max(cov) of a covariance matrix."""
    c = check_symmetric(cov, "cov")
    lam = sym_eigen(c).eigenvalues[0]
    if lam <= 0.0:
        raise DegenerateInputError("degenerate covariance: lambda_max <= 0")
    return 1.0 / float(lam)


def init_collapsed(samples, config, rng):
    """Near-symmetric start: prototypes at the sample mean plus a small jitter.

    The jitter makes the symmetry breaking observable; its scale defaults to
    1e-3 * sqrt(lambda_max(Cov(samples))).
    """
    z = np.asarray(samples, dtype=float)
    lam = sym_eigen(covariance(z)).eigenvalues[0]
    spread = config.init_spread
    if spread is None:
        spread = 1e-3 * math.sqrt(max(lam, 0.0))
    mu = z.mean(axis=0) + spread * rng.standard_normal((config.K_probe, z.shape[1]))
    return GmmProbeState(mu, config.log_beta_init, config.K_probe, z.shape[1])


def exact_collapsed(samples, K, log_beta):
    """All prototypes exactly at the sample mean (the symmetric state S0)."""
    z = np.asarray(samples, dtype=float)
    mu = np.tile(z.mean(axis=0), (K, 1))
    return GmmProbeState(mu, log_beta, K, z.shape[1])


def _check_batch(state, samples):
    z = np.asarray(samples, dtype=float)
    if z.ndim != 2 or z.shape[0] < 1:
        raise DimensionError("samples must be a non-empty N x d array")
    if z.shape[1] != state.d:
        raise DimensionError(f"sample dim {z.shape[1]} != state d {state.d}")
    return z

def _log_weights(state, z):
    # a[n, k] = -(beta/2) ||z_n - mu_k||^2, via the Gram expansion
    mu = state.means
    beta = state.beta
    sq = (z * z).sum(axis=1)[:, None] + (mu * mu).sum(axis=1)[None, :] - 2.0 * (z @ mu.T)
    return -0.5 * beta * sq


def nll(state, samples):
    """Full per-sample-mean negative log-likelihood (see module docstring)."""
    z = _check_batch(state, samples)
    a = _log_weights(state, z)
    amax = a.max(axis=1, keepdims=True)
    lse = amax[:, 0] + np.log(np.exp(a - amax).sum(axis=1))
    return float(
        -lse.mean()
        + math.log(state.K)
        + 0.5 * state.d * math.log(2.0 * math.pi)
        - 0.5 * state.d * state.log_precision
    )


def responsibilities(state, samples):
    """Posterior component weights p(k|z): an N x K row-stochastic matrix."""
    z = _check_batch(state, samples)
    a = _log_weights(state, z)
    a -= a.max(axis=1, keepdims=True)
    p = np.exp(a)
    p /= p.sum(axis=1, keepdims=True)
    return p


def grad_step(state, batch, config):
    """One plain gradient-descent step on the full NLL (means and log beta).

    Mean channel: grad_{mu_k} nll = -mean_z[p_k beta (z - mu_k)], applied in
    the fused form mu += (lr beta / N)(p^T z - colsum(p) mu). Precision
    channel: d nll/d beta = mean_z[sum_k p_k ||z - mu_k||^2 / 2] - d/(2 beta),
    chained through beta for the log-beta parametrization.
    """
    z = _check_batch(state, batch)
    n = z.shape[0]
    beta = state.beta
    p = responsibilities(state, z)
    colsum = p.sum(axis=0)
    new_means = state.means + (config.lr_means * beta / n) * (
        p.T @ z - colsum[:, None] * state.means
    )
    sq = (z * z).sum(axis=1)[:, None] + (state.means * state.means).sum(axis=1)[None, :] \
        - 2.0 * (z @ state.means.T)
    dnll_dbeta = float((p * sq).sum() / (2.0 * n) - 0.5 * state.d / beta)
    new_log_beta = state.log_precision - config.lr_logbeta * beta * dnll_dbeta
    if not (np.all(np.isfinite(new_means)) and math.isfinite(new_log_beta)):
        raise NumericalError(f"non-finite probe gradient at beta = {beta}")
    return replace(state, means=new_means, log_precision=new_log_beta)


def order_parameter(state):
    """Prototype spread sqrt((1/K) sum_k ||mu_k - mu_bar||^2)."""
    c = state.means - state.means.mean(axis=0)
    return float(np.sqrt((c * c).sum(axis=1).mean()))


def split_direction(state):
    """Principal eigenvector of the prototype scatter (the broken-symmetry axis)."""
    c = state.means - state.means.mean(axis=0)
    scatter = (c.T @ c) / state.K
    return sym_eigen(scatter).eigenvectors[:, 0]


def probe_step(state, encoder_latents, config, step=0, nc1=None):
    """One joint-detached protocol step: grad_step, then a criticality reading.

    The latents are constants to the probe; beta_c is recomputed from their
    sample covariance each call, so the log_beta_c series depends on the
    latents alone (identical for any K_probe). A degenerate latent covariance
    yields the +inf sentinel and the degenerate flag instead of an error.
    """
    z = _check_batch(state, encoder_latents)
    new_state = grad_step(state, z, config)
    lam = sym_eigen(covariance(z)).eigenvalues[0]
    if lam <= 0.0:
        log_bc = math.inf
        degenerate = True
    else:
        log_bc = -math.log(lam)
        degenerate = False
    lb = new_state.log_precision
    reading = CriticalityReading(
        step=step,
        log_beta=lb,
        log_beta_c=log_bc,
        log_ratio=lb - log_bc,
        nc1=nc1,
        order_parameter=order_parameter(new_state),
        degenerate=degenerate,
    )
    return new_state, reading
