import math

import numpy as np
import pytest

from bifurc.errors import DegenerateInputError, DimensionError
from bifurc.gmm_probe import (
    GmmProbeState,
    ProbeConfig,
    beta_c,
    exact_collapsed,
    grad_step,
    init_collapsed,
    nll,
    order_parameter,
    probe_step,
    responsibilities,
    split_direction,
)
from bifurc.mathcore import covariance


def bimodal(n=400, seed=0, c=2.0):
    rng = np.random.default_rng(seed)
    lab = rng.integers(0, 2, n)
    z = rng.standard_normal((n, 2))
    z[:, 0] += np.where(lab == 0, -c, c)
    return z


class TestBetaC:
    def test_identity(self):
        assert beta_c(np.eye(4)) == pytest.approx(1.0)

    def test_diagonal(self):
        assert beta_c(np.diag([4.0, 1.0])) == pytest.approx(0.25)

    def test_mixture_covariance(self):
        # closed form: I + 4 e1 e1^T has lambda_max = 5
        assert beta_c([[5.0, 0.0], [0.0, 1.0]]) == pytest.approx(0.2)

    def test_zero_covariance_rejected(self):
        with pytest.raises(DegenerateInputError):
            beta_c(np.zeros((3, 3)))


class TestNll:
    def test_single_component_at_mean(self):
        s = GmmProbeState(np.array([[1.5]]), 0.0, 1, 1)
        assert nll(s, np.array([[1.5]])) == pytest.approx(0.5 * math.log(2 * math.pi))

    def test_collapsed_two_components_match_single(self):
        z = bimodal(n=50, seed=1)
        s1 = GmmProbeState(np.array([[0.3, -0.2]]), -0.7, 1, 2)
        s2 = GmmProbeState(np.array([[0.3, -0.2], [0.3, -0.2]]), -0.7, 2, 2)
        assert nll(s2, z) == pytest.approx(nll(s1, z), abs=1e-12)

    def test_matches_direct_density_sum(self):
        # independent route: evaluate the mixture density term by term
        rng = np.random.default_rng(2)
        z = rng.standard_normal((9, 2))
        mu = rng.standard_normal((3, 2))
        lb = 0.4
        s = GmmProbeState(mu, lb, 3, 2)
        beta = math.exp(lb)
        dens = np.zeros(9)
        for k in range(3):
            q = ((z - mu[k]) ** 2).sum(axis=1)
            dens += (1.0 / 3.0) * (beta / (2 * math.pi)) * np.exp(-0.5 * beta * q)
        expected = -np.log(dens).mean()
        assert nll(s, z) == pytest.approx(expected, abs=1e-10)

    def test_empty_batch_rejected(self):
        s = GmmProbeState(np.zeros((2, 2)), 0.0, 2, 2)
        with pytest.raises(DimensionError):
            nll(s, np.zeros((0, 2)))


class TestResponsibilities:
    def test_equal_means_uniform(self):
        s = GmmProbeState(np.ones((4, 3)), 0.2, 4, 3)
        p = responsibilities(s, np.random.default_rng(0).standard_normal((6, 3)))
        assert np.allclose(p, 0.25)

    def test_high_precision_one_hot(self):
        s = GmmProbeState(np.array([[0.0], [5.0]]), math.log(200.0), 2, 1)
        p = responsibilities(s, np.array([[0.2]]))
        assert p[0, 0] > 1.0 - 1e-12

    def test_symmetric_point(self):
        s = GmmProbeState(np.array([[-1.0], [1.0]]), math.log(2.0), 2, 1)
        p = responsibilities(s, np.array([[0.0]]))
        assert np.allclose(p, 0.5)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            k = int(rng.integers(1, 7))
            d = int(rng.integers(1, 5))
            s = GmmProbeState(rng.standard_normal((k, d)), float(rng.normal()), k, d)
            p = responsibilities(s, rng.standard_normal((12, d)))
            assert np.all(p > 0)
            assert np.max(np.abs(p.sum(axis=1) - 1.0)) <= 1e-12


def numeric_grads(state, z, h=1e-5):
    """Central finite differences of nll over all probe parameters."""
    gm = np.zeros_like(state.means)
    for k in range(state.K):
        for a in range(state.d):
            up = state.means.copy()
            dn = state.means.copy()
            up[k, a] += h
            dn[k, a] -= h
            su = GmmProbeState(up, state.log_precision, state.K, state.d)
            sd = GmmProbeState(dn, state.log_precision, state.K, state.d)
            gm[k, a] = (nll(su, z) - nll(sd, z)) / (2 * h)
    su = GmmProbeState(state.means, state.log_precision + h, state.K, state.d)
    sd = GmmProbeState(state.means, state.log_precision - h, state.K, state.d)
    gb = (nll(su, z) - nll(sd, z)) / (2 * h)
    return gm, gb


class TestGradStep:
    def test_symmetric_state_means_fixed(self):
        z = bimodal(n=200, seed=5)
        s = exact_collapsed(z, 4, -1.0)
        cfg = ProbeConfig(K_probe=4)
        s2 = grad_step(s, z, cfg)
        assert np.max(np.abs(s2.means - s.means)) <= 1e-12

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        z = rng.standard_normal((30, 2))
        s = GmmProbeState(rng.standard_normal((3, 2)), 0.3, 3, 2)
        cfg = ProbeConfig(K_probe=3, lr_means=1.0, lr_logbeta=1.0)
        s2 = grad_step(s, z, cfg)
        analytic_gm = (s.means - s2.means) / cfg.lr_means
        analytic_gb = (s.log_precision - s2.log_precision) / cfg.lr_logbeta
        gm, gb = numeric_grads(s, z)
        ref = max(np.max(np.abs(gm)), abs(gb))
        assert np.max(np.abs(analytic_gm - gm)) <= 1e-5 * ref
        assert abs(analytic_gb - gb) <= 1e-5 * ref

    def test_low_beta_pushed_up(self):
        z = bimodal(n=100, seed=7)
        s = exact_collapsed(z, 3, -4.0)
        s2 = grad_step(s, z, ProbeConfig(K_probe=3))
        assert s2.log_precision > s.log_precision


class TestOrderParameter:
    def test_collapsed_is_zero(self):
        assert order_parameter(GmmProbeState(np.ones((3, 2)), 0.0, 3, 2)) == 0.0

    def test_symmetric_pair(self):
        s = GmmProbeState(np.array([[-1.0], [1.0]]), 0.0, 2, 1)
        assert order_parameter(s) == pytest.approx(1.0)

    def test_unit_square_corners(self):
        mu = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        s = GmmProbeState(mu, 0.0, 4, 2)
        assert order_parameter(s) == pytest.approx(math.sqrt(0.5))


class TestProbeStep:
    def test_identity_covariance_log_beta_c_zero(self):
        # four corner points have exactly unit covariance
        z = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
        s = exact_collapsed(z, 2, -1.0)
        cfg = ProbeConfig(K_probe=2)
        for step in range(3):
            s, r = probe_step(s, z, cfg, step=step)
            assert r.log_beta_c == 0.0
            assert r.log_ratio == r.log_beta

    def test_reading_ratio_identity(self):
        z = bimodal(n=120, seed=8)
        s = init_collapsed(z, ProbeConfig(K_probe=5), np.random.default_rng(0))
        s, r = probe_step(s, z, ProbeConfig(K_probe=5), step=0)
        assert abs(r.log_ratio - (r.log_beta - r.log_beta_c)) <= 1e-12

    def test_rescaling_shifts_log_beta_c(self):
        z = bimodal(n=150, seed=9)
        cfg = ProbeConfig(K_probe=3)
        rng = np.random.default_rng(1)
        s1 = init_collapsed(z, cfg, rng)
        _, r1 = probe_step(s1, z, cfg, step=0)
        s2 = init_collapsed(2.0 * z, cfg, rng)
        _, r2 = probe_step(s2, 2.0 * z, cfg, step=0)
        assert r2.log_beta_c == pytest.approx(r1.log_beta_c - 2.0 * math.log(2.0), abs=1e-12)

    def test_degenerate_latents_flagged(self):
        z = np.tile([1.0, 2.0], (10, 1))
        s = exact_collapsed(z, 2, -1.0)
        s, r = probe_step(s, z, ProbeConfig(K_probe=2), step=0)
        assert r.degenerate
        assert r.log_beta_c == math.inf
        assert r.log_ratio == -math.inf

    def test_static_latents_beta_rises_to_optimum(self):
        # at fixed collapsed means the full NLL has its beta optimum at
        # d / tr(Cov(z)); the learned channel must climb to it monotonically
        z = bimodal(n=300, seed=10)
        cfg = ProbeConfig(K_probe=4, init_spread=0.0)
        s = exact_collapsed(z, 4, cfg.log_beta_init)
        beta_opt = z.shape[1] / np.trace(covariance(z))
        lbs = []
        for step in range(2500):
            s, r = probe_step(s, z, cfg, step=step)
            lbs.append(r.log_beta)
        lbs = np.array(lbs)
        below = lbs < math.log(beta_opt) - 0.01
        assert np.all(np.diff(lbs)[below[:-1]] > 0)
        assert lbs[-1] == pytest.approx(math.log(beta_opt), abs=0.02)

    def test_detachment_never_mutates_latents(self):
        z = bimodal(n=80, seed=11)
        snapshot = z.copy()
        cfg = ProbeConfig(K_probe=3)
        s = init_collapsed(z, cfg, np.random.default_rng(2))
        for step in range(10):
            s, _ = probe_step(s, z, cfg, step=step)
        assert np.array_equal(z, snapshot)

    def test_log_beta_c_invariant_in_K_probe(self):
        z = bimodal(n=200, seed=12)
        traces = []
        for k in (2, 5, 10, 20, 50):
            cfg = ProbeConfig(K_probe=k)
            s = init_collapsed(z, cfg, np.random.default_rng(3))
            tr = []
            for step in range(20):
                s, r = probe_step(s, z, cfg, step=step)
                tr.append(r.log_beta_c)
            traces.append(tr)
        for tr in traces[1:]:
            assert tr == traces[0]  # bit-exact


def test_split_direction_unit_norm():
    s = GmmProbeState(np.array([[-1.0, 0.1], [1.0, -0.1]]), 0.0, 2, 2)
    v = split_direction(s)
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-10)
    assert abs(v[0]) > abs(v[1])
