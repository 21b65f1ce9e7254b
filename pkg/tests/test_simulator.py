import numpy as np
import pytest
from scipy import stats as sps

from stap.diagnostics import PosteriorDraws
from stap.errors import ConfigError, DataError
from stap.geometry import Path, path_to_metrics, wrap_angle
from stap.simulator import (SimConfig, WcCrwConfig, config_from_posterior,
                            hmm_preset, sample_wrapped_cauchy,
                            simulate_from_posterior, simulate_hmm,
                            simulate_wc_crw, subsample_path,
                            turning_angle_histogram, wc_preset)
from stap.stap_core import StapParams


def test_hmm_presets_match_published_parameters():
    cfg = hmm_preset("dataset1")
    assert cfg.T == 7000 and cfg.K_star == 3
    assert np.allclose(cfg.pi, np.full((3, 3), 0.1) + np.eye(3) * 0.7)
    assert np.allclose(cfg.params[0].mu, [-10, 0])
    assert np.allclose(cfg.params[1].mu, [10, 10])
    assert np.allclose(cfg.params[2].eta, [-2, 0])
    assert np.allclose(cfg.params[1].sigma, [[1.0, -0.25], [-0.25, 0.5]])
    assert [p.rho for p in cfg.params] == [0.0, 0.5, 1.0]
    assert cfg.params[0].tau == 0.5 and cfg.params[1].tau == 0.2
    cfg2 = hmm_preset("dataset2")
    assert [p.rho for p in cfg2.params] == [0.2, 0.5, 0.8]
    assert all(p.tau == 0.2 for p in cfg2.params)
    cfg3 = hmm_preset("dataset3")
    assert all(p.tau == 0.8 for p in cfg3.params)
    with pytest.raises(ConfigError):
        hmm_preset("dataset9")


def test_simulate_hmm_brw_ar1_moments():
    # oracle: a rho=0 behaviour is a 2-D AR(1); check the stationary lag-1
    # autocovariance (1 - tau) * var against the empirical one
    tau = 0.3
    sig = 0.4
    p = StapParams((1.0, -2.0), (0, 0), np.eye(2) * sig, tau, 0.0)
    cfg = SimConfig(params=(p,), pi=np.ones((1, 1)), T=20_000, seed=0)
    path, _ = simulate_hmm(cfg)
    x = path.points[2000:, 0] - 1.0
    var_expected = sig / (1 - (1 - tau) ** 2)
    cov1 = np.mean(x[:-1] * x[1:])
    assert np.var(x) == pytest.approx(var_expected, rel=0.05)
    assert cov1 == pytest.approx((1 - tau) * var_expected, rel=0.08)


def test_simulate_hmm_transition_frequencies():
    cfg = hmm_preset("dataset1", T=7000, seed=1)
    _, z = simulate_hmm(cfg)
    for j in range(3):
        sel = np.flatnonzero(z[:-1] == j)
        freq = np.bincount(z[sel + 1], minlength=3) / sel.size
        assert np.max(np.abs(freq - cfg.pi[j])) < 0.02


def test_simulate_hmm_deterministic():
    cfg = hmm_preset("dataset2", T=200, seed=9)
    a, za = simulate_hmm(cfg)
    b, zb = simulate_hmm(cfg)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(za, zb)


def test_simulate_hmm_attractor_collapse():
    p = StapParams((2.0, 3.0), (0, 0), np.eye(2) * 1e-12, 1 - 1e-9, 0.0)
    cfg = SimConfig(params=(p,), pi=np.ones((1, 1)), T=50, seed=2)
    path, _ = simulate_hmm(cfg)
    assert np.allclose(path.points[5:], [2.0, 3.0], atol=1e-4)


def make_single_draw(params, pi, K):
    D = 1
    L = K
    mu = np.stack([p.mu for p in params])[None]
    eta = np.stack([p.eta for p in params])[None]
    sigma = np.stack([p.sigma for p in params])[None]
    tau = np.array([[p.tau for p in params]])
    rho = np.array([[p.rho for p in params]])
    z = np.tile(np.arange(K, dtype=np.int16), 4)[None]
    return PosteriorDraws(
        mu=mu, eta=eta, sigma=sigma, tau=tau, rho=rho,
        pi=pi[None], beta=np.full((1, L), 1.0 / L),
        alpha=np.array([0.5]), kappa=np.array([1.0]), gamma=np.array([1.0]),
        z=z, s0=np.array([[-1.0, 0.0]]), imputed=np.empty((1, 0, 2)),
        missing_indices=np.array([], dtype=int), iterations=1, burnin=0,
        thin=1, seed=3, s1=np.zeros(2), domain=(-20, 20, -20, 20))


def test_config_from_posterior_single_draw():
    params = (StapParams((1, 1), (0.5, 0), np.eye(2) * 0.4, 0.3, 0.0),
              StapParams((-1, 2), (1.0, 0.2), np.eye(2) * 0.7, 0.6, 1.0))
    pi = np.array([[0.8, 0.2], [0.3, 0.7]])
    draws = make_single_draw(params, pi, 2)
    cfg = config_from_posterior(draws, T=100, seed=4)
    assert cfg.K_star == 2
    for built, orig in zip(cfg.params, params):
        assert np.allclose(built.mu, orig.mu)
        assert np.allclose(built.eta, orig.eta)
        assert np.allclose(built.sigma, orig.sigma)
        assert built.tau == pytest.approx(orig.tau)
        assert built.rho == orig.rho
    assert np.allclose(cfg.pi, pi)


def test_simulate_from_posterior_reproducible_and_bounded():
    params = (StapParams((0, 0), (0, 0), np.eye(2) * 0.2, 0.5, 0.0),)
    draws = make_single_draw(params, np.ones((1, 1)), 1)
    a = simulate_from_posterior(draws, T=500, seed=5)
    b = simulate_from_posterior(draws, T=500, seed=5)
    assert np.array_equal(a.points, b.points)
    # strong attraction keeps the path near the attractor
    assert np.max(np.abs(a.points)) < 10.0


def test_wrapped_cauchy_mean_resultant_length():
    rng = np.random.default_rng(6)
    for eps in (0.3, 0.7, 0.95):
        th = sample_wrapped_cauchy(rng, 1.0, eps, 200_000)
        R = np.abs(np.mean(np.exp(1j * th)))
        assert R == pytest.approx(eps, abs=0.01)


def test_wrapped_cauchy_density_match():
    # the sampler wraps a Cauchy; its histogram must match the analytic
    # wrapped-Cauchy density with mean resultant length eps
    rng = np.random.default_rng(7)
    lam, eps = -0.8, 0.6
    th = sample_wrapped_cauchy(rng, lam, eps, 400_000)
    hist, edges = np.histogram(th, bins=80, range=(-np.pi, np.pi), density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    dens = (1 - eps ** 2) / (2 * np.pi * (1 + eps ** 2
                                          - 2 * eps * np.cos(centers - lam)))
    assert np.max(np.abs(hist - dens)) < 0.02


def test_wc_crw_concentration_limit():
    cfg = WcCrwConfig(lambda_sim=0.7, eps_sim=0.9999, a_sim=2.0, b_sim=1.0,
                      T_star=20_000, seed=8)
    path = simulate_wc_crw(cfg)
    m = path_to_metrics(path)
    circ_var = 1 - np.abs(np.mean(np.exp(1j * (m.theta - 0.7))))
    assert circ_var < 1e-3


def test_wc_crw_circular_mean():
    cfg = wc_preset("set1", T_star=100_000, seed=9)
    path = simulate_wc_crw(cfg)
    m = path_to_metrics(path)
    mean_angle = np.angle(np.mean(np.exp(1j * m.theta)))
    target = wrap_angle(np.pi - 0.1)
    diff = wrap_angle(mean_angle - target)
    assert abs(diff) < 0.02


def test_wc_presets():
    s1 = wc_preset("set1")
    assert s1.lambda_sim == pytest.approx(np.pi - 0.1)
    assert s1.a_sim == 1.0 and s1.b_sim == 1.0 and s1.d == 2
    # published scale 0.1 translated to a mean resultant length
    assert s1.eps_sim == pytest.approx(np.exp(-0.1))
    s2 = wc_preset("set2")
    assert (s2.lambda_sim, s2.a_sim, s2.b_sim, s2.d) == \
        (pytest.approx(np.pi - 0.35), 1.7, 5.0, 3)
    s3 = wc_preset("set3")
    assert (s3.lambda_sim, s3.a_sim, s3.b_sim, s3.d) == \
        (pytest.approx(np.pi / 4 - 0.2), 15.0, 10.0, 9)


def test_weibull_mean_parameterisation():
    # shape a, scale b: mean b * Gamma(1 + 1/a); set1 (a=1, b=1) has mean 1
    cfg = wc_preset("set1", T_star=200_000, seed=10)
    path = simulate_wc_crw(cfg)
    m = path_to_metrics(path)
    assert m.r.mean() == pytest.approx(1.0, abs=0.01)


def test_subsample_identity_and_lengths():
    pts = np.arange(20, dtype=float).reshape(10, 2)
    path = Path(points=pts, s0=[-1.0, -1.0])
    assert np.array_equal(subsample_path(path, 1).points, pts)
    sub = subsample_path(path, 2)
    assert sub.points.shape[0] == 5
    assert np.array_equal(sub.points[0], pts[1])
    with pytest.raises(DataError):
        subsample_path(path, 0)


def test_subsample_composition():
    pts = np.arange(120, dtype=float).reshape(60, 2)
    path = Path(points=pts, s0=[-1.0, -1.0])
    a = subsample_path(subsample_path(path, 2), 3)
    b = subsample_path(path, 6)
    assert np.array_equal(a.points, b.points)


def test_simulators_bit_reproducible():
    cfg = wc_preset("set2", T_star=500, seed=11)
    assert np.array_equal(simulate_wc_crw(cfg).points,
                          simulate_wc_crw(cfg).points)


def test_turning_angle_histogram_normalised():
    cfg = wc_preset("set1", T_star=5000, seed=12)
    path = simulate_wc_crw(cfg)
    hist, edges = turning_angle_histogram(path, bins=36)
    width = edges[1] - edges[0]
    assert (hist * width).sum() == pytest.approx(1.0)
