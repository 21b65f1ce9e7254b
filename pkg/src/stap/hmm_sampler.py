"""Blocked Gibbs sampler for the sticky-HDP hidden Markov model with STAP
emissions.

One sweep updates, in a fixed order: imputed locations, the latent state
sequence (jointly, by forward filtering and backward sampling over the L
truncated states), the per-behaviour emission parameters (conjugate normal /
truncated-normal / inverse-Wishart steps plus a Metropolis step for the
blending weight rho), the transition structure (tables, overrides, global
weights, rows), the concentration hyperparameters, and finally the initial
location parameter s0.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy.special import ndtr, ndtri

from ._kernels import backward_sample, forward_filter
from .diagnostics import PosteriorDraws
from .errors import ConfigError, NumericError
from .geometry import Path, atan_star, bearings, inv_2x2
from .priors import (PriorConfig, rho_prior_logpdf, sample_invwishart2,
                     sample_mvn2, sample_rho_prior, sample_stap_prior,
                     sample_hdp_hyper_prior)
from .stap_core import StapParams, moments_mv, stap_logdensity

# rho proposal mixture: direct atom jumps, a sliding uniform window, and an
# independence component drawn from the prior (which gives every reachable
# value a positive reverse density, so atom/interior mode flips are possible)
RHO_PROPOSAL_ATOM = 0.1
RHO_PROPOSAL_PRIOR = 0.2
RHO_PROPOSAL_WINDOW = 1.0 - 2.0 * RHO_PROPOSAL_ATOM - RHO_PROPOSAL_PRIOR


@dataclass
class McmcSchedule:
    iterations: int
    burnin: int
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.iterations <= self.burnin:
            raise ConfigError("iterations must exceed burnin")
        if self.thin < 1:
            raise ConfigError("thin must be at least 1")
        if self.burnin < 0:
            raise ConfigError("burnin must be nonnegative")

    @property
    def n_stored(self) -> int:
        return (self.iterations - self.burnin) // self.thin


@dataclass
class HmmState:
    """Current value of every unknown in the model.

    z[i] (0-based labels) drives the emission of step i; the chain is anchored
    at state 0 before the first step.  ``imputed`` maps a 0-based point index
    to its current value.
    """

    z: np.ndarray
    pi: np.ndarray
    beta: np.ndarray
    alpha: float
    kappa: float
    gamma: float
    params: List[StapParams]
    s0: np.ndarray
    imputed: Dict[int, np.ndarray] = field(default_factory=dict)

    def validate(self) -> None:
        L = self.pi.shape[0]
        if not np.allclose(self.pi.sum(axis=1), 1.0, atol=1e-10):
            raise NumericError("transition rows must sum to 1")
        if abs(self.beta.sum() - 1.0) > 1e-10:
            raise NumericError("beta must sum to 1")
        if self.z.min() < 0 or self.z.max() >= L:
            raise NumericError("state labels out of range")


@dataclass
class SufficientStats:
    """Per-sweep assignment and transition statistics plus the auxiliary
    table counts of the sticky-HDP construction."""

    idx: List[np.ndarray]
    n: np.ndarray
    trans: np.ndarray
    m: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None
    mbar: Optional[np.ndarray] = None


def completed_points(path: Path, state: HmmState) -> np.ndarray:
    pts = path.points.copy()
    for t, val in state.imputed.items():
        pts[t] = val
    return pts


def _phi_prev(points: np.ndarray, s0: np.ndarray) -> np.ndarray:
    """Bearing before each step: phi0 derived from s0, then the running
    bearings shifted by one."""
    phi0 = atan_star(points[0, 1] - s0[1], points[0, 0] - s0[0])
    phi = bearings(points, phi0)
    return np.concatenate([[phi0], phi[:-1]])


LOG_2PI = np.log(2.0 * np.pi)


def _emission_loglik(points: np.ndarray, phi_prev: np.ndarray,
                     params: List[StapParams]) -> np.ndarray:
    """Step-by-behaviour log-likelihood matrix, vectorised over time.

    The previous-bearing trig is shared across behaviours; each behaviour
    then needs one cos/sin pair for its rotated covariance frame.
    """
    n = phi_prev.shape[0]
    out = np.empty((n, len(params)))
    cp = np.cos(phi_prev)
    sp = np.sin(phi_prev)
    sx = points[:-1, 0]
    sy = points[:-1, 1]
    dx = points[1:, 0] - sx
    dy = points[1:, 1] - sy
    for j, p in enumerate(params):
        rho, tau = p.rho, p.tau
        w = (1.0 - rho) * tau
        ex, ey = p.eta[0], p.eta[1]
        rx = dx - (w * (p.mu[0] - sx) + rho * (cp * ex - sp * ey))
        ry = dy - (w * (p.mu[1] - sy) + rho * (sp * ex + cp * ey))
        if rho == 0.0:
            ca, sa = 1.0, 0.0
            ux, uy = rx, ry
        else:
            a = rho * phi_prev
            ca = np.cos(a)
            sa = np.sin(a)
            ux = ca * rx + sa * ry
            uy = ca * ry - sa * rx
        sig = p.sigma
        det = sig[0, 0] * sig[1, 1] - sig[0, 1] * sig[1, 0]
        q = (sig[1, 1] * ux * ux - 2.0 * sig[0, 1] * ux * uy
             + sig[0, 0] * uy * uy) / det
        out[:, j] = (-LOG_2PI - 0.5 * np.log(det)) - 0.5 * q
    return out


def ffbs_sample_z(rng: np.random.Generator, path: Path, state: HmmState) -> np.ndarray:
    """Joint draw of the latent state sequence from its full conditional."""
    points = completed_points(path, state)
    phi_prev = _phi_prev(points, state.s0)
    logE = _emission_loglik(points, phi_prev, state.params)
    # a nan anywhere poisons its row maximum, so one row scan catches both
    # non-finite densities and rows where every behaviour has vanished
    rowmax = logE.max(axis=1)
    if not np.all(np.isfinite(rowmax)):
        i = int(np.where(~np.isfinite(rowmax))[0][0])
        raise NumericError(f"non-finite emission log-density at time-point {i + 1}")
    lik = np.exp(logE - rowmax[:, None])
    with np.errstate(divide="ignore"):
        log_pi = np.log(state.pi)
    alpha, status = forward_filter(state.pi, log_pi, lik, logE)
    if status >= 0:
        raise NumericError(f"forward message vanished at time-point {status + 1}")
    u = rng.random(logE.shape[0])
    z, status = backward_sample(state.pi, log_pi, alpha, u)
    if status >= 0:
        raise NumericError(f"backward message vanished at time-point {status + 1}")
    return z


def sufficient_stats(z: np.ndarray, L: int) -> SufficientStats:
    n = np.bincount(z, minlength=L).astype(np.int64)
    trans = np.zeros((L, L), dtype=np.int64)
    src = np.concatenate([[0], z[:-1]])
    np.add.at(trans, (src, z), 1)
    idx = [np.flatnonzero(z == j) for j in range(L)]
    return SufficientStats(idx=idx, n=n, trans=trans)


def _dirichlet(rng: np.random.Generator, alphas: np.ndarray) -> np.ndarray:
    """Dirichlet draw that survives very small concentrations.

    Uses the shape-boost identity Gamma(a) = Gamma(a+1) * U^(1/a) and
    normalises in log space, so tiny weights underflow to exact zeros instead
    of poisoning the simplex.
    """
    alphas = np.asarray(alphas, dtype=float)
    pos = alphas > 0.0
    logx = np.full(alphas.shape, -np.inf)
    if pos.any():
        a = alphas[pos]
        g = rng.standard_gamma(a + 1.0)
        u = rng.random(a.shape[0])
        with np.errstate(divide="ignore", over="ignore"):
            logx[pos] = np.log(g) + np.log(u) / a
    top = logx.max()
    if not np.isfinite(top):
        raise NumericError("all Dirichlet components vanished")
    p = np.exp(logx - top)
    return p / p.sum()


def _sample_tables(rng: np.random.Generator, stats: SufficientStats,
                   state: HmmState) -> None:
    """Auxiliary table counts m, overrides w and adjusted counts mbar."""
    L = state.pi.shape[0]
    m = np.zeros((L, L), dtype=np.int64)
    concentration = state.alpha + state.kappa
    for j, k in zip(*np.nonzero(stats.trans)):
        x = state.alpha * state.beta[k] + (state.kappa if j == k else 0.0)
        x = max(x, 1e-300)
        njk = stats.trans[j, k]
        p_new = x / (np.arange(njk) + x)
        m[j, k] = int(np.count_nonzero(rng.random(njk) < p_new))
    w = np.zeros(L, dtype=np.int64)
    if concentration > 0 and state.kappa > 0:
        rho_bar = state.kappa / concentration
        for j in range(L):
            if m[j, j] > 0:
                p = rho_bar / (rho_bar + state.beta[j] * (1.0 - rho_bar))
                w[j] = rng.binomial(m[j, j], p)
    mbar = m.copy()
    np.fill_diagonal(mbar, np.diag(m) - w)
    stats.m, stats.w, stats.mbar = m, w, mbar


def update_pi_beta(rng: np.random.Generator, stats: SufficientStats,
                   state: HmmState):
    """Resample the auxiliary counts, then the global weights and every
    transition row from their conditionals."""
    L = state.pi.shape[0]
    _sample_tables(rng, stats, state)
    beta = _dirichlet(rng, state.gamma / L + stats.mbar.sum(axis=0))
    pi = np.empty((L, L))
    for j in range(L):
        alphas = state.alpha * beta + stats.trans[j]
        alphas[j] += state.kappa
        pi[j] = _dirichlet(rng, alphas)
    state.beta = beta
    state.pi = pi
    return pi, beta


def _assigned_steps(points: np.ndarray, phi_prev: np.ndarray, idx: np.ndarray):
    s_i = points[idx]
    s_next = points[idx + 1]
    return s_i, s_next, s_next - s_i, phi_prev[idx]


def _rot_sandwich_sum(cos_a: np.ndarray, sin_a: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Sum of R(a_i) S R(a_i)' over precomputed cos/sin arrays, via the
    closed-form trig moments (avoids materialising n rotation matrices)."""
    A = float(cos_a @ cos_a)
    C = float(cos_a @ sin_a)
    B = cos_a.shape[0] - A
    s00, s01, s11 = S[0, 0], S[0, 1], S[1, 1]
    v00 = A * s00 - 2.0 * C * s01 + B * s11
    v01 = C * (s00 - s11) + (A - B) * s01
    v11 = B * s00 + 2.0 * C * s01 + A * s11
    return np.array([[v00, v01], [v01, v11]])


def _rotate_xy(c, s, x, y):
    return c * x - s * y, s * x + c * y


def update_mu(rng: np.random.Generator, j: int, stats: SufficientStats,
              state: HmmState, points: np.ndarray, phi_prev: np.ndarray,
              prior: PriorConfig) -> np.ndarray:
    p = state.params[j]
    if stats.n[j] == 0:
        new = sample_mvn2(rng, prior.B_mu, prior.W_mu)
    else:
        rho, tau = p.rho, p.tau
        s_i, s_next, dx, phis = _assigned_steps(points, phi_prev, stats.idx[j])
        sig_inv = inv_2x2(p.sigma)
        ca, sa = np.cos(rho * phis), np.sin(rho * phis)
        vinv_sum = _rot_sandwich_sum(ca, sa, sig_inv)
        cp, sp = np.cos(phis), np.sin(phis)
        w = (1.0 - rho) * tau
        gx = dx[:, 0] + w * s_i[:, 0] - rho * (cp * p.eta[0] - sp * p.eta[1])
        gy = dx[:, 1] + w * s_i[:, 1] - rho * (sp * p.eta[0] + cp * p.eta[1])
        # V^{-1} g = R(a) Sigma^{-1} R(-a) g
        tx, ty = _rotate_xy(ca, -sa, gx, gy)
        ux = sig_inv[0, 0] * tx + sig_inv[0, 1] * ty
        uy = sig_inv[0, 1] * tx + sig_inv[1, 1] * ty
        vx, vy = _rotate_xy(ca, sa, ux, uy)
        w_inv = inv_2x2(prior.W_mu)
        prec = w * w * vinv_sum + w_inv
        cov = inv_2x2(prec)
        cov = 0.5 * (cov + cov.T)
        mean = cov @ (w * np.array([vx.sum(), vy.sum()]) + w_inv @ prior.B_mu)
        new = sample_mvn2(rng, mean, cov)
    state.params[j] = StapParams(new, p.eta, p.sigma, p.tau, p.rho)
    return new


def _eta_suffstats(rho: float, p: StapParams, prior: PriorConfig,
                   s_i, dx, phis):
    """Precision term and data vector of the eta conditional at a given rho."""
    sig_inv = inv_2x2(p.sigma)
    cb, sb = np.cos((rho - 1.0) * phis), np.sin((rho - 1.0) * phis)
    term = _rot_sandwich_sum(cb, sb, sig_inv)
    w = (1.0 - rho) * p.tau
    gx = dx[:, 0] - w * (p.mu[0] - s_i[:, 0])
    gy = dx[:, 1] - w * (p.mu[1] - s_i[:, 1])
    ca, sa = np.cos(rho * phis), np.sin(rho * phis)
    tx, ty = _rotate_xy(ca, -sa, gx, gy)
    ux = sig_inv[0, 0] * tx + sig_inv[0, 1] * ty
    uy = sig_inv[0, 1] * tx + sig_inv[1, 1] * ty
    vx, vy = _rotate_xy(cb, sb, ux, uy)
    return term, np.array([vx.sum(), vy.sum()])


def update_eta(rng: np.random.Generator, j: int, stats: SufficientStats,
               state: HmmState, points: np.ndarray, phi_prev: np.ndarray,
               prior: PriorConfig) -> np.ndarray:
    p = state.params[j]
    if stats.n[j] == 0 or p.rho == 0.0:
        new = sample_mvn2(rng, prior.B_eta, prior.W_eta)
    else:
        rho = p.rho
        s_i, s_next, dx, phis = _assigned_steps(points, phi_prev, stats.idx[j])
        term, data_vec = _eta_suffstats(rho, p, prior, s_i, dx, phis)
        w_inv = inv_2x2(prior.W_eta)
        prec = rho ** 2 * term + w_inv
        cov = inv_2x2(prec)
        cov = 0.5 * (cov + cov.T)
        mean = cov @ (rho * data_vec + w_inv @ prior.B_eta)
        new = sample_mvn2(rng, mean, cov)
    state.params[j] = StapParams(p.mu, new, p.sigma, p.tau, p.rho)
    return new


def _truncnorm01(rng: np.random.Generator, mean: float, sd: float) -> float:
    lo = ndtr((0.0 - mean) / sd)
    hi = ndtr((1.0 - mean) / sd)
    if hi - lo < 1e-300:
        # numerically degenerate window; the mass sits at the nearer boundary
        return 1.0 - 1e-9 if mean >= 1.0 else 1e-9
    x = mean + sd * ndtri(lo + rng.random() * (hi - lo))
    return float(min(max(x, 1e-12), 1.0 - 1e-12))


def update_tau(rng: np.random.Generator, j: int, stats: SufficientStats,
               state: HmmState, points: np.ndarray, phi_prev: np.ndarray,
               prior: PriorConfig) -> float:
    p = state.params[j]
    if stats.n[j] == 0 or p.rho == 1.0:
        new = float(rng.uniform(0.0, 1.0))
    else:
        rho = p.rho
        s_i, s_next, dx, phis = _assigned_steps(points, phi_prev, stats.idx[j])
        sig_inv = inv_2x2(p.sigma)
        ca, sa = np.cos(rho * phis), np.sin(rho * phis)
        ax, ay = _rotate_xy(ca, -sa, p.mu[0] - s_i[:, 0], p.mu[1] - s_i[:, 1])
        qx = sig_inv[0, 0] * ax + sig_inv[0, 1] * ay
        qy = sig_inv[0, 1] * ax + sig_inv[1, 1] * ay
        prec = (1.0 - rho) ** 2 * float(ax @ qx + ay @ qy)
        if prec < 1e-300:
            new = float(rng.uniform(0.0, 1.0))
        else:
            cp, sp = np.cos(phis), np.sin(phis)
            gx = dx[:, 0] - rho * (cp * p.eta[0] - sp * p.eta[1])
            gy = dx[:, 1] - rho * (sp * p.eta[0] + cp * p.eta[1])
            tx, ty = _rotate_xy(ca, -sa, gx, gy)
            lin = (1.0 - rho) * float(qx @ tx + qy @ ty)
            var = 1.0 / prec
            new = _truncnorm01(rng, var * lin, np.sqrt(var))
    state.params[j] = StapParams(p.mu, p.eta, p.sigma, new, p.rho)
    return new


def update_sigma(rng: np.random.Generator, j: int, stats: SufficientStats,
                 state: HmmState, points: np.ndarray, phi_prev: np.ndarray,
                 prior: PriorConfig) -> np.ndarray:
    p = state.params[j]
    if stats.n[j] == 0:
        df, scale = prior.a_sigma, prior.C_sigma
    else:
        rho, tau = p.rho, p.tau
        s_i, s_next, dx, phis = _assigned_steps(points, phi_prev, stats.idx[j])
        cp, sp = np.cos(phis), np.sin(phis)
        w = (1.0 - rho) * tau
        rx = dx[:, 0] - (w * (p.mu[0] - s_i[:, 0]) + rho * (cp * p.eta[0] - sp * p.eta[1]))
        ry = dx[:, 1] - (w * (p.mu[1] - s_i[:, 1]) + rho * (sp * p.eta[0] + cp * p.eta[1]))
        ca, sa = np.cos(rho * phis), np.sin(rho * phis)
        ux, uy = _rotate_xy(ca, -sa, rx, ry)
        scatter = np.array([[float(ux @ ux), float(ux @ uy)],
                            [float(ux @ uy), float(uy @ uy)]])
        df = prior.a_sigma + stats.n[j]
        scale = prior.C_sigma + scatter
    new = sample_invwishart2(rng, df, scale)
    if not _spd_ok(new):
        new = sample_invwishart2(rng, df, scale)
        if not _spd_ok(new):
            raise NumericError(f"inverse-Wishart draw for state {j + 1} is not SPD")
    state.params[j] = StapParams(p.mu, p.eta, new, p.tau, p.rho)
    return new


def _spd_ok(m: np.ndarray) -> bool:
    return (np.all(np.isfinite(m)) and m[0, 0] > 0.0
            and m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0] > 0.0)


def _rho_loglik(rho: float, p: StapParams, s_i, dx, phis, eta=None) -> float:
    if eta is None:
        eta = p.eta
    cp, sp = np.cos(phis), np.sin(phis)
    w = (1.0 - rho) * p.tau
    rx = dx[:, 0] - (w * (p.mu[0] - s_i[:, 0]) + rho * (cp * eta[0] - sp * eta[1]))
    ry = dx[:, 1] - (w * (p.mu[1] - s_i[:, 1]) + rho * (sp * eta[0] + cp * eta[1]))
    ca, sa = np.cos(rho * phis), np.sin(rho * phis)
    ex, ey = _rotate_xy(ca, -sa, rx, ry)
    sig = p.sigma
    det = sig[0, 0] * sig[1, 1] - sig[0, 1] * sig[1, 0]
    q = (sig[1, 1] * float(ex @ ex) - 2.0 * sig[0, 1] * float(ex @ ey)
         + sig[0, 0] * float(ey @ ey)) / det
    return -0.5 * q


def _rho_propose(rng: np.random.Generator, current: float, c: float,
                 weights) -> float:
    u = rng.random()
    if u < RHO_PROPOSAL_ATOM:
        return 0.0
    if u < 2.0 * RHO_PROPOSAL_ATOM:
        return 1.0
    if u < 2.0 * RHO_PROPOSAL_ATOM + RHO_PROPOSAL_PRIOR:
        return sample_rho_prior(rng, weights)
    lo, hi = max(0.0, current - c), min(1.0, current + c)
    return float(rng.uniform(lo, hi))


def _rho_proposal_logpdf(new: float, current: float, c: float, weights) -> float:
    """Proposal density against the atoms+Lebesgue reference measure."""
    w0, w1, w01 = weights
    if new == 0.0:
        return np.log(RHO_PROPOSAL_ATOM + RHO_PROPOSAL_PRIOR * w0)
    if new == 1.0:
        return np.log(RHO_PROPOSAL_ATOM + RHO_PROPOSAL_PRIOR * w1)
    lo, hi = max(0.0, current - c), min(1.0, current + c)
    dens = RHO_PROPOSAL_PRIOR * w01
    if lo < new < hi:
        dens += RHO_PROPOSAL_WINDOW / (hi - lo)
    return np.log(dens) if dens > 0 else -np.inf


def _eta_conditional(rho: float, p: StapParams, prior: PriorConfig,
                     s_i, dx, phis):
    """Posterior mean and covariance of eta given everything else at a fixed
    rho, plus the collapsed log-marginal of the data with eta integrated out
    (up to terms constant in rho)."""
    if rho == 0.0:
        marg = _rho_loglik(0.0, p, s_i, dx, phis)
        return prior.B_eta, prior.W_eta, marg
    w_inv = inv_2x2(prior.W_eta)
    term, data_vec = _eta_suffstats(rho, p, prior, s_i, dx, phis)
    prec = rho ** 2 * term + w_inv
    cov = inv_2x2(prec)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (rho * data_vec + w_inv @ prior.B_eta)
    d = mean - prior.B_eta
    log_prior_eta = (-np.log(2.0 * np.pi)
                     - 0.5 * np.log(np.linalg.det(prior.W_eta))
                     - 0.5 * d @ w_inv @ d)
    marg = (_rho_loglik(rho, p, s_i, dx, phis, eta=mean)
            + log_prior_eta + np.log(2.0 * np.pi)
            + 0.5 * np.log(np.linalg.det(cov)))
    return mean, cov, marg


def update_rho_mh(rng: np.random.Generator, j: int, stats: SufficientStats,
                  state: HmmState, points: np.ndarray, phi_prev: np.ndarray,
                  prior: PriorConfig):
    """Metropolis step on rho with the drift vector eta integrated out.

    rho and eta are nearly unidentified along the ridge rho * eta = const, so
    a single-site move can never cross between the interior and the atoms.
    The move therefore targets the rho-marginal (eta collapsed analytically,
    exact for the linear-Gaussian structure) and redraws eta from its
    conditional afterwards; the proposal mixes atom jumps, a sliding window
    and prior draws, and the ratio uses densities against the atoms+Lebesgue
    reference measure including the boundary-clipped window.
    """
    p = state.params[j]
    if stats.n[j] == 0:
        new = sample_rho_prior(rng, prior.rho_weights)
        state.params[j] = StapParams(p.mu, p.eta, p.sigma, p.tau, new)
        return new, True
    s_i, s_next, dx, phis = _assigned_steps(points, phi_prev, stats.idx[j])
    current = p.rho
    proposal = _rho_propose(rng, current, prior.mh_c, prior.rho_weights)
    _, _, marg_cur = _eta_conditional(current, p, prior, s_i, dx, phis)
    _, _, marg_new = _eta_conditional(proposal, p, prior, s_i, dx, phis)
    log_ratio = (rho_prior_logpdf(proposal, prior.rho_weights) + marg_new
                 + _rho_proposal_logpdf(current, proposal, prior.mh_c,
                                        prior.rho_weights)
                 - rho_prior_logpdf(current, prior.rho_weights) - marg_cur
                 - _rho_proposal_logpdf(proposal, current, prior.mh_c,
                                        prior.rho_weights))
    accept = np.log(rng.random()) < log_ratio
    if accept:
        state.params[j] = StapParams(p.mu, p.eta, p.sigma, p.tau, proposal)
        return proposal, True
    return current, False


def _local_phi(points: np.ndarray, s0: np.ndarray, k: int) -> float:
    """Bearing before step k, walking back over zero-length displacements."""
    i = k - 1
    while i >= 0:
        d = points[i + 1] - points[i]
        if d[0] != 0.0 or d[1] != 0.0:
            return atan_star(d[1], d[0])
        i -= 1
    return atan_star(points[0, 1] - s0[1], points[0, 0] - s0[0])


def _step_loglik_at(points: np.ndarray, s0: np.ndarray, k: int,
                    params: List[StapParams], z: np.ndarray) -> float:
    phi = _local_phi(points, s0, k)
    return stap_logdensity(points[k + 1], points[k], phi, params[z[k]])


def update_missing(rng: np.random.Generator, t: int, state: HmmState,
                   path: Path, points: np.ndarray, prior: PriorConfig):
    """Metropolis update of the missing location at point index t (0-based).

    The proposal is the step-(t-1) conditional, which cancels from the ratio;
    only the downstream terms whose source location or bearing involve the
    point remain, and proposals outside the domain are rejected.
    """
    n_steps = points.shape[0] - 1
    k = t - 1  # step that lands on the missing point
    phi = _local_phi(points, state.s0, k)
    m, v = moments_mv(state.params[state.z[k]], points[k], phi)
    proposal = points[k] + m + _chol_mul(v, rng.standard_normal(2))
    if not prior.in_domain(proposal):
        return points[t].copy(), False
    old = points[t].copy()
    log_ratio = 0.0
    for step in (t, t + 1):
        if step <= n_steps - 1:
            log_ratio -= _step_loglik_at(points, state.s0, step, state.params, state.z)
    points[t] = proposal
    for step in (t, t + 1):
        if step <= n_steps - 1:
            log_ratio += _step_loglik_at(points, state.s0, step, state.params, state.z)
    if np.log(rng.random()) < log_ratio:
        state.imputed[t] = proposal.copy()
        return proposal, True
    points[t] = old
    return old, False


def _chol_mul(cov: np.ndarray, z: np.ndarray) -> np.ndarray:
    l11 = np.sqrt(cov[0, 0])
    l21 = cov[1, 0] / l11
    l22 = np.sqrt(max(cov[1, 1] - l21 * l21, 0.0))
    return np.array([l11 * z[0], l21 * z[0] + l22 * z[1]])


def update_s0(rng: np.random.Generator, state: HmmState, path: Path,
              points: np.ndarray, prior: PriorConfig):
    """Random-walk Metropolis step on s0; only the first step's likelihood
    depends on it (through the initial bearing)."""
    proposal = state.s0 + prior.mh_s0_sd * rng.standard_normal(2)
    if not prior.in_domain(proposal):
        return state.s0.copy(), False
    if np.array_equal(proposal, points[0]):
        return state.s0.copy(), False
    phi_old = atan_star(points[0, 1] - state.s0[1], points[0, 0] - state.s0[0])
    phi_new = atan_star(points[0, 1] - proposal[1], points[0, 0] - proposal[0])
    p = state.params[state.z[0]]
    log_ratio = (stap_logdensity(points[1], points[0], phi_new, p)
                 - stap_logdensity(points[1], points[0], phi_old, p))
    if np.log(rng.random()) < log_ratio:
        state.s0 = proposal
        return proposal, True
    return state.s0.copy(), False


def update_hyperparams(rng: np.random.Generator, stats: SufficientStats,
                       state: HmmState, prior: PriorConfig):
    """Auxiliary-variable conjugate updates for (alpha, kappa, gamma)."""
    if stats.m is None:
        raise NumericError("table counts must be sampled before the hyper update")
    n_out = stats.trans.sum(axis=1)
    active = np.flatnonzero(n_out > 0)
    m_total = int(stats.m.sum())
    concentration = state.alpha + state.kappa

    shape = prior.a1 + m_total
    rate = prior.b1
    for j in active:
        r_j = rng.beta(concentration + 1.0, n_out[j])
        s_j = rng.random() < n_out[j] / (n_out[j] + concentration)
        shape -= float(s_j)
        rate -= np.log(max(r_j, 1e-300))
    new_total = rng.gamma(max(shape, 1e-12), 1.0 / rate)

    w_total = int(stats.w.sum())
    rho_bar = rng.beta(prior.a2 + w_total, prior.b2 + m_total - w_total)
    alpha = new_total * (1.0 - rho_bar)
    kappa = new_total * rho_bar

    mbar_total = int(stats.mbar.sum())
    if mbar_total == 0:
        gamma = rng.gamma(prior.a3, 1.0 / prior.b3)
    else:
        k_bar = int(np.count_nonzero(stats.mbar.sum(axis=0) > 0))
        eta_aux = rng.beta(state.gamma + 1.0, mbar_total)
        rate_g = prior.b3 - np.log(max(eta_aux, 1e-300))
        odds = (prior.a3 + k_bar - 1.0) / (mbar_total * rate_g)
        if rng.random() < odds / (1.0 + odds):
            gamma = rng.gamma(prior.a3 + k_bar, 1.0 / rate_g)
        else:
            gamma = rng.gamma(prior.a3 + k_bar - 1.0, 1.0 / rate_g)

    state.alpha, state.kappa, state.gamma = float(alpha), float(kappa), float(gamma)
    return state.alpha, state.kappa, state.gamma


def init_state(rng: np.random.Generator, path: Path, prior: PriorConfig,
               force_single_state: bool = False) -> HmmState:
    """Starting point of the chain: every step in state 1, prior-drawn
    emission parameters, linear interpolation for the missing locations."""
    L = 1 if force_single_state else prior.L
    n = path.n_steps
    # neutral O(1) starting values: the prior mass of the concentrations sits
    # near zero, where off-diagonal transition mass underflows and the chain
    # can never leave its initial state; the hyper updates adjust from here
    alpha, kappa, gamma = 1.0, 1.0, 1.0
    beta = np.full(L, 1.0 / L)
    pi = np.empty((L, L))
    for j in range(L):
        alphas = alpha * beta
        alphas[j] += kappa
        pi[j] = _dirichlet(rng, alphas) if L > 1 else np.ones(1)
    params = [sample_stap_prior(rng, prior) for _ in range(L)]
    s0 = np.clip(path.s0, (prior.domain[0], prior.domain[2]),
                 (prior.domain[1], prior.domain[3]))
    if np.array_equal(s0, path.points[0]):
        s0 = s0 - np.array([1e-3, 0.0])
    imputed: Dict[int, np.ndarray] = {}
    missing = np.flatnonzero(path.missing_mask)
    if missing.size:
        obs = np.flatnonzero(~path.missing_mask)
        for ax in range(2):
            vals = np.interp(missing, obs, path.points[obs, ax])
            for t, v in zip(missing, vals):
                imputed.setdefault(int(t), np.zeros(2))[ax] = v
        lo = np.array([prior.domain[0], prior.domain[2]])
        hi = np.array([prior.domain[1], prior.domain[3]])
        for t in imputed:
            imputed[t] = np.clip(imputed[t], lo, hi)
    return HmmState(z=np.zeros(n, dtype=np.int64), pi=pi, beta=beta,
                    alpha=alpha, kappa=kappa, gamma=gamma, params=params,
                    s0=np.asarray(s0, dtype=float), imputed=imputed)


def run_mcmc(path: Path, prior: PriorConfig, schedule: McmcSchedule,
             rng: Optional[np.random.Generator] = None,
             force_single_state: bool = False,
             log_stream=None, progress_every: Optional[int] = None) -> PosteriorDraws:
    """Run the blocked Gibbs sampler and collect thinned post-burnin draws.

    The chain is fully determined by (schedule.seed, prior, path); two runs
    with the same inputs produce identical draws.
    """
    if len(path) < 3:
        raise ConfigError("fitting needs a path of at least 3 points")
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(schedule.seed))
    if log_stream is None:
        log_stream = sys.stderr
    if progress_every is None:
        progress_every = max(1, schedule.iterations // 20)

    state = init_state(rng, path, prior, force_single_state=force_single_state)
    L = state.pi.shape[0]
    n = path.n_steps
    missing = sorted(state.imputed.keys())
    n_store = schedule.n_stored

    store = {
        "mu": np.empty((n_store, L, 2)),
        "eta": np.empty((n_store, L, 2)),
        "sigma": np.empty((n_store, L, 2, 2)),
        "tau": np.empty((n_store, L)),
        "rho": np.empty((n_store, L)),
        "pi": np.empty((n_store, L, L)),
        "beta": np.empty((n_store, L)),
        "hyper": np.empty((n_store, 3)),
        "z": np.empty((n_store, n), dtype=np.int16),
        "s0": np.empty((n_store, 2)),
        "imputed": np.empty((n_store, len(missing), 2)),
    }
    acc = {"rho": [0, 0], "missing": [0, 0], "s0": [0, 0]}
    kept = 0

    for sweep in range(1, schedule.iterations + 1):
        points = completed_points(path, state)
        for t in missing:
            _, ok = update_missing(rng, t, state, path, points, prior)
            acc["missing"][0] += ok
            acc["missing"][1] += 1

        if force_single_state:
            state.z = np.zeros(n, dtype=np.int64)
        else:
            state.z = ffbs_sample_z(rng, path, state)
        stats = sufficient_stats(state.z, L)

        phi_prev = _phi_prev(points, state.s0)
        for j in range(L):
            # eta is drawn after the collapsed rho move so the pair stays a
            # valid blocked update of (rho, eta)
            update_mu(rng, j, stats, state, points, phi_prev, prior)
            update_tau(rng, j, stats, state, points, phi_prev, prior)
            update_sigma(rng, j, stats, state, points, phi_prev, prior)
            _, ok = update_rho_mh(rng, j, stats, state, points, phi_prev, prior)
            update_eta(rng, j, stats, state, points, phi_prev, prior)
            acc["rho"][0] += ok
            acc["rho"][1] += 1

        if force_single_state:
            _sample_tables(rng, stats, state)
        else:
            update_pi_beta(rng, stats, state)
        update_hyperparams(rng, stats, state, prior)

        _, ok = update_s0(rng, state, path, points, prior)
        acc["s0"][0] += ok
        acc["s0"][1] += 1

        if sweep > schedule.burnin and (sweep - schedule.burnin) % schedule.thin == 0:
            store["mu"][kept] = np.stack([p.mu for p in state.params])
            store["eta"][kept] = np.stack([p.eta for p in state.params])
            store["sigma"][kept] = np.stack([p.sigma for p in state.params])
            store["tau"][kept] = [p.tau for p in state.params]
            store["rho"][kept] = [p.rho for p in state.params]
            store["pi"][kept] = state.pi
            store["beta"][kept] = state.beta
            store["hyper"][kept] = (state.alpha, state.kappa, state.gamma)
            store["z"][kept] = state.z
            store["s0"][kept] = state.s0
            for a, t in enumerate(missing):
                store["imputed"][kept, a] = state.imputed[t]
            kept += 1

        if sweep % progress_every == 0 or sweep == schedule.iterations:
            pts_now = completed_points(path, state)
            loglik = float(_emission_loglik(pts_now, _phi_prev(pts_now, state.s0),
                                            state.params)[np.arange(n), state.z].sum())
            k_now = int(np.count_nonzero(np.bincount(state.z, minlength=L)))
            rates = {k: (v[0] / v[1] if v[1] else float("nan")) for k, v in acc.items()}
            print(f"sweep {sweep}/{schedule.iterations} loglik {loglik:.2f} K {k_now} "
                  f"acc(rho {rates['rho']:.2f} miss {rates['missing']:.2f} "
                  f"s0 {rates['s0']:.2f})", file=log_stream)

    return PosteriorDraws(
        mu=store["mu"], eta=store["eta"], sigma=store["sigma"], tau=store["tau"],
        rho=store["rho"], pi=store["pi"], beta=store["beta"],
        alpha=store["hyper"][:, 0], kappa=store["hyper"][:, 1],
        gamma=store["hyper"][:, 2], z=store["z"], s0=store["s0"],
        imputed=store["imputed"], missing_indices=np.array(missing, dtype=int),
        iterations=schedule.iterations, burnin=schedule.burnin,
        thin=schedule.thin, seed=schedule.seed,
        s1=path.points[0].copy(), domain=prior.domain,
    )
