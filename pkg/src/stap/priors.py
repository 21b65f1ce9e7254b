"""Hyperprior configuration and prior samplers.

Defaults mirror the weakly informative choices used throughout the analyses:
N(0, 1000 I) on the attractor and drift, IW(3, I) on the covariance, U(0,1)
on the attraction strength, the three-part mixed distribution on rho with
equal weights, and G(0.1,1) / B(10,1) / G(0.1,1) on the transition
hyperparameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np

from .errors import ConfigError
from .geometry import check_spd, chol_2x2
from .stap_core import StapParams


@dataclass(frozen=True)
class PriorConfig:
    """All hyperprior constants plus the sampler's structural settings.

    ``rho_weights`` carries (w0, w1, w01): the atom masses at 0 and 1 and the
    weight of the uniform part.  Degenerate variants (w1=1 for CRW-only,
    w0=1 for BRW-only) are allowed.  ``domain`` is the axis-aligned rectangle
    (xmin, xmax, ymin, ymax) for s0 and the missing locations, ``L`` the
    weak-limit truncation level, ``mh_c`` the half-width of the rho proposal
    window and ``mh_s0_sd`` the s0 random-walk scale.
    """

    B_mu: np.ndarray = (0.0, 0.0)
    W_mu: np.ndarray = ((1000.0, 0.0), (0.0, 1000.0))
    B_eta: np.ndarray = (0.0, 0.0)
    W_eta: np.ndarray = ((1000.0, 0.0), (0.0, 1000.0))
    a_sigma: float = 3.0
    C_sigma: np.ndarray = ((1.0, 0.0), (0.0, 1.0))
    rho_weights: Tuple[float, float, float] = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
    a1: float = 0.1
    b1: float = 1.0
    a2: float = 10.0
    b2: float = 1.0
    a3: float = 0.1
    b3: float = 1.0
    domain: Tuple[float, float, float, float] = (-5.0, 5.0, -5.0, 5.0)
    L: int = 200
    mh_c: float = 0.1
    mh_s0_sd: float = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "B_mu", np.asarray(self.B_mu, dtype=float).reshape(2))
        object.__setattr__(self, "B_eta", np.asarray(self.B_eta, dtype=float).reshape(2))
        for name in ("W_mu", "W_eta", "C_sigma"):
            m = np.asarray(getattr(self, name), dtype=float).reshape(2, 2)
            check_spd(m)
            object.__setattr__(self, name, m)
        if self.a_sigma <= 1.0:
            raise ConfigError("a_sigma must exceed dimension - 1 = 1")
        w = np.asarray(self.rho_weights, dtype=float)
        if w.shape != (3,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError("rho weights must be nonnegative and sum to 1")
        if not np.any(w == 1.0) and np.any(w == 0.0):
            raise ConfigError("rho weights must be strictly positive unless degenerate")
        object.__setattr__(self, "rho_weights", (float(w[0]), float(w[1]), float(w[2])))
        for name in ("a1", "b1", "a2", "b2", "a3", "b3"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        dom = tuple(float(v) for v in self.domain)
        if len(dom) != 4 or dom[0] >= dom[1] or dom[2] >= dom[3]:
            raise ConfigError("domain must be (xmin, xmax, ymin, ymax) with positive extent")
        object.__setattr__(self, "domain", dom)
        if self.L < 2:
            raise ConfigError("truncation level L must be at least 2")
        if self.mh_c <= 0:
            raise ConfigError("mh_c must be positive")
        if self.mh_s0_sd is None:
            object.__setattr__(self, "mh_s0_sd", 0.1 * (dom[1] - dom[0]))
        elif self.mh_s0_sd <= 0:
            raise ConfigError("mh_s0_sd must be positive")

    def with_variant(self, variant: str) -> "PriorConfig":
        """Return a copy with the rho weights of the requested model variant."""
        weights = {
            "full": (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
            "crw_only": (0.0, 1.0, 0.0),
            "brw_only": (1.0, 0.0, 0.0),
        }
        if variant not in weights:
            raise ConfigError(f"unknown variant {variant!r}")
        return replace(self, rho_weights=weights[variant])

    def in_domain(self, pt) -> bool:
        x, y = float(pt[0]), float(pt[1])
        xmin, xmax, ymin, ymax = self.domain
        return xmin <= x <= xmax and ymin <= y <= ymax


def rho_prior_cdf(d: float, weights: Tuple[float, float, float]) -> float:
    """Cumulative distribution function of the mixed-type rho prior."""
    w0, w1, w01 = weights
    if d < 0.0:
        return 0.0
    if d == 0.0:
        return w0
    if d < 1.0:
        return w0 + w01 * d
    return 1.0


def rho_prior_logpdf(rho: float, weights: Tuple[float, float, float]) -> float:
    """Log prior density of rho against the atoms+Lebesgue reference measure."""
    w0, w1, w01 = weights
    if rho == 0.0:
        w = w0
    elif rho == 1.0:
        w = w1
    elif 0.0 < rho < 1.0:
        w = w01
    else:
        return -np.inf
    return np.log(w) if w > 0 else -np.inf


def sample_rho_prior(rng: np.random.Generator, weights: Tuple[float, float, float]) -> float:
    """Draw rho: atom 0 with mass w0, atom 1 with mass w1, else U(0,1)."""
    w0, w1, _ = weights
    u = rng.random()
    if u < w0:
        return 0.0
    if u < w0 + w1:
        return 1.0
    return float(rng.random())


def sample_mvn2(rng: np.random.Generator, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    return mean + chol_2x2(cov) @ rng.standard_normal(2)


def sample_invwishart2(rng: np.random.Generator, df: float, scale: np.ndarray) -> np.ndarray:
    """Draw a 2x2 inverse-Wishart matrix with density proportional to
    |S|^{-(df+3)/2} exp(-tr(scale S^{-1})/2).

    Uses the Bartlett factorisation of the Wishart(df, scale^{-1}) draw for
    the precision; the conjugate update for a normal covariance is then
    IW(df + n, scale + residual scatter).
    """
    inv_scale = np.linalg.inv(scale)
    lower = np.linalg.cholesky(inv_scale)
    a = np.zeros((2, 2))
    a[0, 0] = np.sqrt(rng.chisquare(df))
    a[1, 1] = np.sqrt(rng.chisquare(df - 1.0))
    a[1, 0] = rng.standard_normal()
    la = lower @ a
    precision = la @ la.T
    draw = np.linalg.inv(precision)
    return 0.5 * (draw + draw.T)


def sample_stap_prior(rng: np.random.Generator, config: PriorConfig) -> StapParams:
    """Independent prior draw of one behaviour's parameter set."""
    mu = sample_mvn2(rng, config.B_mu, config.W_mu)
    eta = sample_mvn2(rng, config.B_eta, config.W_eta)
    sigma = sample_invwishart2(rng, config.a_sigma, config.C_sigma)
    tau = float(rng.uniform(0.0, 1.0))
    rho = sample_rho_prior(rng, config.rho_weights)
    return StapParams(mu=mu, eta=eta, sigma=sigma, tau=tau, rho=rho)


def sample_hdp_hyper_prior(rng: np.random.Generator, config: PriorConfig):
    """Draw (alpha, kappa, gamma) from their priors.

    The prior is placed on the sum alpha+kappa ~ G(a1, b1) (rate
    parameterisation) and the sticky fraction kappa/(alpha+kappa) ~ B(a2, b2),
    with gamma ~ G(a3, b3).
    """
    total = rng.gamma(config.a1, 1.0 / config.b1)
    frac = rng.beta(config.a2, config.b2)
    gamma = rng.gamma(config.a3, 1.0 / config.b3)
    return total * (1.0 - frac), total * frac, gamma
