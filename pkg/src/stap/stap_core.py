"""The step-and-turn-with-attractive-point (STAP) emission distribution.

One behaviour is parametrised by an attractor ``mu``, a drift vector ``eta``,
a covariance ``sigma``, an attraction strength ``tau`` and a blending weight
``rho``.  The next location is conditionally bivariate normal with

    mean       s_i + (1-rho) * tau * (mu - s_i) + rho * R(phi_prev) @ eta
    covariance R(rho * phi_prev) @ sigma @ R(rho * phi_prev)'

so rho = 0 is a biased random walk (2-D AR(1) pulled toward mu) and rho = 1 a
correlated random walk (drift rotated by the previous bearing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .geometry import atan_star, check_spd, rotate

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class StapParams:
    """Parameter set of one STAP behaviour."""

    mu: np.ndarray
    eta: np.ndarray
    sigma: np.ndarray
    tau: float
    rho: float

    def __post_init__(self):
        mu, eta, sigma = self.mu, self.eta, self.sigma
        if not (isinstance(mu, np.ndarray) and mu.shape == (2,)):
            object.__setattr__(self, "mu", np.asarray(mu, dtype=float).reshape(2))
        if not (isinstance(eta, np.ndarray) and eta.shape == (2,)):
            object.__setattr__(self, "eta", np.asarray(eta, dtype=float).reshape(2))
        if not (isinstance(sigma, np.ndarray) and sigma.shape == (2, 2)):
            sigma = np.asarray(sigma, dtype=float).reshape(2, 2)
            object.__setattr__(self, "sigma", sigma)
        check_spd(sigma)
        if not 0.0 < self.tau < 1.0:
            raise DataError("tau must lie in (0, 1)")
        if not 0.0 <= self.rho <= 1.0:
            raise DataError("rho must lie in [0, 1]")


@dataclass(frozen=True)
class StepMoments:
    """Conditional mean increment and covariance of one step, plus the polar
    descriptors of the expected-movement vector."""

    M: np.ndarray
    V: np.ndarray
    F_length: float = field(init=False)
    F_direction: float = field(init=False)

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float).reshape(2)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "V", np.asarray(self.V, dtype=float).reshape(2, 2))
        object.__setattr__(self, "F_length", float(np.hypot(M[0], M[1])))
        direction = 0.0 if M[0] == 0.0 and M[1] == 0.0 else atan_star(M[1], M[0])
        object.__setattr__(self, "F_direction", direction)


def moments_mv(params: StapParams, s_i, phi_prev: float):
    """Mean increment and covariance of one step as plain arrays."""
    rho, tau = params.rho, params.tau
    mu, eta, sig = params.mu, params.eta, params.sigma
    ce, se = math.cos(phi_prev), math.sin(phi_prev)
    w = (1.0 - rho) * tau
    m = np.array([w * (mu[0] - s_i[0]) + rho * (ce * eta[0] - se * eta[1]),
                  w * (mu[1] - s_i[1]) + rho * (se * eta[0] + ce * eta[1])])
    a = rho * phi_prev
    c, s = math.cos(a), math.sin(a)
    s00, s01, s11 = sig[0, 0], sig[0, 1], sig[1, 1]
    # R(a) sig R(a)' expanded
    v00 = c * c * s00 - 2.0 * c * s * s01 + s * s * s11
    v01 = c * s * (s00 - s11) + (c * c - s * s) * s01
    v11 = s * s * s00 + 2.0 * c * s * s01 + c * c * s11
    return m, np.array([[v00, v01], [v01, v11]])


def stap_moments(params: StapParams, s_i, phi_prev: float) -> StepMoments:
    """Conditional moments of the next location given s_i and the previous
    bearing phi_prev."""
    s_i = np.asarray(s_i, dtype=float).reshape(2)
    m, v = moments_mv(params, s_i, phi_prev)
    return StepMoments(M=m, V=v)


def stap_logdensity(s_next, s_i, phi_prev: float, params: StapParams) -> float:
    """Log-density of the next location under the STAP conditional.

    The covariance is a rotation of sigma, so its determinant equals
    |sigma|; the quadratic form is evaluated with the analytic 2x2 inverse.
    """
    m, _ = moments_mv(params, s_i, phi_prev)
    dx = s_next[0] - s_i[0] - m[0]
    dy = s_next[1] - s_i[1] - m[1]
    sig = params.sigma
    det = sig[0, 0] * sig[1, 1] - sig[0, 1] * sig[1, 0]
    # rotate the residual back instead of inverting the rotated covariance
    a = params.rho * phi_prev
    c, s = math.cos(a), math.sin(a)
    ex = c * dx + s * dy
    ey = -s * dx + c * dy
    q = (sig[1, 1] * ex * ex - 2.0 * sig[0, 1] * ex * ey + sig[0, 0] * ey * ey) / det
    return float(-LOG_2PI - 0.5 * math.log(det) - 0.5 * q)


def metric_loglik(r: float, phi: float, s_i, phi_prev: float, params: StapParams) -> float:
    """Log-density of one step expressed in movement metrics (step-length r,
    bearing phi).  Change of variables from the coordinate density adds the
    polar Jacobian term log r."""
    if r <= 0:
        raise DataError("step length must be positive")
    s_i = np.asarray(s_i, dtype=float).reshape(2)
    s_next = s_i + r * np.array([np.cos(phi), np.sin(phi)])
    return stap_logdensity(s_next, s_i, phi_prev, params) + np.log(r)


def sample_step(rng: np.random.Generator, params: StapParams, s_i, phi_prev: float) -> np.ndarray:
    """Draw the next location from the STAP conditional."""
    s_i = np.asarray(s_i, dtype=float).reshape(2)
    m, v = moments_mv(params, s_i, phi_prev)
    z = rng.standard_normal(2)
    l11 = math.sqrt(v[0, 0])
    l21 = v[1, 0] / l11
    l22 = math.sqrt(max(v[1, 1] - l21 * l21, 0.0))
    return np.array([s_i[0] + m[0] + l11 * z[0],
                     s_i[1] + m[1] + l21 * z[0] + l22 * z[1]])


def step_loglik_vec(params: StapParams, s_next: np.ndarray, s_i: np.ndarray,
                    phi_prev: np.ndarray) -> np.ndarray:
    """Vectorised STAP log-density across many steps of one behaviour.

    s_next, s_i are (n, 2) arrays and phi_prev an (n,) array of previous
    bearings; returns the n log-densities.
    """
    rho, tau = params.rho, params.tau
    m = (1.0 - rho) * tau * (params.mu - s_i) + rho * rotate(phi_prev, params.eta)
    d = s_next - s_i - m
    e = rotate(-rho * phi_prev, d)
    sig = params.sigma
    det = sig[0, 0] * sig[1, 1] - sig[0, 1] * sig[1, 0]
    q = (sig[1, 1] * e[:, 0] ** 2 - 2.0 * sig[0, 1] * e[:, 0] * e[:, 1]
         + sig[0, 0] * e[:, 1] ** 2) / det
    return -LOG_2PI - 0.5 * np.log(det) - 0.5 * q
