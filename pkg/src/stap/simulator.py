"""Forward simulation: STAP-HMM trajectories, posterior-mean trajectories and
the subsampled wrapped-Cauchy CRW experiment.

The three synthetic benchmark configurations (``dataset1``..``dataset3``) and
the three subsampling configurations (``set1``..``set3``) ship as presets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .diagnostics import PosteriorDraws, align_draws
from .errors import ConfigError, DataError
from .geometry import Path, atan_star, metrics_to_path, path_to_metrics, wrap_angle
from .stap_core import StapParams, sample_step, stap_moments


@dataclass(frozen=True)
class SimConfig:
    """Generating model of a synthetic STAP-HMM trajectory."""

    params: Tuple[StapParams, ...]
    pi: np.ndarray
    T: int
    s0: np.ndarray = (-1.0, 0.0)
    s1: np.ndarray = (0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        k = len(self.params)
        if pi.shape != (k, k):
            raise ConfigError("pi must be K x K for K behaviours")
        if np.any(pi < 0) or not np.allclose(pi.sum(axis=1), 1.0, atol=1e-10):
            raise ConfigError("pi rows must be probabilities summing to 1")
        if self.T < 3:
            raise ConfigError("T must be at least 3")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "s0", np.asarray(self.s0, dtype=float).reshape(2))
        object.__setattr__(self, "s1", np.asarray(self.s1, dtype=float).reshape(2))

    @property
    def K_star(self) -> int:
        return len(self.params)


@dataclass(frozen=True)
class WcCrwConfig:
    """Wrapped-Cauchy / Weibull CRW used for the time-interval experiment.

    ``eps_sim`` is the mean resultant length of the turning-angle
    distribution; the underlying Cauchy scale is -log(eps_sim), so values
    near 1 concentrate the angles at ``lambda_sim``.
    """

    lambda_sim: float
    eps_sim: float
    a_sim: float
    b_sim: float
    T_star: int
    d: int = 1
    s0: np.ndarray = (-1.0, 0.0)
    s1: np.ndarray = (0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.eps_sim < 1.0:
            raise ConfigError("eps_sim must lie in (0, 1)")
        if self.a_sim <= 0 or self.b_sim <= 0:
            raise ConfigError("Weibull shape and scale must be positive")
        if self.T_star < 3:
            raise ConfigError("T_star must be at least 3")
        if self.d < 1:
            raise ConfigError("subsampling factor d must be at least 1")
        object.__setattr__(self, "s0", np.asarray(self.s0, dtype=float).reshape(2))
        object.__setattr__(self, "s1", np.asarray(self.s1, dtype=float).reshape(2))


def hmm_preset(name: str, T: int = 7000, seed: int = 0) -> SimConfig:
    """The three synthetic benchmark datasets: 3 behaviours, self-transition
    0.8, off-diagonal 0.1, varying attraction strengths and blending weights."""
    mus = [(-10.0, 0.0), (10.0, 10.0), (0.0, 0.0)]
    etas = [(0.0, 0.0), (1.0, 1.0), (-2.0, 0.0)]
    sigmas = [((0.5, 0.0), (0.0, 5.0)),
              ((1.0, -0.25), (-0.25, 0.5)),
              ((1.0, 0.25), (0.25, 1.0))]
    if name == "dataset1":
        taus = (0.5, 0.2, 0.5)  # behaviour 3 is pure CRW, its tau is inert
        rhos = (0.0, 0.5, 1.0)
    elif name == "dataset2":
        taus = (0.2, 0.2, 0.2)
        rhos = (0.2, 0.5, 0.8)
    elif name == "dataset3":
        taus = (0.8, 0.8, 0.8)
        rhos = (0.2, 0.5, 0.8)
    else:
        raise ConfigError(f"unknown preset {name!r}")
    params = tuple(StapParams(mu, eta, sig, tau, rho)
                   for mu, eta, sig, tau, rho in zip(mus, etas, sigmas, taus, rhos))
    pi = np.full((3, 3), 0.1)
    np.fill_diagonal(pi, 0.8)
    return SimConfig(params=params, pi=pi, T=T, s0=(-1.0, 0.0), s1=(0.0, 0.0),
                     seed=seed)


def wc_preset(name: str, T_star: int = 100_000, seed: int = 0) -> WcCrwConfig:
    """Subsampling experiment presets.

    The published concentration value 0.1 is the scale of the wrapped Cauchy
    (a highly concentrated distribution); expressed as a mean resultant
    length that is exp(-0.1).
    """
    eps = float(np.exp(-0.1))
    table = {
        "set1": dict(lambda_sim=np.pi - 0.1, a_sim=1.0, b_sim=1.0, d=2),
        "set2": dict(lambda_sim=np.pi - 0.35, a_sim=1.7, b_sim=5.0, d=3),
        "set3": dict(lambda_sim=np.pi / 4 - 0.2, a_sim=15.0, b_sim=10.0, d=9),
    }
    if name not in table:
        raise ConfigError(f"unknown preset {name!r}")
    cfg = table[name]
    return WcCrwConfig(eps_sim=eps, T_star=T_star, seed=seed, **cfg)


def simulate_hmm(config: SimConfig,
                 rng: Optional[np.random.Generator] = None) -> Tuple[Path, np.ndarray]:
    """Simulate a trajectory and its true behaviour sequence.

    The behaviour chain starts from state 1 (the anchor state before the
    first step); locations follow the STAP conditional of the active state.
    """
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(config.seed))
    K = config.K_star
    n = config.T - 1
    z = np.empty(n, dtype=int)
    prev = 0
    for i in range(n):
        prev = rng.choice(K, p=config.pi[prev])
        z[i] = prev
    points = np.empty((config.T, 2))
    points[0] = config.s1
    phi_prev = atan_star(config.s1[1] - config.s0[1], config.s1[0] - config.s0[0])
    for i in range(n):
        points[i + 1] = sample_step(rng, config.params[z[i]], points[i], phi_prev)
        d = points[i + 1] - points[i]
        if d[0] != 0.0 or d[1] != 0.0:
            phi_prev = atan_star(d[1], d[0])
    return Path(points=points, s0=config.s0), z


def config_from_posterior(draws: PosteriorDraws, T: int, seed: int = 0) -> SimConfig:
    """SimConfig built from the posterior means of the modal-K behaviours.

    Transition rows are restricted to non-empty states and renormalised.
    """
    if draws.n_draws == 0:
        raise DataError("no draws")
    al = align_draws(draws)
    params = []
    for j in range(al.K):
        sig = al.sigma[:, j].mean(axis=0)
        sig = 0.5 * (sig + sig.T)
        rho = float(np.clip(al.rho[:, j].mean(), 0.0, 1.0))
        tau = float(np.clip(al.tau[:, j].mean(), 1e-9, 1.0 - 1e-9))
        params.append(StapParams(al.mu[:, j].mean(axis=0), al.eta[:, j].mean(axis=0),
                                 sig, tau, rho))
    pi = al.pi.mean(axis=0)
    pi = pi / pi.sum(axis=1, keepdims=True)
    s0 = al.s0.mean(axis=0)
    s1 = draws.s1
    if np.allclose(s0, s1):
        s0 = s1 - np.array([1.0, 0.0])
    return SimConfig(params=tuple(params), pi=pi, T=T, s0=s0, s1=s1, seed=seed)


def simulate_from_posterior(draws: PosteriorDraws, T: int, seed: int = 0) -> Path:
    """Trajectory simulated with the posterior means as parameters."""
    path, _ = simulate_hmm(config_from_posterior(draws, T, seed))
    return path


def sample_wrapped_cauchy(rng: np.random.Generator, lam: float, eps: float,
                          size: int) -> np.ndarray:
    """Wrapped-Cauchy draws with circular mean lam and mean resultant length
    eps, by wrapping a Cauchy with scale -log(eps)."""
    scale = -np.log(eps)
    raw = lam + scale * rng.standard_cauchy(size)
    return wrap_angle(raw)


def simulate_wc_crw(config: WcCrwConfig,
                    rng: Optional[np.random.Generator] = None) -> Path:
    """CRW with i.i.d. Weibull step-lengths and wrapped-Cauchy turning-angles,
    rebuilt into coordinates from the movement metrics."""
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(config.seed))
    n = config.T_star - 1
    theta = sample_wrapped_cauchy(rng, config.lambda_sim, config.eps_sim, n)
    r = config.b_sim * rng.weibull(config.a_sim, n)
    phi0 = atan_star(config.s1[1] - config.s0[1], config.s1[0] - config.s0[0])
    path = metrics_to_path(config.s1, phi0, theta, r)
    return Path(points=path.points, s0=config.s0)


def subsample_path(path: Path, d: int) -> Path:
    """Keep every d-th location starting at the d-th; the recorded path of a
    coarser sampling interval."""
    if d < 1:
        raise DataError("subsampling factor must be at least 1")
    pts = path.points[d - 1::d]
    if pts.shape[0] < 3:
        raise DataError("subsampled path would have fewer than 3 points")
    mask = None
    if path.missing_mask is not None:
        mask = path.missing_mask[d - 1::d]
    ts = None
    if path.timestamps is not None:
        ts = path.timestamps[d - 1::d]
    return Path(points=pts, s0=path.s0, missing_mask=mask, timestamps=ts)


def turning_angle_histogram(path: Path, bins: int = 41) -> Tuple[np.ndarray, np.ndarray]:
    """Density histogram of the path's turning-angles over [-pi, pi).

    Returns (density, bin_edges).
    """
    metrics = path_to_metrics(path)
    return np.histogram(metrics.theta, bins=bins, range=(-np.pi, np.pi),
                        density=True)
