"""Posterior post-processing: number-of-behaviours distribution, label
alignment, MAP states, parameter summaries, model scores and predictive
movement-metric draws.

Labels are never touched while sampling; everything here conditions on the
sweeps whose number of non-empty states equals the posterior mode of K and
aligns labels across those sweeps before summarising.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DataError
from .geometry import Path, atan_star, bearings, rotate
from .stap_core import StapParams, step_loglik_vec

PARAM_PER_STATE = 9  # mu (2) + eta (2) + tau + rho + sigma (3 free entries)


@dataclass
class PosteriorDraws:
    """Thinned post-burnin draws of every model unknown.

    Arrays are indexed (draw, state, ...) with L truncated states; ``z`` holds
    0-based labels per step.  ``imputed`` follows ``missing_indices``.
    """

    mu: np.ndarray
    eta: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray
    rho: np.ndarray
    pi: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    kappa: np.ndarray
    gamma: np.ndarray
    z: np.ndarray
    s0: np.ndarray
    imputed: np.ndarray
    missing_indices: np.ndarray
    iterations: int
    burnin: int
    thin: int
    seed: int
    s1: np.ndarray
    domain: Tuple[float, float, float, float]

    @property
    def n_draws(self) -> int:
        return self.mu.shape[0]

    @property
    def L(self) -> int:
        return self.mu.shape[1]

    def k_per_draw(self) -> np.ndarray:
        return np.array([np.unique(zb).size for zb in self.z])

    def completed_points(self, path: Path, b: int) -> np.ndarray:
        pts = path.points.copy()
        for a, t in enumerate(self.missing_indices):
            pts[t] = self.imputed[b, a]
        return pts


def posterior_K(draws: PosteriorDraws) -> Dict[int, float]:
    """Empirical distribution of the number of non-empty states."""
    if draws.n_draws == 0:
        raise DataError("no draws")
    ks, counts = np.unique(draws.k_per_draw(), return_counts=True)
    return {int(k): float(c) / draws.n_draws for k, c in zip(ks, counts)}


def modal_K(draws: PosteriorDraws) -> int:
    dist = posterior_K(draws)
    best = max(dist.values())
    return min(k for k, p in dist.items() if p == best)


@dataclass
class AlignedDraws:
    """Modal-K subset with labels matched across sweeps.

    State axis runs over the K aligned behaviours; ``z`` is relabelled to
    0..K-1.  ``sweeps`` records which original draws were kept.
    """

    K: int
    sweeps: np.ndarray
    mu: np.ndarray
    eta: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray
    rho: np.ndarray
    pi: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    kappa: np.ndarray
    gamma: np.ndarray
    z: np.ndarray
    s0: np.ndarray
    imputed: np.ndarray


def _match_states(z_ref: np.ndarray, labels_ref: np.ndarray,
                  z_b: np.ndarray, labels_b: np.ndarray) -> np.ndarray:
    """Greedy matching of one sweep's labels onto the reference labels by
    state-assignment overlap; largest contingency cell first, ties toward the
    lowest indices."""
    k = labels_ref.size
    table = np.zeros((k, k), dtype=np.int64)
    for a, la in enumerate(labels_ref):
        in_a = z_ref == la
        for b, lb in enumerate(labels_b):
            table[a, b] = np.count_nonzero(in_a & (z_b == lb))
    order = np.full(k, -1, dtype=np.int64)
    free_a = set(range(k))
    free_b = set(range(k))
    work = table.astype(float)
    for _ in range(k):
        best = -1.0
        pick = None
        for a in sorted(free_a):
            for b in sorted(free_b):
                if work[a, b] > best:
                    best = work[a, b]
                    pick = (a, b)
        order[pick[0]] = labels_b[pick[1]]
        free_a.discard(pick[0])
        free_b.discard(pick[1])
    return order


def align_draws(draws: PosteriorDraws) -> AlignedDraws:
    """Condition on the modal-K sweeps and align their labels to the first
    such sweep."""
    k_star = modal_K(draws)
    keep = np.flatnonzero(draws.k_per_draw() == k_star)
    ref = keep[0]
    labels_ref = np.unique(draws.z[ref])
    B = keep.size
    out = {
        "mu": np.empty((B, k_star, 2)), "eta": np.empty((B, k_star, 2)),
        "sigma": np.empty((B, k_star, 2, 2)), "tau": np.empty((B, k_star)),
        "rho": np.empty((B, k_star)), "pi": np.empty((B, k_star, k_star)),
        "beta": np.empty((B, k_star)), "z": np.empty((B, draws.z.shape[1]), dtype=np.int16),
    }
    for row, b in enumerate(keep):
        labels_b = np.unique(draws.z[b])
        order = _match_states(draws.z[ref], labels_ref, draws.z[b], labels_b)
        out["mu"][row] = draws.mu[b, order]
        out["eta"][row] = draws.eta[b, order]
        out["sigma"][row] = draws.sigma[b, order]
        out["tau"][row] = draws.tau[b, order]
        out["rho"][row] = draws.rho[b, order]
        out["pi"][row] = draws.pi[b][np.ix_(order, order)]
        out["beta"][row] = draws.beta[b, order]
        relabel = np.full(draws.L, -1, dtype=np.int16)
        relabel[order] = np.arange(k_star, dtype=np.int16)
        out["z"][row] = relabel[draws.z[b]]
    return AlignedDraws(
        K=k_star, sweeps=keep, alpha=draws.alpha[keep], kappa=draws.kappa[keep],
        gamma=draws.gamma[keep], s0=draws.s0[keep], imputed=draws.imputed[keep],
        **out)


def map_states(draws: PosteriorDraws) -> np.ndarray:
    """Per-time posterior mode of the aligned state labels (1-based); ties
    break toward the lower label."""
    al = align_draws(draws)
    n = al.z.shape[1]
    out = np.empty(n, dtype=int)
    for i in range(n):
        counts = np.bincount(al.z[:, i], minlength=al.K)
        out[i] = int(np.argmax(counts)) + 1
    return out


def _interval(x: np.ndarray) -> Tuple[float, float, str]:
    """Equal-tailed 95% interval with brackets closed on a side exactly when
    no draw falls strictly outside that endpoint."""
    lo, hi = np.quantile(x, [0.025, 0.975])
    left = "[" if not np.any(x < lo) else "("
    right = "]" if not np.any(x > hi) else ")"
    return float(lo), float(hi), f"{left}{_fmt(lo)} {_fmt(hi)}{right}"


def _fmt(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".") if v != int(v) else str(int(v))


@dataclass
class Summary:
    """Posterior means and 95% credible intervals on the modal-K subset."""

    modal_k: int
    k_distribution: Dict[int, float]
    n_sweeps: int
    tables: Dict[str, np.ndarray]
    intervals: Dict[str, list]
    rho_atoms: List[Dict[str, float]]
    hyper_mean: Dict[str, float]
    hyper_interval: Dict[str, str]
    map_z: np.ndarray


def summarize(draws: PosteriorDraws) -> Summary:
    """Table-style posterior summary conditioned on the modal K."""
    al = align_draws(draws)
    K = al.K
    tables: Dict[str, np.ndarray] = {}
    intervals: Dict[str, list] = {}

    def add(name: str, arr: np.ndarray) -> None:
        tables[name] = arr.mean(axis=0)
        intervals[name] = [_interval(arr[:, j])[2] for j in range(arr.shape[1])]

    add("mu_1", al.mu[:, :, 0])
    add("mu_2", al.mu[:, :, 1])
    add("eta_1", al.eta[:, :, 0])
    add("eta_2", al.eta[:, :, 1])
    add("tau", al.tau)
    add("rho", al.rho)
    add("sigma_11", al.sigma[:, :, 0, 0])
    add("sigma_12", al.sigma[:, :, 0, 1])
    add("sigma_22", al.sigma[:, :, 1, 1])
    for j in range(K):
        add(f"pi_{j + 1}", al.pi[:, j, :])
    add("beta", al.beta)

    rho_atoms = []
    for j in range(K):
        x = al.rho[:, j]
        rho_atoms.append({
            "p0": float(np.mean(x == 0.0)),
            "p1": float(np.mean(x == 1.0)),
            "p_mid": float(np.mean((x > 0.0) & (x < 1.0))),
            "mean": float(x.mean()),
            "interval": _interval(x)[2],
        })

    hyper_mean = {}
    hyper_interval = {}
    for name, arr in (("alpha", al.alpha), ("kappa", al.kappa), ("gamma", al.gamma)):
        hyper_mean[name] = float(arr.mean())
        hyper_interval[name] = _interval(arr)[2]

    return Summary(modal_k=K, k_distribution=posterior_K(draws),
                   n_sweeps=al.sweeps.size, tables=tables, intervals=intervals,
                   rho_atoms=rho_atoms, hyper_mean=hyper_mean,
                   hyper_interval=hyper_interval, map_z=map_states(draws))


def _complete_loglik(points: np.ndarray, s0: np.ndarray, z: np.ndarray,
                     params: List[StapParams]) -> float:
    """Movement-metric log-likelihood of one completed path under one set of
    parameters: the coordinate terms plus the polar Jacobian sum(log r)."""
    phi0 = atan_star(points[0, 1] - s0[1], points[0, 0] - s0[0])
    phi = bearings(points, phi0)
    phi_prev = np.concatenate([[phi0], phi[:-1]])
    v = np.diff(points, axis=0)
    r = np.hypot(v[:, 0], v[:, 1])
    if np.any(r <= 0):
        raise DataError("zero-length step has no movement-metric density")
    total = float(np.log(r).sum())
    for j in np.unique(z):
        idx = np.flatnonzero(z == j)
        total += float(step_loglik_vec(params[j], points[idx + 1], points[idx],
                                       phi_prev[idx]).sum())
    return total


def loglik_metrics(draws: PosteriorDraws, path: Path) -> np.ndarray:
    """Per-sweep complete-data log-likelihood in movement metrics, with each
    sweep's imputed locations substituted."""
    out = np.empty(draws.n_draws)
    for b in range(draws.n_draws):
        params = [StapParams(draws.mu[b, j], draws.eta[b, j], draws.sigma[b, j],
                             draws.tau[b, j], draws.rho[b, j])
                  for j in range(draws.L)]
        pts = draws.completed_points(path, b)
        out[b] = _complete_loglik(pts, draws.s0[b], draws.z[b], params)
    return out


def _plugin_loglik(draws: PosteriorDraws, path: Path) -> Tuple[float, int]:
    """Complete-data log-likelihood at the plug-in: modal-K subset,
    posterior-mean parameters, MAP states, posterior-mean imputations."""
    al = align_draws(draws)
    params = [StapParams(al.mu[:, j].mean(axis=0), al.eta[:, j].mean(axis=0),
                         _mean_spd(al.sigma[:, j]), al.tau[:, j].mean(),
                         _mean_rho(al.rho[:, j]))
              for j in range(al.K)]
    z_map = map_states(draws) - 1
    pts = path.points.copy()
    if draws.missing_indices.size:
        imput = al.imputed.mean(axis=0)
        for a, t in enumerate(draws.missing_indices):
            pts[t] = imput[a]
    s0 = al.s0.mean(axis=0)
    return _complete_loglik(pts, s0, z_map, params), al.K


def _mean_spd(mats: np.ndarray) -> np.ndarray:
    m = mats.mean(axis=0)
    return 0.5 * (m + m.T)


def _mean_rho(x: np.ndarray) -> float:
    # the plug-in respects an atom once it dominates, matching the table
    # convention of reporting rho-hat as 0 or 1
    p0, p1 = np.mean(x == 0.0), np.mean(x == 1.0)
    if p0 > 0.5:
        return 0.0
    if p1 > 0.5:
        return 1.0
    return float(np.clip(x.mean(), 0.0, 1.0))


def dic5(draws: PosteriorDraws, path: Path) -> float:
    """Complete-data deviance score; lower is better."""
    mean_ll = float(loglik_metrics(draws, path).mean())
    plug_ll, _ = _plugin_loglik(draws, path)
    return -4.0 * mean_ll + 2.0 * plug_ll


def icl(draws: PosteriorDraws, path: Path) -> float:
    """Plug-in complete-data log-likelihood with a BIC-style penalty on the
    free emission and transition parameters; higher is better."""
    plug_ll, K = _plugin_loglik(draws, path)
    nu = PARAM_PER_STATE * K + K * (K - 1)
    return plug_ll - 0.5 * nu * np.log(path.n_steps)


def predictive_metrics(draws: PosteriorDraws, j: int, n_samples: int,
                       rng: np.random.Generator,
                       force: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """Posterior predictive draws of (turning-angle, log step-length) for the
    CRW component of aligned behaviour j (1-based).

    Each retained sweep contributes draws y ~ N(eta_j, sigma_j); the angle of
    y is projected-normal distributed and its norm gives the step length.
    """
    al = align_draws(draws)
    if not 1 <= j <= al.K:
        raise DataError(f"behaviour {j} not in the modal-K set")
    col = j - 1
    p1 = float(np.mean(al.rho[:, col] == 1.0))
    if p1 <= 0.5 and not force:
        raise DataError(
            f"behaviour {j} is not CRW-dominant (P(rho=1)={p1:.2f}); pass force=True")
    B = al.sweeps.size
    theta = np.empty(n_samples)
    logr = np.empty(n_samples)
    for i in range(n_samples):
        b = i % B
        chol = np.linalg.cholesky(al.sigma[b, col])
        y = al.eta[b, col] + chol @ rng.standard_normal(2)
        theta[i] = atan_star(y[1], y[0])
        logr[i] = np.log(np.hypot(y[0], y[1]))
    return theta, logr


def accuracy(map_z: np.ndarray, true_z: np.ndarray) -> float:
    """Fraction of matching states after the best label permutation."""
    map_z = np.asarray(map_z)
    true_z = np.asarray(true_z)
    if map_z.shape != true_z.shape:
        raise DataError("state sequences must have equal length")
    labels_a = np.unique(map_z)
    labels_b = np.unique(true_z)
    table = np.zeros((labels_a.size, labels_b.size), dtype=np.int64)
    for a, la in enumerate(labels_a):
        for b, lb in enumerate(labels_b):
            table[a, b] = np.count_nonzero((map_z == la) & (true_z == lb))
    k = max(labels_a.size, labels_b.size)
    if k <= 7:
        best = 0
        idx_b = range(labels_b.size)
        for perm in permutations(range(labels_a.size), labels_b.size) \
                if labels_a.size >= labels_b.size else permutations(idx_b, labels_a.size):
            if labels_a.size >= labels_b.size:
                hit = sum(table[perm[b], b] for b in idx_b)
            else:
                hit = sum(table[a, perm[a]] for a in range(labels_a.size))
            best = max(best, hit)
    else:
        rows, cols = linear_sum_assignment(-table)
        best = int(table[rows, cols].sum())
    return best / map_z.size
