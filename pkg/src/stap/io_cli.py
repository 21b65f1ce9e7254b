"""Data ingestion, preprocessing, configuration files and persistence.

Track files are CSV with header ``time,x,y``; time is ISO-8601 or an integer
epoch, and a row with empty x and y marks a missing fix.  Draw directories
hold one CSV per parameter family plus a manifest carrying the schema
version, the seed and content hashes, which makes runs reproducible and
tamper-evident.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path as FsPath
from typing import Dict, List, Optional, Tuple

import numpy as np

from .diagnostics import PosteriorDraws, Summary
from .errors import ConfigError, DataError
from .geometry import Path, atan_star, bearings, ellipse_contour
from .hmm_sampler import McmcSchedule
from .priors import PriorConfig
from .simulator import SimConfig, WcCrwConfig, hmm_preset, wc_preset
from .stap_core import StapParams, stap_moments

SCHEMA_VERSION = 1
FLOAT_FMT = "%.17g"

DRAW_FAMILIES = ("mu", "eta", "sigma", "tau", "rho", "pi", "beta", "hyper",
                 "z", "s0", "imputed")


@dataclass(frozen=True)
class RawTrack:
    """Parsed track rows; missing fixes carry nan coordinates."""

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.x) | np.isnan(self.y)


@dataclass(frozen=True)
class Transform:
    """Centering/scaling applied by preprocess, kept for the inverse map."""

    center: np.ndarray
    scale: float

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return (pts - self.center) / self.scale

    def invert(self, pts: np.ndarray) -> np.ndarray:
        return pts * self.scale + self.center


def _parse_time(cell: str, line_no: int) -> int:
    cell = cell.strip()
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(cell)
    except ValueError:
        raise DataError(f"line {line_no}: cannot parse time {cell!r}")
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def load_track(file) -> RawTrack:
    """Read a ``time,x,y`` CSV; malformed cells are reported by line number."""
    path = FsPath(file)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file")
        if [h.strip().lower() for h in header[:3]] != ["time", "x", "y"]:
            raise DataError(f"{path}: expected header 'time,x,y'")
        times: List[int] = []
        xs: List[float] = []
        ys: List[float] = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 3:
                raise DataError(f"line {line_no}: expected 3 columns")
            t = _parse_time(row[0], line_no)
            cx, cy = row[1].strip(), row[2].strip()
            if cx == "" and cy == "":
                x = y = math.nan
            elif cx == "" or cy == "":
                raise DataError(f"line {line_no}: x and y must be both present or both empty")
            else:
                try:
                    x, y = float(cx), float(cy)
                except ValueError:
                    raise DataError(f"line {line_no}: malformed numeric cell")
                if not (math.isfinite(x) and math.isfinite(y)):
                    raise DataError(f"line {line_no}: non-finite coordinate")
            if times and t < times[-1]:
                raise DataError(f"line {line_no}: timestamps must be non-decreasing")
            if times and t == times[-1]:
                raise DataError(f"line {line_no}: duplicate timestamp")
            times.append(t)
            xs.append(x)
            ys.append(y)
    track = RawTrack(np.array(times, dtype=np.int64), np.array(xs), np.array(ys))
    if int(np.count_nonzero(~track.missing)) < 3:
        raise DataError(f"{path}: fewer than 3 valid rows")
    return track


def preprocess(track: RawTrack, center_scale: bool = True) -> Tuple[Path, Transform]:
    """Expand gaps into missing rows, trim a leading gap, and centre/scale.

    The nominal time-interval is the most common positive difference; every
    gap must be an integer multiple of it.  Coordinates are centred by the
    per-axis mean of the observed points and divided by the square root of
    the pooled variance (the mean of the two per-axis sample variances), so
    the aspect ratio is preserved.
    """
    diffs = np.diff(track.times)
    if diffs.size == 0:
        raise DataError("track too short")
    values, counts = np.unique(diffs, return_counts=True)
    nominal = int(values[np.argmax(counts)])
    ratio = diffs / nominal
    bad = np.flatnonzero(np.abs(ratio - np.round(ratio)) > 1e-9)
    if bad.size:
        gaps = ", ".join(f"rows {i + 1}-{i + 2} (gap {int(diffs[i])})" for i in bad[:10])
        raise DataError(f"gaps not multiples of the {nominal}-unit interval: {gaps}")

    n_expanded = int(np.round(ratio).sum()) + 1
    times = track.times[0] + nominal * np.arange(n_expanded, dtype=np.int64)
    x = np.full(n_expanded, np.nan)
    y = np.full(n_expanded, np.nan)
    pos = np.concatenate([[0], np.cumsum(np.round(ratio).astype(int))])
    x[pos] = track.x
    y[pos] = track.y

    missing = np.isnan(x) | np.isnan(y)
    first_obs = int(np.argmin(missing))
    times, x, y, missing = (a[first_obs:] for a in (times, x, y, missing))
    if np.count_nonzero(~missing) < 3:
        raise DataError("fewer than 3 observed points after trimming")

    obs = ~missing
    if center_scale:
        center = np.array([x[obs].mean(), y[obs].mean()])
        pooled = 0.5 * (x[obs].var(ddof=1) + y[obs].var(ddof=1))
        if pooled <= 0:
            raise DataError("degenerate track: zero pooled variance")
        scale = math.sqrt(pooled)
    else:
        center = np.zeros(2)
        scale = 1.0
    tr = Transform(center=center, scale=scale)
    pts = tr.apply(np.column_stack([x, y]))
    # placeholder coordinates for missing rows; the sampler treats them as
    # parameters and never reads these values beyond initialisation
    for ax in range(2):
        col = pts[:, ax]
        col[missing] = np.interp(np.flatnonzero(missing), np.flatnonzero(obs),
                                 col[obs])
    s0 = _initial_s0(pts, missing)
    return Path(points=pts, s0=s0, missing_mask=missing, timestamps=times), tr


def _initial_s0(pts: np.ndarray, missing: np.ndarray) -> np.ndarray:
    """One step behind the first point, mirroring the first observed move."""
    first = pts[0]
    for k in range(1, pts.shape[0]):
        if not missing[k] and not np.array_equal(pts[k], first):
            return first - (pts[k] - first) / k
    return first - np.array([1.0, 0.0])


# ---------------------------------------------------------------------------
# flat key-value configuration files

def _parse_kv(text: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {line_no}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip().lower()
        if key in out:
            raise ConfigError(f"config line {line_no}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _floats(value: str) -> List[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"cannot parse numbers from {value!r}")


def _matrix2(value: str, name: str) -> np.ndarray:
    vals = _floats(value)
    if len(vals) == 1:
        return np.array([[vals[0], 0.0], [0.0, vals[0]]])
    if len(vals) == 3:
        return np.array([[vals[0], vals[1]], [vals[1], vals[2]]])
    if len(vals) == 4:
        return np.array(vals).reshape(2, 2)
    raise ConfigError(f"{name}: give 1 (isotropic), 3 (s11,s12,s22) or 4 numbers")


def _bool(value: str, name: str) -> bool:
    v = value.strip().lower()
    if v in ("true", "1", "yes"):
        return True
    if v in ("false", "0", "no"):
        return False
    raise ConfigError(f"{name}: expected true/false")


FIT_KEYS = {
    "b_mu", "w_mu", "b_eta", "w_eta", "a_sigma", "c_sigma",
    "rho_w0", "rho_w1", "rho_w01", "a1", "b1", "a2", "b2", "a3", "b3",
    "domain", "l", "mh_c", "mh_s0_sd",
    "iterations", "burnin", "thin", "seed",
    "center_scale", "variant",
}

VARIANTS = ("full", "crw_only", "brw_only")


@dataclass(frozen=True)
class RunConfig:
    prior: PriorConfig
    schedule: McmcSchedule
    center_scale: bool = True
    variant: str = "full"


def parse_run_config(text: str) -> RunConfig:
    kv = _parse_kv(text)
    unknown = set(kv) - FIT_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    prior_kwargs = {}
    for key, attr in (("b_mu", "B_mu"), ("b_eta", "B_eta")):
        if key in kv:
            vals = _floats(kv[key])
            if len(vals) != 2:
                raise ConfigError(f"{key}: expected two numbers")
            prior_kwargs[attr] = vals
    for key, attr in (("w_mu", "W_mu"), ("w_eta", "W_eta"), ("c_sigma", "C_sigma")):
        if key in kv:
            prior_kwargs[attr] = _matrix2(kv[key], key)
    if "a_sigma" in kv:
        prior_kwargs["a_sigma"] = float(kv["a_sigma"])
    weights = [kv.get("rho_w0"), kv.get("rho_w1"), kv.get("rho_w01")]
    if any(w is not None for w in weights):
        if any(w is None for w in weights):
            raise ConfigError("give all three of rho_w0, rho_w1, rho_w01")
        prior_kwargs["rho_weights"] = tuple(float(w) for w in weights)
    for key in ("a1", "b1", "a2", "b2", "a3", "b3", "mh_c", "mh_s0_sd"):
        if key in kv:
            prior_kwargs[key] = float(kv[key])
    if "domain" in kv:
        vals = _floats(kv["domain"])
        if len(vals) != 4:
            raise ConfigError("domain: expected xmin,xmax,ymin,ymax")
        prior_kwargs["domain"] = tuple(vals)
    if "l" in kv:
        prior_kwargs["L"] = int(kv["l"])

    variant = kv.get("variant", "full").lower()
    if variant not in VARIANTS:
        raise ConfigError(f"variant must be one of {', '.join(VARIANTS)}")
    prior = PriorConfig(**prior_kwargs)
    if variant != "full":
        prior = prior.with_variant(variant)
    elif "rho_w0" in kv:
        pass  # explicit weights already applied

    schedule = McmcSchedule(
        iterations=int(kv.get("iterations", 125_000)),
        burnin=int(kv.get("burnin", 75_000)),
        thin=int(kv.get("thin", 10)),
        seed=int(kv.get("seed", 0)),
    )
    center_scale = _bool(kv["center_scale"], "center_scale") if "center_scale" in kv else True
    return RunConfig(prior=prior, schedule=schedule, center_scale=center_scale,
                     variant=variant)


def format_run_config(run: RunConfig) -> str:
    """Serialise a RunConfig to the flat key-value format parse_run_config
    reads; parse(format(x)) reproduces x."""
    p = run.prior
    lines = [
        f"b_mu = {_f(p.B_mu[0])},{_f(p.B_mu[1])}",
        f"w_mu = {_f(p.W_mu[0, 0])},{_f(p.W_mu[0, 1])},{_f(p.W_mu[1, 1])}",
        f"b_eta = {_f(p.B_eta[0])},{_f(p.B_eta[1])}",
        f"w_eta = {_f(p.W_eta[0, 0])},{_f(p.W_eta[0, 1])},{_f(p.W_eta[1, 1])}",
        f"a_sigma = {_f(p.a_sigma)}",
        f"c_sigma = {_f(p.C_sigma[0, 0])},{_f(p.C_sigma[0, 1])},{_f(p.C_sigma[1, 1])}",
        f"rho_w0 = {_f(p.rho_weights[0])}",
        f"rho_w1 = {_f(p.rho_weights[1])}",
        f"rho_w01 = {_f(p.rho_weights[2])}",
        f"a1 = {_f(p.a1)}", f"b1 = {_f(p.b1)}",
        f"a2 = {_f(p.a2)}", f"b2 = {_f(p.b2)}",
        f"a3 = {_f(p.a3)}", f"b3 = {_f(p.b3)}",
        f"domain = {','.join(_f(v) for v in p.domain)}",
        f"l = {p.L}",
        f"mh_c = {_f(p.mh_c)}",
        f"mh_s0_sd = {_f(p.mh_s0_sd)}",
        f"iterations = {run.schedule.iterations}",
        f"burnin = {run.schedule.burnin}",
        f"thin = {run.schedule.thin}",
        f"seed = {run.schedule.seed}",
        f"center_scale = {'true' if run.center_scale else 'false'}",
    ]
    return "\n".join(lines) + "\n"


SIM_KEYS = {
    "kind", "preset", "t", "seed", "k_star", "pi", "pi_self", "s0", "s1",
    "lambda_sim", "eps_sim", "a_sim", "b_sim", "d",
}


def parse_sim_config(text: str):
    """Build a SimConfig or WcCrwConfig from a flat config file."""
    kv = _parse_kv(text)
    state_keys = {k for k in kv if k.split("_")[0] in ("mu", "eta", "sigma", "tau", "rho")
                  and k.split("_")[-1].isdigit()}
    unknown = set(kv) - SIM_KEYS - state_keys
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    kind = kv.get("kind", "stap_hmm").lower()
    seed = int(kv.get("seed", 0))

    if kind == "wc_crw":
        if "preset" in kv:
            cfg = wc_preset(kv["preset"], T_star=int(kv.get("t", 100_000)), seed=seed)
            if "d" in kv:
                cfg = WcCrwConfig(cfg.lambda_sim, cfg.eps_sim, cfg.a_sim, cfg.b_sim,
                                  cfg.T_star, int(kv["d"]), cfg.s0, cfg.s1, seed)
            return cfg
        try:
            return WcCrwConfig(
                lambda_sim=float(kv["lambda_sim"]), eps_sim=float(kv["eps_sim"]),
                a_sim=float(kv["a_sim"]), b_sim=float(kv["b_sim"]),
                T_star=int(kv.get("t", 100_000)), d=int(kv.get("d", 1)),
                s0=_floats(kv["s0"]) if "s0" in kv else (-1.0, 0.0),
                s1=_floats(kv["s1"]) if "s1" in kv else (0.0, 0.0), seed=seed)
        except KeyError as exc:
            raise ConfigError(f"wc_crw config needs key {exc.args[0]}")
    if kind != "stap_hmm":
        raise ConfigError("kind must be stap_hmm or wc_crw")

    if "preset" in kv:
        return hmm_preset(kv["preset"], T=int(kv.get("t", 7000)), seed=seed)
    if "k_star" not in kv:
        raise ConfigError("stap_hmm config needs preset or k_star plus per-state keys")
    k = int(kv["k_star"])
    params = []
    for j in range(1, k + 1):
        try:
            params.append(StapParams(
                mu=_floats(kv[f"mu_{j}"]), eta=_floats(kv[f"eta_{j}"]),
                sigma=_matrix2(kv[f"sigma_{j}"], f"sigma_{j}"),
                tau=float(kv[f"tau_{j}"]), rho=float(kv[f"rho_{j}"])))
        except KeyError as exc:
            raise ConfigError(f"missing per-state key {exc.args[0]}")
    if "pi" in kv:
        vals = _floats(kv["pi"])
        if len(vals) != k * k:
            raise ConfigError(f"pi: expected {k * k} numbers")
        pi = np.array(vals).reshape(k, k)
    else:
        self_p = float(kv.get("pi_self", 0.8))
        off = (1.0 - self_p) / (k - 1) if k > 1 else 0.0
        pi = np.full((k, k), off)
        np.fill_diagonal(pi, self_p if k > 1 else 1.0)
    return SimConfig(
        params=tuple(params), pi=pi, T=int(kv.get("t", 7000)),
        s0=_floats(kv["s0"]) if "s0" in kv else (-1.0, 0.0),
        s1=_floats(kv["s1"]) if "s1" in kv else (0.0, 0.0), seed=seed)


# ---------------------------------------------------------------------------
# draw persistence

def _sha256_file(path: FsPath) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _write_csv(path: FsPath, header: List[str], rows) -> None:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(row) + "\n")
    path.write_text(buf.getvalue())


def _f(v: float) -> str:
    return FLOAT_FMT % v


def write_draws(draws: PosteriorDraws, out_dir, config_text: str = "") -> None:
    """One CSV per parameter family plus a manifest with content hashes."""
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    D, L = draws.n_draws, draws.L
    n_miss = draws.missing_indices.size

    def state_rows(arr, ncol):
        for b in range(D):
            for j in range(L):
                vals = np.atleast_1d(arr[b, j]).ravel()
                yield [str(b), str(j + 1)] + [_f(v) for v in vals[:ncol]]

    _write_csv(out / "mu.csv", ["draw", "state", "mu_1", "mu_2"],
               state_rows(draws.mu, 2))
    _write_csv(out / "eta.csv", ["draw", "state", "eta_1", "eta_2"],
               state_rows(draws.eta, 2))
    _write_csv(out / "sigma.csv", ["draw", "state", "s_11", "s_12", "s_22"],
               ([str(b), str(j + 1), _f(draws.sigma[b, j, 0, 0]),
                 _f(draws.sigma[b, j, 0, 1]), _f(draws.sigma[b, j, 1, 1])]
                for b in range(D) for j in range(L)))
    _write_csv(out / "tau.csv", ["draw", "state", "tau"],
               ([str(b), str(j + 1), _f(draws.tau[b, j])]
                for b in range(D) for j in range(L)))
    _write_csv(out / "rho.csv", ["draw", "state", "rho"],
               ([str(b), str(j + 1), _f(draws.rho[b, j])]
                for b in range(D) for j in range(L)))
    _write_csv(out / "pi.csv", ["draw", "state"] + [f"p_{k + 1}" for k in range(L)],
               ([str(b), str(j + 1)] + [_f(v) for v in draws.pi[b, j]]
                for b in range(D) for j in range(L)))
    _write_csv(out / "beta.csv", ["draw"] + [f"b_{k + 1}" for k in range(L)],
               ([str(b)] + [_f(v) for v in draws.beta[b]] for b in range(D)))
    _write_csv(out / "hyper.csv", ["draw", "alpha", "kappa", "gamma"],
               ([str(b), _f(draws.alpha[b]), _f(draws.kappa[b]), _f(draws.gamma[b])]
                for b in range(D)))
    _write_csv(out / "z.csv", ["draw"] + [f"z_{i + 1}" for i in range(draws.z.shape[1])],
               ([str(b)] + [str(int(v) + 1) for v in draws.z[b]] for b in range(D)))
    _write_csv(out / "s0.csv", ["draw", "x", "y"],
               ([str(b), _f(draws.s0[b, 0]), _f(draws.s0[b, 1])] for b in range(D)))
    _write_csv(out / "imputed.csv", ["draw", "point", "x", "y"],
               ([str(b), str(int(draws.missing_indices[a]) + 1),
                 _f(draws.imputed[b, a, 0]), _f(draws.imputed[b, a, 1])]
                for b in range(D) for a in range(n_miss)))

    lines = [
        f"schema_version = {SCHEMA_VERSION}",
        "kind = draws",
        f"seed = {draws.seed}",
        f"iterations = {draws.iterations}",
        f"burnin = {draws.burnin}",
        f"thin = {draws.thin}",
        f"l = {L}",
        f"n_draws = {D}",
        f"n_steps = {draws.z.shape[1]}",
        f"s1 = {_f(draws.s1[0])},{_f(draws.s1[1])}",
        f"domain = {','.join(_f(v) for v in draws.domain)}",
        "missing_points = " + ",".join(str(int(t) + 1) for t in draws.missing_indices),
        f"config_sha256 = {sha256_text(config_text)}",
    ]
    for fam in DRAW_FAMILIES:
        lines.append(f"file_{fam} = {_sha256_file(out / (fam + '.csv'))}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def read_draws(in_dir) -> PosteriorDraws:
    """Inverse of write_draws; verifies the manifest before loading."""
    src = FsPath(in_dir)
    manifest_path = src / "manifest.txt"
    if not manifest_path.exists():
        raise DataError(f"{src}: no manifest.txt")
    kv = _parse_kv(manifest_path.read_text())
    if int(kv.get("schema_version", -1)) != SCHEMA_VERSION:
        raise DataError(f"{src}: unsupported schema version {kv.get('schema_version')}")
    for fam in DRAW_FAMILIES:
        f = src / f"{fam}.csv"
        if not f.exists():
            raise DataError(f"{src}: missing draw family {fam!r}")
        if _sha256_file(f) != kv.get(f"file_{fam}"):
            raise DataError(f"{src}: hash mismatch for family {fam!r}")

    D = int(kv["n_draws"])
    L = int(kv["l"])
    n = int(kv["n_steps"])
    missing = np.array([int(v) - 1 for v in kv["missing_points"].split(",") if v != ""],
                       dtype=int)

    def load(name: str) -> np.ndarray:
        with (src / f"{name}.csv").open() as fh:
            next(fh)
            return np.loadtxt(fh, delimiter=",", ndmin=2)

    mu_raw = load("mu")
    eta_raw = load("eta")
    sig_raw = load("sigma")
    tau_raw = load("tau")
    rho_raw = load("rho")
    pi_raw = load("pi")
    beta_raw = load("beta")
    hyper = load("hyper")
    z_raw = load("z")
    s0 = load("s0")[:, 1:3]

    sigma = np.empty((D, L, 2, 2))
    sigma[:, :, 0, 0] = sig_raw[:, 2].reshape(D, L)
    sigma[:, :, 0, 1] = sig_raw[:, 3].reshape(D, L)
    sigma[:, :, 1, 0] = sig_raw[:, 3].reshape(D, L)
    sigma[:, :, 1, 1] = sig_raw[:, 4].reshape(D, L)

    imput = np.empty((D, missing.size, 2))
    if missing.size:
        imp_raw = load("imputed")
        imput = imp_raw[:, 2:4].reshape(D, missing.size, 2)

    return PosteriorDraws(
        mu=mu_raw[:, 2:4].reshape(D, L, 2),
        eta=eta_raw[:, 2:4].reshape(D, L, 2),
        sigma=sigma,
        tau=tau_raw[:, 2].reshape(D, L),
        rho=rho_raw[:, 2].reshape(D, L),
        pi=pi_raw[:, 2:].reshape(D, L, L),
        beta=beta_raw[:, 1:].reshape(D, L),
        alpha=hyper[:, 1], kappa=hyper[:, 2], gamma=hyper[:, 3],
        z=(z_raw[:, 1:] - 1).astype(np.int16),
        s0=s0,
        imputed=imput,
        missing_indices=missing,
        iterations=int(kv["iterations"]), burnin=int(kv["burnin"]),
        thin=int(kv["thin"]), seed=int(kv["seed"]),
        s1=np.array(_floats(kv["s1"])),
        domain=tuple(_floats(kv["domain"])),
    )


def write_path(path: Path, out_dir, transform: Optional[Transform] = None,
               input_sha: str = "") -> None:
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    times = path.timestamps if path.timestamps is not None \
        else np.arange(len(path), dtype=np.int64)
    rows = []
    for t, pt, miss in zip(times, path.points, path.missing_mask):
        if miss:
            rows.append([str(int(t)), "", ""])
        else:
            rows.append([str(int(t)), _f(pt[0]), _f(pt[1])])
    _write_csv(out / "path.csv", ["time", "x", "y"], rows)
    tr = transform or Transform(np.zeros(2), 1.0)
    lines = [
        f"schema_version = {SCHEMA_VERSION}",
        "kind = path",
        f"s0 = {_f(path.s0[0])},{_f(path.s0[1])}",
        f"center = {_f(tr.center[0])},{_f(tr.center[1])}",
        f"scale = {_f(tr.scale)}",
        f"input_sha256 = {input_sha}",
        f"file_path = {_sha256_file(out / 'path.csv')}",
    ]
    (out / "path_manifest.txt").write_text("\n".join(lines) + "\n")


def read_path(in_dir) -> Tuple[Path, Transform]:
    src = FsPath(in_dir)
    kv = _parse_kv((src / "path_manifest.txt").read_text())
    track = _read_path_csv(src / "path.csv")
    times, x, y = track
    missing = np.isnan(x) | np.isnan(y)
    pts = np.column_stack([x, y])
    obs = np.flatnonzero(~missing)
    for ax in range(2):
        pts[missing, ax] = np.interp(np.flatnonzero(missing), obs, pts[obs, ax])
    s0 = np.array(_floats(kv["s0"]))
    tr = Transform(center=np.array(_floats(kv["center"])), scale=float(kv["scale"]))
    return Path(points=pts, s0=s0, missing_mask=missing, timestamps=times), tr


def _read_path_csv(file: FsPath):
    times, xs, ys = [], [], []
    with file.open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            times.append(int(row[0]))
            xs.append(float(row[1]) if row[1] != "" else math.nan)
            ys.append(float(row[2]) if row[2] != "" else math.nan)
    return np.array(times, dtype=np.int64), np.array(xs), np.array(ys)


def write_track(points: np.ndarray, out_file, times: Optional[np.ndarray] = None,
                missing: Optional[np.ndarray] = None) -> None:
    """Plain track CSV, the same format load_track reads."""
    out = FsPath(out_file)
    out.parent.mkdir(parents=True, exist_ok=True)
    if times is None:
        times = np.arange(points.shape[0], dtype=np.int64)
    if missing is None:
        missing = np.zeros(points.shape[0], dtype=bool)
    rows = []
    for t, pt, miss in zip(times, points, missing):
        if miss:
            rows.append([str(int(t)), "", ""])
        else:
            rows.append([str(int(t)), _f(pt[0]), _f(pt[1])])
    _write_csv(out, ["time", "x", "y"], rows)


# ---------------------------------------------------------------------------
# summary artifacts

ANCHOR_BEARINGS = (0.0, 2.0 * np.pi / 3.0, -2.0 * np.pi / 3.0)


def write_summary_outputs(summary: Summary, draws: PosteriorDraws, path: Path,
                          out_dir, scores: Optional[Dict[str, float]] = None,
                          n_predictive: int = 2000,
                          tod_bins: int = 48) -> None:
    """Emit the report, the parameter tables, MAP states, predictive samples
    and densities, and the arrow/ellipse geometry consumed by the plot tool."""
    from .diagnostics import align_draws, predictive_metrics

    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    K = summary.modal_k

    # tables: rows = parameters, columns = states, mean row then CI row
    rows = []
    for name, means in summary.tables.items():
        rows.append([name] + [_f(v) for v in means])
        rows.append([f"{name}_ci"] + [ci for ci in summary.intervals[name]])
    _write_csv(out / "table_params.csv",
               ["parameter"] + [f"state_{j + 1}" for j in range(K)], rows)
    _write_csv(out / "hyper_params.csv", ["parameter", "mean", "ci"],
               ([name, _f(summary.hyper_mean[name]), summary.hyper_interval[name]]
                for name in ("alpha", "kappa", "gamma")))
    _write_csv(out / "rho_atoms.csv",
               ["state", "p_rho_0", "p_rho_1", "p_rho_mid", "mean", "interval"],
               ([str(j + 1), _f(a["p0"]), _f(a["p1"]), _f(a["p_mid"]),
                 _f(a["mean"]), a["interval"]]
                for j, a in enumerate(summary.rho_atoms)))
    _write_csv(out / "k_distribution.csv", ["k", "probability"],
               ([str(k), _f(p)] for k, p in sorted(summary.k_distribution.items())))
    _write_csv(out / "map_states.csv", ["step", "state"],
               ([str(i + 1), str(int(s))] for i, s in enumerate(summary.map_z)))

    al = align_draws(draws)
    pts = path.points.copy()
    if draws.missing_indices.size:
        imput = al.imputed.mean(axis=0)
        for a, t in enumerate(draws.missing_indices):
            pts[t] = imput[a]
    state_of_point = np.concatenate([summary.map_z, [summary.map_z[-1]]])
    _write_csv(out / "trajectory.csv", ["index", "x", "y", "missing", "state"],
               ([str(i + 1), _f(pts[i, 0]), _f(pts[i, 1]),
                 str(int(path.missing_mask[i])), str(int(state_of_point[i]))]
                for i in range(pts.shape[0])))

    # state frequency by time of day (or by index modulo one nominal day)
    if path.timestamps is not None:
        dt = int(path.timestamps[1] - path.timestamps[0])
        day = 86_400 if dt < 86_400 else dt * tod_bins
        phase = (path.timestamps[:-1].astype(np.int64) % day) / day
    else:
        phase = (np.arange(summary.map_z.size) % tod_bins) / tod_bins
    bin_of = np.minimum((phase * tod_bins).astype(int), tod_bins - 1)
    freq_rows = []
    for b in range(tod_bins):
        sel = summary.map_z[bin_of == b]
        if sel.size:
            freqs = [np.mean(sel == j + 1) for j in range(K)]
        else:
            freqs = [math.nan] * K
        freq_rows.append([str(b)] + [_f(v) for v in freqs])
    _write_csv(out / "state_time_of_day.csv",
               ["bin"] + [f"state_{j + 1}" for j in range(K)], freq_rows)

    # predictive movement metrics for CRW-dominant behaviours
    rng = np.random.Generator(np.random.PCG64(draws.seed + 1))
    pred_rows = []
    theta_grid = np.linspace(-np.pi, np.pi, 73)
    dens_theta_rows = []
    dens_logr_rows = []
    for j, atoms in enumerate(summary.rho_atoms, start=1):
        if atoms["p1"] <= 0.5:
            continue
        theta, logr = predictive_metrics(draws, j, n_predictive, rng)
        pred_rows.extend([str(j), _f(t), _f(lr)] for t, lr in zip(theta, logr))
        hist, _ = np.histogram(theta, bins=theta_grid, density=True)
        centers = 0.5 * (theta_grid[:-1] + theta_grid[1:])
        dens_theta_rows.extend([str(j), _f(c), _f(h)] for c, h in zip(centers, hist))
        lo, hi = np.quantile(logr, [0.001, 0.999])
        edges = np.linspace(lo, hi, 73)
        hist, _ = np.histogram(logr, bins=edges, density=True)
        centers = 0.5 * (edges[:-1] + edges[1:])
        dens_logr_rows.extend([str(j), _f(c), _f(h)] for c, h in zip(centers, hist))
    _write_csv(out / "predictive_metrics.csv", ["state", "theta", "log_r"], pred_rows)
    _write_csv(out / "predictive_theta_density.csv", ["state", "theta", "density"],
               dens_theta_rows)
    _write_csv(out / "predictive_logr_density.csv", ["state", "log_r", "density"],
               dens_logr_rows)

    # expected-movement arrows and 95% ellipses on an anchor grid
    params = [StapParams(al.mu[:, j].mean(axis=0), al.eta[:, j].mean(axis=0),
                         0.5 * (al.sigma[:, j].mean(axis=0) + al.sigma[:, j].mean(axis=0).T),
                         float(np.clip(al.tau[:, j].mean(), 1e-9, 1 - 1e-9)),
                         float(np.clip(al.rho[:, j].mean(), 0.0, 1.0)))
              for j in range(K)]
    obs = pts[~path.missing_mask]
    lo = obs.min(axis=0)
    hi = obs.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    grid = [lo + np.array([fx, fy]) * span
            for fx in (0.25, 0.5, 0.75) for fy in (0.25, 0.5, 0.75)]
    arrow_rows = []
    ellipse_rows = []
    for j, p in enumerate(params, start=1):
        for a, anchor in enumerate(grid):
            phi_prev = ANCHOR_BEARINGS[a % len(ANCHOR_BEARINGS)]
            mom = stap_moments(p, anchor, phi_prev)
            tail_prev = anchor - 0.05 * span * np.array([np.cos(phi_prev), np.sin(phi_prev)])
            arrow_rows.append([str(j), str(a), "previous",
                               _f(tail_prev[0]), _f(tail_prev[1]),
                               _f(anchor[0]), _f(anchor[1])])
            head = anchor + mom.M
            arrow_rows.append([str(j), str(a), "expected",
                               _f(anchor[0]), _f(anchor[1]), _f(head[0]), _f(head[1])])
            ell = ellipse_contour(head, mom.V, 0.95)
            ellipse_rows.append([str(j), str(a), _f(head[0]), _f(head[1]),
                                 _f(mom.V[0, 0]), _f(mom.V[0, 1]), _f(mom.V[1, 1]),
                                 _f(0.95)])
    _write_csv(out / "arrows.csv",
               ["state", "anchor", "kind", "tail_x", "tail_y", "head_x", "head_y"],
               arrow_rows)
    _write_csv(out / "ellipses.csv",
               ["state", "anchor", "center_x", "center_y", "s_11", "s_12", "s_22",
                "level"], ellipse_rows)

    lines = [f"modal K = {K} (P = {_f(summary.k_distribution.get(K, 0.0))})",
             f"sweeps used = {summary.n_sweeps} of {draws.n_draws}"]
    if scores:
        for name, val in scores.items():
            lines.append(f"{name} = {_f(val)}")
    lines.append("")
    lines.append("K distribution:")
    for k, p in sorted(summary.k_distribution.items()):
        lines.append(f"  K={k}: {_f(p)}")
    lines.append("")
    for j, atoms in enumerate(summary.rho_atoms, start=1):
        kind = "CRW" if atoms["p1"] > 0.5 else "BRW" if atoms["p0"] > 0.5 else "BCRW"
        lines.append(f"behaviour {j}: {kind}, rho {atoms['interval']}, "
                     f"P(rho=0)={_f(atoms['p0'])}, P(rho=1)={_f(atoms['p1'])}")
    (out / "report.txt").write_text("\n".join(lines) + "\n")


def write_angle_histogram(path_obj: Path, out_file, bins: int = 41) -> None:
    from .simulator import turning_angle_histogram
    hist, edges = turning_angle_histogram(path_obj, bins=bins)
    _write_csv(FsPath(out_file), ["bin_left", "bin_right", "density"],
               ([_f(edges[i]), _f(edges[i + 1]), _f(hist[i])] for i in range(bins)))
