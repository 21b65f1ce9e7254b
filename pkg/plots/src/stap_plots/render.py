"""Render figures from the delimited outputs of the fitting CLI.

Five figure kinds are supported: the trajectory coloured by MAP state,
expected-movement arrows with their 95% ellipses, state frequency by time of
day, predictive turning-angle and log-step-length densities, and turning-angle
histograms of subsampled tracks.  Everything is drawn exactly as found in the
input CSVs; no statistic is recomputed here.

Output is SVG with deterministic ids and no timestamps, so identical inputs
give byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "stap-plots"
matplotlib.rcParams["svg.fonttype"] = "none"

import matplotlib.pyplot as plt
import numpy as np


class SchemaError(ValueError):
    """An input file does not match its expected layout."""


FIGURES = ("trajectory", "arrows", "time_of_day", "predictive", "histograms")

SCHEMAS = {
    "trajectory.csv": ["index", "x", "y", "missing", "state"],
    "map_states.csv": ["step", "state"],
    "arrows.csv": ["state", "anchor", "kind", "tail_x", "tail_y", "head_x",
                   "head_y"],
    "ellipses.csv": ["state", "anchor", "center_x", "center_y", "s_11",
                     "s_12", "s_22", "level"],
    "state_time_of_day.csv": None,  # bin plus one column per state
    "predictive_theta_density.csv": ["state", "theta", "density"],
    "predictive_logr_density.csv": ["state", "log_r", "density"],
}

HIST_COLUMNS = ["bin_left", "bin_right", "density"]


@dataclass
class PlotBundle:
    """Input selection for one rendering run.

    ``bundle_dir`` holds the summarize outputs; turning-angle histogram CSVs
    (``turning_angle_hist*.csv``) found there are rendered as well.
    """

    bundle_dir: Path
    out_dir: Path
    figures: Sequence[str] = FIGURES

    def __post_init__(self):
        self.bundle_dir = Path(self.bundle_dir)
        self.out_dir = Path(self.out_dir)
        bad = set(self.figures) - set(FIGURES)
        if bad:
            raise SchemaError(f"unknown figure kinds: {', '.join(sorted(bad))}")


def _read_csv(path: Path, expected: Optional[List[str]]) -> Dict[str, np.ndarray]:
    if not path.exists():
        raise SchemaError(f"{path}: file not found")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file")
        if expected is not None:
            for col in expected:
                if col not in header:
                    raise SchemaError(f"{path}: missing column {col!r}")
        rows = [row for row in reader if row and any(c.strip() for c in row)]
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    out: Dict[str, np.ndarray] = {}
    for i, name in enumerate(header):
        vals = [row[i] if i < len(row) else "" for row in rows]
        try:
            out[name] = np.array([float(v) for v in vals])
        except ValueError:
            out[name] = np.array(vals)
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _state_colors(n: int):
    cmap = plt.get_cmap("tab10")
    return [cmap(i % 10) for i in range(n)]


def _fig_trajectory(data, out: Path) -> None:
    states = data["state"].astype(int)
    labels = np.unique(states)
    colors = _state_colors(labels.max())
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.plot(data["x"], data["y"], color="0.8", lw=0.4, zorder=1)
    for lab in labels:
        sel = states == lab
        ax.scatter(data["x"][sel], data["y"][sel], s=4,
                   color=colors[lab - 1], label=f"behaviour {lab}", zorder=2)
    miss = data["missing"].astype(int) == 1
    if miss.any():
        ax.scatter(data["x"][miss], data["y"][miss], s=14, facecolors="none",
                   edgecolors="k", lw=0.5, label="imputed", zorder=3)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.legend(frameon=False, fontsize=8, markerscale=2)
    _save(fig, out)


def _ellipse_points(cx, cy, s11, s12, s22, level, n=120):
    cov = np.array([[s11, s12], [s12, s22]])
    radius_sq = -2.0 * math.log(1.0 - level)
    w, u = np.linalg.eigh(cov)
    t = np.linspace(0.0, 2 * np.pi, n)
    circ = np.stack([np.cos(t), np.sin(t)], axis=1)
    pts = np.array([cx, cy]) + math.sqrt(radius_sq) * circ * np.sqrt(w) @ u.T
    return pts


def _fig_arrows(arrows, ellipses, out_dir: Path) -> List[Path]:
    states = np.unique(arrows["state"].astype(int))
    colors = _state_colors(states.max())
    written = []
    for lab in states:
        fig, ax = plt.subplots(figsize=(5, 5))
        sel = arrows["state"].astype(int) == lab
        for kind, style in (("previous", dict(color="0.6", ls="--", lw=1.0)),
                            ("expected", dict(color=colors[lab - 1], lw=1.4))):
            rows = sel & (arrows["kind"] == kind)
            for tx, ty, hx, hy in zip(arrows["tail_x"][rows], arrows["tail_y"][rows],
                                      arrows["head_x"][rows], arrows["head_y"][rows]):
                ax.annotate("", xy=(hx, hy), xytext=(tx, ty),
                            arrowprops=dict(arrowstyle="->", **style))
        esel = ellipses["state"].astype(int) == lab
        for cx, cy, s11, s12, s22, level in zip(
                ellipses["center_x"][esel], ellipses["center_y"][esel],
                ellipses["s_11"][esel], ellipses["s_12"][esel],
                ellipses["s_22"][esel], ellipses["level"][esel]):
            pts = _ellipse_points(cx, cy, s11, s12, s22, level)
            ax.plot(pts[:, 0], pts[:, 1], color=colors[lab - 1], lw=0.8)
        ax.set_aspect("equal")
        ax.set_title(f"behaviour {lab}: expected movement, "
                     f"{int(ellipses['level'][esel][0] * 100)}% mass contour",
                     fontsize=9)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        path = out_dir / f"arrows_state{lab}.svg"
        _save(fig, path)
        written.append(path)
    return written


def _fig_time_of_day(data, out: Path) -> None:
    if "bin" not in data:
        raise SchemaError("state_time_of_day.csv: missing column 'bin'")
    state_cols = [c for c in data if c.startswith("state_")]
    if not state_cols:
        raise SchemaError("state_time_of_day.csv: missing column 'state_1'")
    colors = _state_colors(len(state_cols))
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, col in enumerate(sorted(state_cols, key=lambda c: int(c.split("_")[1]))):
        ax.plot(data["bin"], data[col], color=colors[i], lw=1.4,
                label=f"behaviour {i + 1}")
    ax.set_xlabel("time-of-day bin")
    ax.set_ylabel("frequency of MAP behaviour")
    ax.set_ylim(bottom=0)
    ax.legend(frameon=False, fontsize=8)
    _save(fig, out)


def _fig_predictive(theta, logr, out: Path) -> None:
    states = np.unique(theta["state"].astype(int))
    colors = _state_colors(states.max())
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    for lab in states:
        sel = theta["state"].astype(int) == lab
        axes[0].plot(theta["theta"][sel], theta["density"][sel],
                     color=colors[lab - 1], lw=1.3, label=f"behaviour {lab}")
        sel = logr["state"].astype(int) == lab
        axes[1].plot(logr["log_r"][sel], logr["density"][sel],
                     color=colors[lab - 1], lw=1.3)
    axes[0].set_xlabel("turning angle")
    axes[0].set_ylabel("density")
    axes[0].set_xlim(-np.pi, np.pi)
    axes[1].set_xlabel("log step length")
    axes[0].legend(frameon=False, fontsize=8)
    fig.tight_layout()
    _save(fig, out)


def _fig_histogram(data, title: str, out: Path) -> None:
    left = data["bin_left"]
    right = data["bin_right"]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(left, data["density"], width=right - left, align="edge",
           color="#4477aa", edgecolor="white", lw=0.3)
    ax.set_xlabel("turning angle")
    ax.set_ylabel("density")
    ax.set_xlim(-np.pi, np.pi)
    ax.set_title(title, fontsize=9)
    _save(fig, out)


def render(bundle: PlotBundle) -> List[Path]:
    """Render the selected figures; returns the written files.

    All inputs are read and validated before anything is written, so a bad
    bundle never leaves partial output.  A manifest listing the consumed
    files and their hashes is written alongside the images.
    """
    src = bundle.bundle_dir
    inputs: Dict[str, Path] = {}
    loaded = {}

    if "trajectory" in bundle.figures:
        p = src / "trajectory.csv"
        loaded["trajectory"] = _read_csv(p, SCHEMAS["trajectory.csv"])
        # an empty MAP-state table must abort before any output
        mp = src / "map_states.csv"
        loaded["map_states"] = _read_csv(mp, SCHEMAS["map_states.csv"])
        inputs["trajectory.csv"] = p
        inputs["map_states.csv"] = mp
    if "arrows" in bundle.figures:
        pa, pe = src / "arrows.csv", src / "ellipses.csv"
        loaded["arrows"] = _read_csv(pa, SCHEMAS["arrows.csv"])
        loaded["ellipses"] = _read_csv(pe, SCHEMAS["ellipses.csv"])
        inputs["arrows.csv"] = pa
        inputs["ellipses.csv"] = pe
    if "time_of_day" in bundle.figures:
        p = src / "state_time_of_day.csv"
        loaded["tod"] = _read_csv(p, None)
        inputs["state_time_of_day.csv"] = p
    if "predictive" in bundle.figures:
        pt = src / "predictive_theta_density.csv"
        pl = src / "predictive_logr_density.csv"
        loaded["theta"] = _read_csv(pt, SCHEMAS["predictive_theta_density.csv"])
        loaded["logr"] = _read_csv(pl, SCHEMAS["predictive_logr_density.csv"])
        inputs["predictive_theta_density.csv"] = pt
        inputs["predictive_logr_density.csv"] = pl
    hists = []
    if "histograms" in bundle.figures:
        for p in sorted(src.glob("turning_angle_hist*.csv")):
            hists.append((p, _read_csv(p, HIST_COLUMNS)))
            inputs[p.name] = p

    bundle.out_dir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    if "trajectory" in bundle.figures:
        out = bundle.out_dir / "trajectory.svg"
        _fig_trajectory(loaded["trajectory"], out)
        written.append(out)
    if "arrows" in bundle.figures:
        written.extend(_fig_arrows(loaded["arrows"], loaded["ellipses"],
                                   bundle.out_dir))
    if "time_of_day" in bundle.figures:
        out = bundle.out_dir / "state_time_of_day.svg"
        _fig_time_of_day(loaded["tod"], out)
        written.append(out)
    if "predictive" in bundle.figures:
        out = bundle.out_dir / "predictive_metrics.svg"
        _fig_predictive(loaded["theta"], loaded["logr"], out)
        written.append(out)
    for p, data in hists:
        out = bundle.out_dir / (p.stem + ".svg")
        _fig_histogram(data, p.stem.replace("_", " "), out)
        written.append(out)

    manifest = bundle.out_dir / "inputs_manifest.txt"
    lines = [f"{name} = {_sha256(path)}" for name, path in sorted(inputs.items())]
    manifest.write_text("\n".join(lines) + "\n")
    written.append(manifest)
    return written
