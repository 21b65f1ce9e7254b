"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure inside the sampler.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path as FsPath

import numpy as np

from . import io_cli
from .diagnostics import dic5, icl, summarize
from .errors import ConfigError, DataError, NumericError
from .geometry import Path
from .hmm_sampler import run_mcmc
from .simulator import SimConfig, simulate_hmm, simulate_wc_crw, subsample_path


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a trajectory from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("fit", help="run the MCMC sampler on a track")
    p.add_argument("--data", required=True, help="track CSV (time,x,y)")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory for draws")
    p.add_argument("--variant", choices=("full", "crw_only", "brw_only"),
                   help="override the config variant")

    p = sub.add_parser("summarize", help="post-process a draws directory")
    p.add_argument("--draws", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("subsample", help="keep every d-th fix of a track")
    p.add_argument("--data", required=True)
    p.add_argument("--d", required=True, type=int)
    p.add_argument("--out", required=True, help="output track CSV")
    p.add_argument("--hist-out", help="also write a turning-angle histogram CSV")
    return parser


def cmd_simulate(args) -> int:
    text = FsPath(args.config).read_text()
    config = io_cli.parse_sim_config(text)
    out = FsPath(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(config, SimConfig):
        path, z = simulate_hmm(config)
        io_cli.write_track(path.points, out / "track.csv")
        io_cli._write_csv(out / "true_z.csv", ["step", "state"],
                          ([str(i + 1), str(int(v) + 1)] for i, v in enumerate(z)))
    else:
        path = simulate_wc_crw(config)
        io_cli.write_track(path.points, out / "track.csv")
    manifest = [
        f"schema_version = {io_cli.SCHEMA_VERSION}",
        "kind = simulation",
        f"config_sha256 = {io_cli.sha256_text(text)}",
        f"s0 = {io_cli._f(path.s0[0])},{io_cli._f(path.s0[1])}",
        f"file_track = {io_cli._sha256_file(out / 'track.csv')}",
    ]
    (out / "manifest.txt").write_text("\n".join(manifest) + "\n")
    (out / "config.txt").write_text(text)
    return 0


def cmd_fit(args) -> int:
    text = FsPath(args.config).read_text()
    run = io_cli.parse_run_config(text)
    if args.variant:
        run = io_cli.RunConfig(prior=run.prior.with_variant(args.variant),
                               schedule=run.schedule, center_scale=run.center_scale,
                               variant=args.variant)
    track = io_cli.load_track(args.data)
    path, transform = io_cli.preprocess(track, center_scale=run.center_scale)
    draws = run_mcmc(path, run.prior, run.schedule)
    io_cli.write_draws(draws, args.out, config_text=text)
    input_sha = io_cli._sha256_file(FsPath(args.data))
    io_cli.write_path(path, args.out, transform=transform, input_sha=input_sha)
    # full reproduction recipe: the exact config text plus the variant flag
    (FsPath(args.out) / "config.txt").write_text(text)
    if args.variant:
        (FsPath(args.out) / "config.txt").open("a").write(f"# variant override: {args.variant}\n")
    return 0


def cmd_summarize(args) -> int:
    draws = io_cli.read_draws(args.draws)
    path, transform = io_cli.read_path(args.draws)
    summary = summarize(draws)
    scores = {"dic5": dic5(draws, path), "icl": icl(draws, path)}
    io_cli.write_summary_outputs(summary, draws, path, args.out, scores=scores)
    manifest = [
        f"schema_version = {io_cli.SCHEMA_VERSION}",
        "kind = summary",
        f"draws_manifest_sha256 = {io_cli._sha256_file(FsPath(args.draws) / 'manifest.txt')}",
        f"seed = {draws.seed}",
    ]
    (FsPath(args.out) / "summary_manifest.txt").write_text("\n".join(manifest) + "\n")
    return 0


def cmd_subsample(args) -> int:
    track = io_cli.load_track(args.data)
    if track.missing.any():
        raise DataError("subsampling expects a complete track")
    pts = np.column_stack([track.x, track.y])
    if args.d < 1:
        raise ConfigError("--d must be at least 1")
    # mirror the first displacement so the kept path has a usable initial bearing
    s0 = pts[0] - (pts[1] - pts[0])
    full = Path(points=pts, s0=s0, timestamps=track.times)
    sub = subsample_path(full, args.d)
    io_cli.write_track(sub.points, args.out, times=sub.timestamps)
    if args.hist_out:
        io_cli.write_angle_histogram(sub, args.hist_out)
    manifest = [
        f"schema_version = {io_cli.SCHEMA_VERSION}",
        "kind = subsample",
        f"input_sha256 = {io_cli._sha256_file(FsPath(args.data))}",
        f"d = {args.d}",
        f"file_track = {io_cli._sha256_file(FsPath(args.out))}",
    ]
    (FsPath(args.out).parent / (FsPath(args.out).stem + "_manifest.txt")).write_text(
        "\n".join(manifest) + "\n")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {"simulate": cmd_simulate, "fit": cmd_fit,
                "summarize": cmd_summarize, "subsample": cmd_subsample}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"stap: config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"stap: data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"stap: numeric failure: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"stap: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
