"""Command-line interface.

Exit codes: 0 success, 2 invalid arguments, 3 numerical or measurement
failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import io as tio
from .core import BeamformerParams
from .errors import InvalidArgument, MeasurementFailure, NumericalFailure
from .metrics import cyst_report, point_report
from .pipeline import (
    COMPARE_COLUMNS,
    FAMILIES,
    METRIC_FIELDS,
    PHANTOM_CHOICES,
    RunConfig,
    Simulation,
    SweepPlan,
    make_phantom,
    run_single,
    run_sweep,
    simulate,
    simulate_all,
    standard_params,
)
from .simulator import CYST_DEPTHS, CYST_LATERAL, CYST_RADIUS, NOISELESS, POINT_DEPTHS

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
FAMILY_CHOICES = FAMILIES + ("all",)

log = logging.getLogger("thimv")


def _snr(text: str):
    if text == NOISELESS:
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or {NOISELESS!r}") from None


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError("seed must be an integer") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _shared(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run options")
    g.add_argument("--config", type=Path, help="JSON run configuration (keys as in config.resolved.json)")
    g.add_argument("--seed", type=_u64, help="random seed (unsigned 64-bit)")
    g.add_argument("--out", help="output directory")
    g.add_argument("--threads", type=int, default=1, help="worker threads for sweep cases")
    g.add_argument("--dynamic-range", type=float, dest="dynamic_range", help="display dynamic range in dB")
    g.add_argument("--no-bandpass", action="store_true", help="skip the 2 f0 band selection")
    g.add_argument("--snr", type=_snr, help=f"channel SNR in dB or {NOISELESS!r}")
    g.add_argument("--phantom", choices=PHANTOM_CHOICES, help="phantom(s) to simulate")
    g.add_argument("-v", "--verbose", action="store_true")


def _params_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("beamformer")
    g.add_argument("--method", choices=("DAS", "MV", "EIBMV"), default="EIBMV")
    g.add_argument("--window", choices=("rectangular", "hanning", "hamming"), default="rectangular")
    g.add_argument("-K", type=int, help="temporal half-window in samples")
    g.add_argument("-L", type=int, help="subarray length")
    g.add_argument("--loading", type=float, help="diagonal loading factor")
    g.add_argument("--subspace", type=float, help="signal subspace eigenvalue ratio")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thimv", description="Tissue harmonic imaging with adaptive beamforming.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize pulse-inversion RF data")
    _shared(p)

    p = sub.add_parser("beamform", help="form images and measure them")
    _shared(p)
    _params_args(p)
    p.add_argument("--rf-dir", type=Path, help="read harm_*.rf frames from <dir>/<phantom> instead of simulating")
    p.add_argument("--no-rf", action="store_true", help="do not write simulated RF files")

    p = sub.add_parser("metrics", help="measure a dB sidecar")
    _shared(p)
    p.add_argument("dbmap", type=Path)
    p.add_argument("--kind", choices=("points", "cysts"), required=True)

    p = sub.add_parser("sweep", help="run the K/L/loading/subspace parameter sweep")
    _shared(p)
    p.add_argument("--family", choices=FAMILY_CHOICES, default="all")
    p.add_argument("--no-rf", action="store_true", help="do not write simulated RF files")
    p.add_argument("--no-baselines", action="store_true", help="skip DAS, MV and best-EIBMV runs")

    p = sub.add_parser("render", help="render a dB sidecar as a PGM image")
    _shared(p)
    p.add_argument("dbmap", type=Path)
    p.add_argument("-o", "--output", type=Path, help="PGM path (default: next to the sidecar)")

    p = sub.add_parser("compare", help="contrast gains of the best setting over the baselines")
    _shared(p)
    p.add_argument("baselines", type=Path, help="baselines.csv written by sweep")
    p.add_argument("--sweep-csv", type=Path, help="sweep.csv supplying the standard row if needed")
    p.add_argument("-o", "--output", type=Path, help="summary CSV path (default: stdout)")
    return parser


def load_config(args) -> RunConfig:
    data = tio.read_json(args.config) if args.config else {}
    if not isinstance(data, dict):
        raise InvalidArgument("config file must hold a JSON object")
    overrides = {
        "seed": args.seed,
        "out": args.out,
        "dynamic_range_db": args.dynamic_range,
        "snr_db": args.snr,
        "phantom": args.phantom,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.no_bandpass:
        data["bandpass"] = False
    return RunConfig.from_dict(data)


def _params(args, config: RunConfig) -> BeamformerParams:
    std = standard_params(config)
    pick = lambda v, d: d if v is None else v  # noqa: E731
    return BeamformerParams(
        method=args.method,
        window=args.window,
        K=pick(args.K, std.K),
        L=pick(args.L, std.L),
        delta_load=pick(args.loading, std.delta_load),
        delta_sub=pick(args.subspace, std.delta_sub),
    )


def _print_csv(columns, rows) -> None:
    print(",".join(columns))
    for r in rows:
        print(",".join(tio.format_float(v) if isinstance(v, float) else str(v) for v in r))


def _cmd_simulate(args, config):
    out = Path(config.out)
    tio.write_json(out / "config.resolved.json", config.to_dict())
    for kind in config.phantoms:
        simulate(config, kind, out / "sim" / kind)
        print(f"wrote {out / 'sim' / kind}")


def _load_sims(rf_dir: Path, config: RunConfig) -> dict:
    sims = {}
    for kind in config.phantoms:
        files = sorted((rf_dir / kind).glob("harm_*.rf"))
        if len(files) != config.n_scanlines:
            raise InvalidArgument(f"{rf_dir / kind}: expected {config.n_scanlines} harm_*.rf files, found {len(files)}")
        frames = tuple(tio.read_rf(f)[0] for f in files)
        sims[kind] = Simulation(make_phantom(config, kind), frames)
    return sims


def _cmd_beamform(args, config):
    params = _params(args, config)
    sims = _load_sims(args.rf_dir, config) if args.rf_dir else simulate_all(config, write_rf=not args.no_rf)
    res = run_single(config, params, sims=sims)
    rep = res.report
    _print_csv(("case",) + METRIC_FIELDS, [[res.directory.name, rep.mean_fwhm_mm, rep.mean_cr_db, rep.mean_cnr, rep.mean_radius_err_mm]])


def _cmd_metrics(args, config):
    image = tio.read_dbmap(args.dbmap)
    if args.kind == "points":
        rep = point_report(image, POINT_DEPTHS)
        _print_csv(("z_mm", "fwhm_mm"), [[z * 1e3, w] for z, w in zip(POINT_DEPTHS, rep.fwhm_mm)])
    else:
        centers = [(CYST_LATERAL, z) for z in CYST_DEPTHS]
        rep = cyst_report(image, centers, CYST_RADIUS)
        rows = [[c[1] * 1e3, a, b, r, e] for c, a, b, r, e in zip(centers, rep.cr_db, rep.cnr, rep.radius_mm, rep.radius_err_mm)]
        _print_csv(("z_mm", "cr_db", "cnr", "radius_mm", "radius_err_mm"), rows)


def _cmd_sweep(args, config):
    families = FAMILIES if args.family == "all" else (args.family,)
    plan = SweepPlan.default(config, families)
    res = run_sweep(config, plan, threads=args.threads, write_rf=not args.no_rf, baselines=not args.no_baselines)
    print(f"wrote {res.csv_path} ({len(res.rows)} rows, {res.n_executions} unique runs, {res.seconds:.1f} s)")


def _cmd_render(args, config):
    image = tio.read_dbmap(args.dbmap)
    dr = args.dynamic_range if args.dynamic_range is not None else image.dynamic_range_db
    target = args.output or args.dbmap.with_suffix(".pgm")
    tio.write_bytes(target, tio.render_image(image, dr))
    print(f"wrote {target}")


def _cmd_compare(args, config):
    from .pipeline import compare_report

    sweep_rows = tio.read_csv(args.sweep_csv) if args.sweep_csv else ()
    rows = compare_report(tio.read_csv(args.baselines), sweep_rows)
    if args.output:
        tio.write_csv(args.output, COMPARE_COLUMNS, rows)
        print(f"wrote {args.output}")
    else:
        _print_csv(COMPARE_COLUMNS, rows)


COMMANDS = {
    "simulate": _cmd_simulate,
    "beamform": _cmd_beamform,
    "metrics": _cmd_metrics,
    "sweep": _cmd_sweep,
    "render": _cmd_render,
    "compare": _cmd_compare,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise InvalidArgument("--threads must be at least 1")
        config = load_config(args)
        COMMANDS[args.command](args, config)
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalFailure, MeasurementFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
