"""Command-line entry point: ``simulate``, ``track``, ``sweep-consensus``, ``plot``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..scenario import load_scenario
from . import experiment as ex
from .config import PROFILES, ConfigError, TrackerSpec, load_config

log = logging.getLogger("dvbtrack")


def _parse_tracker(text: str) -> TrackerSpec:
    mode, _, iters = text.partition(":")
    try:
        return TrackerSpec(mode=mode, consensus_iters=int(iters)) if iters else TrackerSpec(mode=mode)
    except Exception as exc:
        raise argparse.ArgumentTypeError(f"bad tracker {text!r}; use MODE or MODE:ITERS ({exc})") from None


def _parse_iters(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad iteration list {text!r}") from None
    if any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("iteration counts must be >= 1")
    return values


def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--config", type=Path, help="experiment config JSON")
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.add_argument("--seed", type=int, help="root seed (overrides the config)")
    p.add_argument("--out", type=Path, required=out_required, help="output directory")
    p.add_argument("--threads", type=int, default=1, help="parallel Monte-Carlo workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dvbtrack", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate scenario JSON files, one per Monte-Carlo run")
    _common(p)

    p = sub.add_parser("track", help="run trackers on scenarios and write results.csv")
    _common(p)
    p.add_argument("--scenarios", type=Path, help="scenario directory (default OUT/scenarios)")
    p.add_argument("--tracker", type=_parse_tracker, action="append",
                   help="MODE or MODE:ITERS; repeatable, replaces the config's tracker list")
    p.add_argument("--save-tracks", action="store_true", help="write per-run track history JSON")
    p.add_argument("--trace-consensus", type=Path, help="CSV of per-round consensus disagreement")

    p = sub.add_parser("sweep-consensus", help="grand-mean OSPA vs consensus iterations")
    _common(p)
    p.add_argument("--scenarios", type=Path, help="scenario directory (default OUT/scenarios)")
    p.add_argument("--iters", type=_parse_iters, help="comma-separated counts, e.g. 1,2,5,10,20")
    p.add_argument("--i-max", type=int, default=5)

    p = sub.add_parser("plot", help="render SVG figures from result CSVs and a scenario")
    p.add_argument("--results", type=Path, action="append", default=[], help="results CSV (repeatable)")
    p.add_argument("--sweep", type=Path, help="sweep CSV")
    p.add_argument("--scenario", type=Path, help="scenario JSON for the scenario and network figures")
    p.add_argument("--out", type=Path, required=True)
    return parser


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.profile, args.seed)
    paths = ex.simulate(cfg, args.out)
    print(f"wrote {len(paths)} scenario files to {args.out / 'scenarios'}")
    return 0


def cmd_track(args) -> int:
    cfg = load_config(args.config, args.profile, args.seed)
    specs = args.tracker if args.tracker is not None else cfg.trackers
    scen_dir = args.scenarios or args.out / "scenarios"
    rows = ex.track(
        ex.scenario_paths(scen_dir),
        specs,
        cfg.ospa.build(),
        threads=args.threads,
        tracks_dir=args.out / "tracks" if args.save_tracks else None,
        trace_path=args.trace_consensus,
    )
    out = args.out / "results.csv"
    ex.write_results(out, rows)
    for key, value in sorted(ex.grand_means(rows).items()):
        print(f"{key:>20s}  grand-mean OSPA {value:.4f}")
    print(f"wrote {out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.profile, args.seed)
    iters = args.iters if args.iters is not None else cfg.sweep_iters
    scen_dir = args.scenarios or args.out / "scenarios"
    rows = ex.sweep_consensus(ex.scenario_paths(scen_dir), iters, cfg.ospa.build(), args.i_max, args.threads)
    out = args.out / "sweep.csv"
    ex.write_sweep(out, rows)
    for it, g, c in rows:
        print(f"iters={it:4d}  distributed {g:.4f}  centralised {c:.4f}")
    print(f"wrote {out}")
    return 0


def cmd_plot(args) -> int:
    from . import plots

    if not args.results and args.sweep is None and args.scenario is None:
        raise ex.UsageError("nothing to plot; give --results, --sweep and/or --scenario")
    rows = []
    for path in args.results:
        rows.extend(ex.read_results(path))
    sweep = ex.read_sweep(args.sweep) if args.sweep is not None else None
    if args.results and not rows:
        raise ValueError("results CSV contains no rows")
    if sweep is not None and not sweep:
        raise ValueError("sweep CSV contains no rows")
    written = []
    if rows:
        written.append(plots.plot_ospa_time(rows, args.out / "ospa_vs_time.svg"))
    if sweep:
        written.append(plots.plot_ospa_iterations(sweep, args.out / "ospa_vs_iterations.svg"))
    if args.scenario is not None:
        sc = load_scenario(args.scenario)
        written.append(plots.plot_scenario(sc, args.out / "scenario.svg"))
        written.append(plots.plot_network(sc, args.out / "network.svg"))
    for p in written:
        print(f"wrote {p}")
    return 0


COMMANDS = {"simulate": cmd_simulate, "track": cmd_track, "sweep-consensus": cmd_sweep, "plot": cmd_plot}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ex.UsageError) as exc:
        print(f"dvbtrack {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"dvbtrack {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
