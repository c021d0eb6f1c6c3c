"""Command-line front end: ``cfswarm {validate,run,sweep,report,overhead,aging}``."""

from __future__ import annotations

import argparse
import itertools
import logging
import sys

import pandas as pd
import yaml

from .engine.arch import LatencyBudget, aging_interval, signalling_overhead
from .engine.config import PRESETS, ConfigError, dump_config, load_config
from .engine.runner import RunError, full_grid, run_scenario, sweep
from .report import ReportError, write_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _config_args(p: argparse.ArgumentParser, positional: bool = False):
    if positional:
        p.add_argument("config_path", nargs="?", metavar="CONFIG", help="scenario YAML file")
    p.add_argument("--config", help="scenario YAML file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="start from a built-in preset")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted config override, e.g. geom.n_node=2 (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfswarm", description="Cell-free MIMO satellite swarm simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("validate", help="check a configuration and print the resolved version")
    _config_args(p, positional=True)

    p = sub.add_parser("run", help="run one scenario")
    _config_args(p, positional=True)
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.add_argument("--jobs", type=int, help="worker processes for drops")

    p = sub.add_parser("sweep", help="run a grid of scenarios")
    _config_args(p, positional=True)
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for scenarios")
    p.add_argument("--vary", action="append", default=[], metavar="KEY=V1,V2",
                   help="sweep a dotted key over comma-separated values (repeatable, Cartesian)")
    p.add_argument("--grid", choices=["full"], help="built-in node-count x channel grid")
    p.add_argument("--no-cache", action="store_true", help="recompute every scenario")

    p = sub.add_parser("report", help="emit plot-ready CSVs and figures from a results directory")
    p.add_argument("results_dir")
    p.add_argument("--out", help="report directory (default: RESULTS_DIR/report)")
    p.add_argument("--drop", type=int, help="drop shown in per-user maps (default: first)")
    p.add_argument("--no-figures", action="store_true", help="write CSVs only")

    p = sub.add_parser("overhead", help="per-user signalling overhead, CSI vs location")
    p.add_argument("--nf", type=int, required=True, help="antenna elements per node")

    p = sub.add_parser("aging", help="aging interval for on-ground and on-board computation")
    for name in ("user", "feeder-dl", "feeder-ul", "p", "rout", "ad"):
        p.add_argument(f"--tau-{name}", type=float, help=f"tau_{name.replace('-', '_')} [ms]")
    p.add_argument("--arch", choices=["OGC", "OBC", "both"], default="both")
    return parser


def _parse_value(text: str):
    return yaml.safe_load(text)


def _pairs(items, flag: str) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(item, f"{flag} expects KEY=VALUE")
        key, value = item.split("=", 1)
        out[key.strip()] = value
    return out


def _load(args):
    path = getattr(args, "config_path", None) or args.config
    overrides = {k: _parse_value(v) for k, v in _pairs(args.set, "--set").items()}
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        return load_config(path, args.preset, overrides)
    except FileNotFoundError as exc:
        raise ConfigError("config", f"file not found: {exc.filename}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"unparseable YAML: {exc}") from exc


def summary_table(summary: pd.DataFrame) -> str:
    """Algorithm x normalisation rows, one 'SE / outage%' column per EIRP."""
    if summary.empty:
        return "(no results)"
    df = summary.copy()
    df["cell"] = [f"{se:6.3f} / {out:5.1f}%" for se, out in zip(df.avg_se_bps_hz, df.outage_pct)]
    table = df.pivot_table(index=["algorithm", "normalization"], columns="eirp_dbw_mhz", values="cell",
                           aggfunc="first", sort=True)
    table.columns = [f"{c:g} dBW/MHz" for c in table.columns]
    return "avg SE [bit/s/Hz] / outage\n" + table.to_string()


def cmd_validate(args) -> int:
    cfg = _load(args)
    sys.stdout.write(dump_config(cfg))
    print(f"# ok, digest {cfg.digest()}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args)
    result = run_scenario(cfg, output_dir=args.out, jobs=args.jobs)
    print(summary_table(result.summary))
    print(f"results written to {result.output_dir}")
    return EXIT_OK


def _vary_configs(base, vary: dict) -> list:
    keys = list(vary)
    values = [[_parse_value(v) for v in vary[k].split(",")] for k in keys]
    out = []
    for combo in itertools.product(*values):
        tag = "-".join(f"{k.split('.')[-1]}={v}" for k, v in zip(keys, combo))
        out.append(base.replace(scenario_id=f"{base.scenario_id}-{tag}", **dict(zip(keys, combo))))
    return out


def cmd_sweep(args) -> int:
    base = _load(args)
    configs = full_grid(base) if args.grid == "full" else [base]
    vary = _pairs(args.vary, "--vary")
    if vary:
        configs = [c for cfg in configs for c in _vary_configs(cfg, vary)]
    result = sweep(configs, args.out, jobs=args.jobs, cache=not args.no_cache)
    print(summary_table(result.table))
    print(f"{len(result.computed)} computed, {len(result.cached)} cached, {len(result.failures)} failed")
    for sid, err in result.failures.items():
        print(f"FAILED {sid}: {err}", file=sys.stderr)
    return EXIT_RUNTIME if result.failures else EXIT_OK


def cmd_report(args) -> int:
    paths = write_report(args.results_dir, args.out, args.drop, figures=not args.no_figures)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


def cmd_overhead(args) -> int:
    csi = signalling_overhead(args.nf, "CSI")
    loc = signalling_overhead(args.nf, "Location")
    print(f"CSI: {csi} bits per user")
    print(f"Location: {loc} bits per user")
    print(f"ratio: {csi / loc:g}")
    return EXIT_OK


def cmd_aging(args) -> int:
    given = {f"tau_{n}_ms": getattr(args, f"tau_{n}") for n in ("user", "feeder_dl", "feeder_ul", "p", "rout", "ad")}
    if all(v is None for v in given.values()):
        budget = LatencyBudget.illustrative_ogc()
        print("using the illustrative on-ground budget (not a measured decomposition)")
    else:
        budget = LatencyBudget(**{k: (v or 0.0) for k, v in given.items()})
    archs = ("OGC", "OBC") if args.arch == "both" else (args.arch,)
    for arch in archs:
        print(f"{arch}: {aging_interval(budget, arch):g} ms")
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "run": cmd_run, "sweep": cmd_sweep, "report": cmd_report,
            "overhead": cmd_overhead, "aging": cmd_aging}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RunError, ReportError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
