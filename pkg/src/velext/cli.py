"""Command line entry point: ``velext run <config> [--override k=v] [--out DIR] [--check]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .scenarios import BUILTIN, ConfigError, load_config, run_scenario


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="velext", description="Level-set transport by velocity extension: batch scenario runner.")
    ap.add_argument("--list-scenarios", action="store_true", help="print the built-in scenario names and exit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command")
    run = sub.add_parser("run", help="run a scenario config file or a built-in scenario name")
    run.add_argument("config")
    run.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE")
    run.add_argument("--out", default=None, help="output directory (default: runs/<name>)")
    run.add_argument("--check", action="store_true", help="exit with status 2 when an acceptance check fails")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.list_scenarios:
        for name in BUILTIN:
            print(name)
        return 0
    if args.command != "run":
        ap.print_usage(sys.stderr)
        return 1
    try:
        cfg = load_config(args.config, args.override)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    res = run_scenario(cfg, args.out or f"runs/{cfg.name}", check=args.check)
    for name, c in res.manifest["checks"].items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name}: {c['value']:.3e} (tol {c['tolerance']:.3e})")
    if res.status == 1:
        print(f"run error: {res.manifest.get('error')}", file=sys.stderr)
    print(f"artifacts in {res.out_dir}")
    return res.status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
