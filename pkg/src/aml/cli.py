"""Command line entry point: ``aml run | validate | presets``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import __version__
from .errors import AMLError
from .scenario import (ScenarioError, canonical_json, emit_report, exit_code, parse_scenario,
                       preset_document, preset_names, run_pipeline)

EXIT_OK, EXIT_ERROR, EXIT_WITNESS = 0, 1, 2


def _load(spec: str):
    """A scenario path, or ``preset:<name>``."""
    if spec.startswith("preset:"):
        return parse_scenario(preset_document(spec[len("preset:"):]))
    return parse_scenario(spec)


def _cmd_run(args) -> int:
    cfg = _load(args.scenario)
    search = cfg.search
    if args.seed is not None:
        search = replace(search, seed=args.seed)
    if args.trials is not None:
        search = replace(search, trials=args.trials)
    if args.domain is not None:
        search = replace(search, domain=args.domain)
    tol = cfg.tolerances if args.tol_markov is None else replace(cfg.tolerances, markov_gap=args.tol_markov)
    cfg = replace(cfg, search=search, tolerances=tol)
    report = run_pipeline(cfg)
    text = emit_report(report, args.out, timing=args.timing)
    if args.out is None:
        sys.stdout.write(text)
    else:
        s = report.search
        print(f"{cfg.name}: markov={report.markov['markov']} gap={report.markov['gap']:.6g} "
              f"assignment={report.assignment['verdict']} witness={'yes' if s['witness_found'] else 'no'}",
              file=sys.stderr)
    return exit_code(report)


def _cmd_validate(args) -> int:
    cfg = _load(args.scenario)
    print(f"ok: {cfg.name} ({cfg.kind}, d_S={cfg.d_S}, d_E={cfg.d_E})")
    return EXIT_OK


def _cmd_presets(args) -> int:
    if args.action == "list":
        for name in preset_names():
            doc = preset_document(name)
            print(f"{name:24s} {doc['kind']:16s} {doc.get('description', '')}")
    else:
        if not args.name:
            raise ScenarioError("", "presets show needs a preset name")
        sys.stdout.write(json.dumps(preset_document(args.name), indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aml", description="Assignment maps, Markov reference states and reduced dynamics.")
    p.add_argument("--version", action="version", version=f"aml {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the full analysis on a scenario")
    run.add_argument("--scenario", required=True, help="scenario JSON file, or preset:<name>")
    run.add_argument("--seed", type=int, help="override the search seed")
    run.add_argument("--trials", type=int, help="override the number of search trials")
    run.add_argument("--tol-markov", type=float, help="override the Markov gap tolerance")
    run.add_argument("--out", help="write the report here instead of stdout")
    run.add_argument("--domain", choices=["vs", "full"], help="search domain")
    run.add_argument("--timing", action="store_true", help="include wall-clock timings (breaks byte-identical reruns)")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", help="parse and validate a scenario")
    val.add_argument("--scenario", required=True)
    val.set_defaults(func=_cmd_validate)

    pre = sub.add_parser("presets", help="list or show bundled scenarios")
    pre.add_argument("action", choices=["list", "show"])
    pre.add_argument("name", nargs="?")
    pre.set_defaults(func=_cmd_presets)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; that code is reserved for witnesses
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    try:
        return args.func(args)
    except (AMLError, KeyError, OSError, ValueError) as exc:
        print(f"aml: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
