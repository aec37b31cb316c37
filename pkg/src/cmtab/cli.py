"""Command line entry point.

    cmtab run <config>            run a sweep, write per-run CSV/JSON + summary
    cmtab summarize <log-dir>     recompute strategy means from written logs
    cmtab oracle <config>         print the optimal total reward of every team
    cmtab validate-demos <file>   check a demonstration file

Exit codes: 0 success, 1 config/input error, 2 runtime abort (including any
run that aborted inside a sweep).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from cmtab.harness.config import ConfigError, ExperimentConfig
from cmtab.harness.demos import DemonstrationError, ingest_demonstrations
from cmtab.harness.experiment import prepare, run_experiment, summarize_dir

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("cmtab")


def _load(path) -> ExperimentConfig:
    try:
        return ExperimentConfig.load(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def cmd_run(args) -> int:
    cfg = _load(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    result = run_experiment(cfg, output_dir=args.output)
    for kind, s in result.summary["strategies"].items():
        if s["runs"]:
            print(f"{kind:6s} runs={s['runs']:3d} failed={s['failed']} "
                  f"bur={s['mean_final_bur_normalized']:.4f} cmr={s['mean_final_cmr']:.2f}")
        else:
            print(f"{kind:6s} runs=0 failed={s['failed']}")
    print(f"logs: {result.summary.get('output_dir')}")
    failed = [r for r in result.runs if not r.ok]
    for r in failed:
        print(f"aborted {r.name}: {r.error}", file=sys.stderr)
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_summarize(args) -> int:
    try:
        summary = summarize_dir(args.log_dir)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    if args.json:
        print(json.dumps(summary, indent=1))
        return EXIT_OK
    for kind, s in summary.items():
        b, c = s["mean_final_bur_normalized"], s["mean_final_cmr"]
        print(f"{kind:6s} runs={s['runs']:3d} "
              f"bur={'nan' if b is None else f'{b:.4f}'} cmr={'nan' if c is None else f'{c:.2f}'}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _load(args.config)
    _, teams, oracles, ranks = prepare(cfg)
    for k, (team, res) in enumerate(zip(teams, oracles)):
        flag = " (approximate)" if res.approximate else ""
        print(f"team{ranks[k]} counts={team.counts.tolist()} r*={res.value:.6f}{flag}")
    return EXIT_OK


def cmd_validate_demos(args) -> int:
    try:
        demos = ingest_demonstrations(args.file, args.tasks)
    except OSError as exc:
        print(f"cannot read {args.file}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DemonstrationError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"ok: {len(demos)} demonstration(s)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cmtab", description="Concurrent multi-task allocation bandits")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment sweep")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="override the output directory")
    r.add_argument("-j", "--workers", type=int, help="override the worker count")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("summarize", help="summarize a log directory")
    s.add_argument("log_dir")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_summarize)

    o = sub.add_parser("oracle", help="print r*_total per team")
    o.add_argument("config")
    o.set_defaults(func=cmd_oracle)

    v = sub.add_parser("validate-demos", help="check a demonstration file")
    v.add_argument("file")
    v.add_argument("--tasks", type=int, default=None, help="expected number of tasks")
    v.set_defaults(func=cmd_validate_demos)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DemonstrationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        log.exception("aborted")
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
