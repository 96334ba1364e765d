"""``edgestat`` command line."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from edgestat.experiments import ConfigError, ExperimentConfig, cache_audit, cache_root, run_experiment, sweep

CONFIG_SUFFIXES = (".yaml", ".yml")


def _cmd_run(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config).with_overrides(args.seed, args.trials, args.out)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        rec = run_experiment(cfg, use_cache=not args.no_cache)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if not cfg.out_dir:
        sys.stdout.write(rec.to_json())
    else:
        print(f"wrote {Path(cfg.out_dir).resolve()}{' (cached)' if rec.from_cache else ''}")
    return 0


def _cmd_sweep(args) -> int:
    directory = Path(args.directory)
    paths = sorted(p for p in directory.iterdir() if p.suffix in CONFIG_SUFFIXES)
    configs = []
    for p in paths:
        try:
            configs.append(ExperimentConfig.load(p).with_overrides(out_dir=args.out))
        except Exception:
            configs.append(p)  # sweep() records the load error
    records = sweep(configs, parallelism=args.parallelism, use_cache=not args.no_cache)
    failed = 0
    for p, rec in zip(paths, records):
        status = "error: " + rec.error if rec.error else ("cached" if rec.from_cache else "ok")
        failed += rec.error is not None
        print(f"{p.name}\t{status}")
    return 1 if failed else 0


def _cmd_cache(args) -> int:
    if args.action == "audit":
        result = cache_audit(args.fraction, args.seed)
        print(json.dumps(result, indent=2, sort_keys=True))
        return 1 if result["mismatches"] else 0
    print(cache_root())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="edgestat", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("config")
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--out", help="report directory (overrides output.dir)")
    run.add_argument("--no-cache", action="store_true")
    run.set_defaults(func=_cmd_run)

    sw = sub.add_parser("sweep", help="run every config in a directory")
    sw.add_argument("directory")
    sw.add_argument("--parallelism", type=int, default=1)
    sw.add_argument("--out")
    sw.add_argument("--no-cache", action="store_true")
    sw.set_defaults(func=_cmd_sweep)

    cache = sub.add_parser("cache", help="cache maintenance")
    cache.add_argument("action", choices=["audit", "path"])
    cache.add_argument("--fraction", type=float, default=0.1)
    cache.add_argument("--seed", type=int, default=0)
    cache.set_defaults(func=_cmd_cache)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
