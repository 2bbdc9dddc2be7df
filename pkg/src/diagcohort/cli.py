"""Command-line entry point: ``diagcohort --config run.yaml <command>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, load_config
from .corpus import SchemaError
from .evaluation import GoldError
from .patterns import PatternError

COMMANDS = ("ingest", "detect", "profile", "evaluate", "report", "export", "synth")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diagcohort", description=__doc__)
    parser.add_argument("--config", type=Path, help="flat YAML run configuration")
    parser.add_argument("--threads", type=int, default=1, help="worker processes for detect/profile")
    parser.add_argument("--seed", type=int, default=0, help="seed for synthetic fixtures")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", help="validate posts/accounts into the corpus store")
    sub.add_parser("detect", help="find self-reported diagnoses, build the cohort")
    sub.add_parser("profile", help="estimate age, gender and country per cohort user")
    sub.add_parser("evaluate", help="score methods against gold annotations")
    sub.add_parser("report", help="write cohort tables")
    sub.add_parser("export", help="write a pseudonymized copy of the corpus")
    synth = sub.add_parser("synth", help="write a synthetic demo corpus and config")
    synth.add_argument("directory", type=Path)
    synth.add_argument("--users", type=int, default=500)
    return parser


def _run(args: argparse.Namespace) -> int:
    if args.command == "synth":
        from .synthetic import write_demo

        config_path = write_demo(args.directory, n_users=args.users, seed=args.seed)
        print(config_path)
        return pipeline.EXIT_OK
    if args.config is None:
        raise ConfigError("--config is required")
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    cfg = load_config(args.config)
    if args.command == "ingest":
        result = pipeline.cmd_ingest(cfg)
        print(json.dumps({k: result[k] for k in ("n_posts", "n_skipped", "n_accounts")}, sort_keys=True))
    elif args.command == "detect":
        result = pipeline.cmd_detect(cfg, args.threads)
        print(json.dumps(result, sort_keys=True))
    elif args.command == "profile":
        print(json.dumps(pipeline.cmd_profile(cfg, args.threads), sort_keys=True))
    elif args.command == "evaluate":
        results = pipeline.cmd_evaluate(cfg)
        if not results:
            logging.warning("nothing to evaluate: empty cohort")
            return pipeline.EXIT_EMPTY
    elif args.command == "report":
        bundle = pipeline.cmd_report(cfg)
        if dict(bundle.summary)["n_users"] == 0:
            logging.warning("empty cohort: report tables have no rows")
            return pipeline.EXIT_EMPTY
    elif args.command == "export":
        print(json.dumps(pipeline.cmd_export(cfg), sort_keys=True))
    return pipeline.EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return pipeline.EXIT_CONFIG
    except (pipeline.DataError, SchemaError, PatternError, GoldError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return pipeline.EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
