"""Command-line entry point: ``deltarad <stage> --config cfg.json``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .pipeline import ORDER, StageError, run

EXIT_CONFIG = 2
EXIT_STAGE = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="deltarad", description="Delta-radiomics pipeline for SRS follow-up decisions.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ORDER + ["all"]:
        s = sub.add_parser(name, help=f"run the {name} stage" if name != "all" else "run every stage in order")
        s.add_argument("--config", required=True, help="pipeline JSON config")
        s.add_argument("--log", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    d = sub.add_parser("demo", help="write a synthetic cohort and its config.json")
    d.add_argument("--out", required=True)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--patients", type=int, default=24)
    d.add_argument("--log", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log), format="%(levelname)s %(message)s", stream=sys.stderr)
    log = logging.getLogger("deltarad")
    if args.command == "demo":
        from .demo import write_demo_cohort

        try:
            write_demo_cohort(args.out, seed=args.seed, n_patients=args.patients)
        except ValueError as exc:
            log.error("%s", exc)
            return EXIT_CONFIG
        log.info("demo cohort written to %s (config: %s/config.json)", args.out, args.out)
        return 0
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    log.info("%s", cfg.stamp)
    try:
        run(args.command, cfg)
    except StageError as exc:
        log.error("%s", exc)
        return EXIT_STAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
