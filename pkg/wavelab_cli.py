#!/usr/bin/env python3
"""
wavelab command line
Runs one experiment kind from a config file or the built-in defaults and
exits 0 on PASS, 1 on a FAIL verdict and 2 on error
"""

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from dotenv import load_dotenv

from utils.logger import setup_logging
from wavelab.config import KINDS, ExperimentConfig, build_config
from wavelab.errors import ConfigError, LabError
from wavelab.experiments import EXIT_ERROR, run_directory, run_experiment

load_dotenv()

logger = logging.getLogger(__name__)

DESCRIPTIONS = {
    "hodograph": "solve the dispersionless hodograph equations along x",
    "critical": "locate and classify the first gradient catastrophe",
    "dop-check": "certify pairwise commutativity of D-operator images",
    "fpu-test": "integrability test for an FPU potential",
    "painleve": "P_I^2 profiles or the tritronquee solution",
    "simulate": "integrate a dispersive model and save snapshots",
    "universality": "epsilon ladder against the Painleve prediction",
    "semiham": "semi-Hamiltonian and normal-form checks for a diagonal system",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='INI config file (defaults for the kind when omitted)')
    common.add_argument('--out', help='output root (default: WAVELAB_OUT or ./results)')
    common.add_argument('--seed', type=int, help='random seed')
    common.add_argument('--jobs', type=int, help='worker processes (default: WAVELAB_JOBS or 1)')
    common.add_argument('--tol', type=float, help='verdict tolerance')
    common.add_argument('--log-level', default=os.getenv("WAVELAB_LOG_LEVEL", "INFO"),
                        help='logging level (default: WAVELAB_LOG_LEVEL or INFO)')

    parser = argparse.ArgumentParser(description='Numerical lab for Hamiltonian perturbations of wave equations')
    subparsers = parser.add_subparsers(dest='kind', required=True)
    for kind in KINDS:
        subparsers.add_parser(kind, parents=[common], help=DESCRIPTIONS[kind])
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file (or defaults), then command-line flags on top."""
    overrides = {"out_dir": args.out, "seed": args.seed, "tol": args.tol, "jobs": args.jobs}
    if not args.config:
        return build_config(args.kind, **overrides)
    config = ExperimentConfig.load(args.config)
    if config.kind != args.kind:
        raise ConfigError(f"{args.config} describes a '{config.kind}' experiment, not '{args.kind}'",
                          fields={"experiment.kind": config.kind})
    return config.with_overrides(**overrides)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    try:
        config = load_config(args)
    except LabError as e:
        setup_logging(args.log_level)
        logger.error(f"❌ {e}")
        return EXIT_ERROR

    setup_logging(args.log_level, os.path.join(run_directory(config), "wavelab.log"))
    try:
        result = run_experiment(config)
    except Exception as e:
        logger.error(f"❌ Unexpected error: {e}")
        return EXIT_ERROR

    logger.info("=" * 60)
    logger.info(f"📊 {config.kind.upper()} REPORT")
    logger.info("=" * 60)
    if result.error is not None:
        logger.info(f"❌ error {result.error['code']}: {result.error['message']}")
    else:
        for name, ok in result.verdict.get("checks", {}).items():
            logger.info(f"{'✅' if ok else '❌'} {name}")
        logger.info(f"📁 results in {result.run_dir}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
