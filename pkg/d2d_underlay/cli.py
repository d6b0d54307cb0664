# SPDX-License-Identifier: LGPL-3.0-only
# Copyright (C) 2024 The d2d_underlay developers

"""Command-line experiment driver.
"""

import argparse
import logging
import os
import sys

from .config import NetworkConfig, load_config_file
from .harness import SCENARIOS, get_scenario, run_scenario, summary_table, \
    write_outputs
from .powerctl import ORACLES, FeasibilityIterationLimit
from .se import Processing

__all__ = ["main"]

logger = logging.getLogger(__name__)

# Command-line flag destinations and the configuration fields they set
_FLAG_FIELDS = {
    "cells": "num_cells",
    "users_per_cell": "users_per_cell",
    "d2d_pairs": "num_d2d_pairs",
    "d2d_pilots": "num_d2d_pilots",
    "antennas": "antennas_per_bs",
    "seed": "rng_seed",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="d2d-underlay",
        description="Spectral efficiency of D2D pairs underlaid in a "
                    "multi-cell massive MIMO uplink.")
    parser.add_argument("--cells", type=int, help="number of cells B")
    parser.add_argument("--users-per-cell", type=int,
                        help="cellular users per cell K")
    parser.add_argument("--d2d-pairs", type=int, help="number of D2D pairs L")
    parser.add_argument("--d2d-pilots", type=int,
                        help="number of D2D pilots N")
    parser.add_argument("--antennas", type=int,
                        help="antennas per base station M")
    parser.add_argument("--processing", choices=[p.value for p in Processing],
                        default=Processing.ZF.value,
                        help="base station processing (default: zf)")
    parser.add_argument("--scenario", choices=sorted(SCENARIOS),
                        default="maxmin-d2d",
                        help="scenario to run (default: maxmin-d2d)")
    parser.add_argument("--compare", nargs="+", choices=sorted(SCENARIOS),
                        metavar="SCENARIO",
                        help="run several scenarios and print a summary")
    parser.add_argument("--realizations", type=int, default=500,
                        help="number of network realizations (default: 500)")
    parser.add_argument("--mc-trials", type=int, default=10_000,
                        help="Monte-Carlo draws per D2D pair "
                             "(default: 10000)")
    parser.add_argument("--seed", type=int,
                        help="experiment seed (default: rng_seed of the "
                             "configuration, 0)")
    parser.add_argument("--out", default="results",
                        help="output directory (default: results)")
    parser.add_argument("--config",
                        help="file of 'key = value' configuration overrides")
    parser.add_argument("--oracle", choices=ORACLES, default="iteration",
                        help="power-control feasibility oracle")
    parser.add_argument("--workers", type=int, default=1,
                        help="worker processes (default: 1)")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for progress, -vv for debugging output")
    return parser


def resolve_config(args):
    """Configuration from the defaults, the file, then the flags.
    """

    overrides = {}
    if args.config is not None:
        overrides.update(load_config_file(args.config))
    for flag, field in _FLAG_FIELDS.items():
        value = getattr(args, flag)
        if value is not None:
            overrides[field] = value
    return NetworkConfig().with_overrides(**overrides)


def main(argv=None):
    """Run the experiment driver.

    Returns
    -------
    int
        Exit status. 1 for configuration or I/O errors and 2 for power
        control failures.
    """

    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose,
                                                      logging.DEBUG)
    logging.basicConfig(level=level,
                        format="%(asctime)s - %(levelname)s - %(message)s")

    processing = Processing(args.processing)
    names = args.compare or [args.scenario]
    try:
        config = resolve_config(args)
        results = []
        for name in names:
            result = run_scenario(
                get_scenario(name, processing), args.realizations,
                config.rng_seed, config=config, mc_trials=args.mc_trials,
                workers=args.workers, oracle=args.oracle)
            out_dir = args.out if len(names) == 1 \
                else os.path.join(args.out, name)
            for path in write_outputs(result, out_dir):
                logger.info(f"wrote {path}")
            results.append(result)
    except FeasibilityIterationLimit as err:
        print(f"d2d-underlay: power control failed: {err}", file=sys.stderr)
        return 2
    except ValueError as err:
        print(f"d2d-underlay: error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"d2d-underlay: cannot write {err.filename}: {err.strerror}",
              file=sys.stderr)
        return 1

    sys.stdout.write(summary_table(results))
    return 0
