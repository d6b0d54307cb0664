# SPDX-License-Identifier: LGPL-3.0-only
# Copyright (C) 2024 The d2d_underlay developers

"""Monte-Carlo experiments over random network realizations.

A scenario fixes the receive processing, the power policy and configuration
overrides. Running it evaluates every realization independently, using
random streams derived from the seed and the realization index, and
aggregates the per-user SEs into empirical CDFs.
"""

import concurrent.futures
import csv
import dataclasses
import functools
import logging
import os

import numpy as np

from .config import NetworkConfig, config_to_text, random_stream
from .estimation import PilotPowers, allocate_pilots, estimate_quality
from .powerctl import MaxMinProblem, solve_maxmin, trace_rows
from .se import PowerAssignment, Processing, ZeroForcingDimensionError, \
    se_report
from .topology import generate_network

__all__ = \
    [
        "Scenario",
        "SCENARIOS",
        "get_scenario",
        "RealizationResult",
        "ExperimentResult",
        "run_realization",
        "run_scenario",
        "aggregate_cdf",
        "percentile",
        "summary_table",
        "write_outputs",
    ]

logger = logging.getLogger(__name__)

PER_USER_COLUMNS = ("realization", "user_type", "cell", "user_index",
                    "se_exact", "se_approx", "power_mw")

_CELLULAR_ONLY = {"num_d2d_pairs": 0, "num_d2d_pilots": 0}


@dataclasses.dataclass(frozen=True)
class Scenario:
    """An experiment scenario.

    Attributes
    ----------
    name : str
        Scenario name.
    processing : Processing
        Cellular receive processing.
    overrides : dict
        :class:`NetworkConfig` field overrides.
    maxmin : bool
        Whether powers come from max-min power control. Otherwise every user
        transmits at maximum power.
    """

    name: str
    processing: Processing = Processing.ZF
    overrides: dict = dataclasses.field(default_factory=dict)
    maxmin: bool = False


SCENARIOS = {
    scenario.name: scenario for scenario in (
        Scenario("max-power"),
        Scenario("maxmin-d2d", maxmin=True),
        Scenario("cellular-only-maxmin", overrides=_CELLULAR_ONLY,
                 maxmin=True),
        Scenario("max-power-cellular-only", overrides=_CELLULAR_ONLY))}


def get_scenario(name, processing=None):
    """Look up a registered scenario.

    Parameters
    ----------
    name : str
        A key of :data:`SCENARIOS`.
    processing : Processing, optional
        Replaces the scenario processing.

    Returns
    -------
    Scenario
        The scenario.
    """

    try:
        scenario = SCENARIOS[name]
    except KeyError:
        raise ValueError(f"Unknown scenario: {name}") from None
    if processing is not None:
        scenario = dataclasses.replace(scenario, processing=processing)
    return scenario


@dataclasses.dataclass(frozen=True)
class RealizationResult:
    """Outcome of one network realization.

    Attributes
    ----------
    index : int
        Realization index.
    report : SEReport
        The spectral efficiencies.
    trace : tuple of BisectionCheck
        Bisection checks, empty without power control.
    """

    index: int
    report: object
    trace: tuple = ()


def run_realization(config, scenario, index, *, mc_trials=10_000,
                    oracle="iteration"):
    """Evaluate one network realization.

    Parameters
    ----------
    config : NetworkConfig
        Configuration with the scenario overrides applied.
    scenario : Scenario
        The scenario.
    index : int
        Realization index.
    mc_trials : int, optional
        Monte-Carlo draws per D2D pair.
    oracle : str, optional
        Feasibility oracle used by power control.

    Returns
    -------
    RealizationResult
        The result.
    """

    betas = generate_network(config, index)
    allocation = allocate_pilots(
        config, random_stream(config.rng_seed, index, "pilots"))
    quality = estimate_quality(betas, allocation, PilotPowers.full(config),
                               config.tau, max_power=config.max_power)
    trace = ()
    if scenario.maxmin:
        problem = MaxMinProblem.from_config(config, quality, betas,
                                            scenario.processing,
                                            oracle=oracle)
        solution = solve_maxmin(problem)
        powers = solution.powers
        trace = solution.trace
    else:
        powers = PowerAssignment.full(config)
    report = se_report(
        powers, quality, betas, allocation, scenario.processing,
        config.antennas_per_bs, config.users_per_cell, config.num_d2d_pilots,
        config.prelog, mc_trials,
        random_stream(config.rng_seed, index, "monte_carlo"))
    logger.debug(f"{scenario.name}: realization {index:d} "
                 f"sum SE {report.sum_se:.4f}")
    return RealizationResult(index=index, report=report, trace=trace)


@dataclasses.dataclass(frozen=True)
class ExperimentResult:
    """Outcome of a scenario run.

    Attributes
    ----------
    scenario : Scenario
        The scenario.
    config : NetworkConfig
        The resolved configuration.
    realizations : tuple of RealizationResult
        Per-realization results in index order.
    cdfs : dict
        Empirical CDF tables keyed by `'cu_se'`, `'d2d_se'` and `'sum_se'`.
        `'d2d_se'` is absent without D2D pairs.
    metadata : dict
        Run parameters and package version.
    """

    scenario: Scenario
    config: NetworkConfig
    realizations: tuple
    cdfs: dict
    metadata: dict

    @property
    def reports(self):
        return tuple(realization.report for realization in self.realizations)

    @property
    def traces(self):
        return tuple(realization.trace for realization in self.realizations)

    @property
    def sum_se(self):
        """Sum SE of every realization.
        """

        return np.array([report.sum_se for report in self.reports])

    @property
    def cu_se(self):
        return np.concatenate([report.cu_se.ravel()
                               for report in self.reports])

    @property
    def d2d_se(self):
        return np.concatenate([report.d2d_se_exact
                               for report in self.reports])


def run_scenario(scenario, num_realizations, seed, *, config=None,
                 mc_trials=10_000, workers=1, oracle="iteration"):
    """Run a scenario over independent network realizations.

    Parameters
    ----------
    scenario : Scenario
        The scenario.
    num_realizations : int
        Number of realizations.
    seed : int
        Experiment seed.
    config : NetworkConfig, optional
        Base configuration. Scenario overrides are applied on top of it.
    mc_trials : int, optional
        Monte-Carlo draws per D2D pair.
    workers : int, optional
        Number of worker processes. Results do not depend on it.
    oracle : str, optional
        Feasibility oracle used by power control.

    Returns
    -------
    ExperimentResult
        The result.
    """

    if num_realizations < 1:
        raise ValueError("num_realizations must be positive")
    if mc_trials < 1:
        raise ValueError("mc_trials must be positive")
    if workers < 1:
        raise ValueError("workers must be positive")
    if config is None:
        config = NetworkConfig()
    config = config.with_overrides(**scenario.overrides, rng_seed=seed)
    if scenario.processing == Processing.ZF \
            and config.antennas_per_bs <= config.tau:
        raise ZeroForcingDimensionError(
            f"Zero-forcing requires M > K + N, got M={config.antennas_per_bs}"
            f", K + N={config.tau}")

    logger.info(f"{scenario.name}: starting {num_realizations:d} "
                f"realizations ({scenario.processing.name}, seed {seed})")
    run = functools.partial(run_realization, config, scenario,
                            mc_trials=mc_trials, oracle=oracle)
    indices = range(num_realizations)
    if workers == 1:
        realizations = tuple(map(run, indices))
    else:
        with concurrent.futures.ProcessPoolExecutor(workers) as executor:
            realizations = tuple(executor.map(run, indices))

    reports = [realization.report for realization in realizations]
    cdfs = {"cu_se": aggregate_cdf([report.cu_se for report in reports])}
    if config.num_d2d_pairs > 0:
        cdfs["d2d_se"] = aggregate_cdf(
            [report.d2d_se_exact for report in reports])
    cdfs["sum_se"] = aggregate_cdf([report.sum_se for report in reports])

    from . import __version__
    result = ExperimentResult(
        scenario=scenario, config=config, realizations=realizations,
        cdfs=cdfs,
        metadata={"scenario": scenario.name,
                  "processing": scenario.processing.value,
                  "seed": seed,
                  "num_realizations": num_realizations,
                  "mc_trials": mc_trials,
                  "bandwidth": config.bandwidth,
                  "version": __version__})
    logger.info(f"{scenario.name}: finished, median sum SE "
                f"{np.median(result.sum_se):.4f}")
    return result


def aggregate_cdf(values):
    """Empirical CDF.

    Parameters
    ----------
    values : array_like
        Non-empty samples.

    Returns
    -------
    ndarray, shape (m, 2)
        Rows ``(value, probability)`` with the distinct sorted values and the
        fraction of samples at or below each of them.
    """

    values = np.ravel(np.asarray(values, dtype=float))
    if values.size == 0:
        raise ValueError("Cannot aggregate an empty sample")
    distinct, counts = np.unique(values, return_counts=True)
    return np.column_stack([distinct, np.cumsum(counts) / values.size])


def percentile(cdf, q):
    """The smallest value whose cumulative probability reaches ``q`` percent.
    """

    if not 0.0 < q <= 100.0:
        raise ValueError("q must lie in (0, 100]")
    index = np.searchsorted(cdf[:, 1], q / 100.0, side="left")
    return float(cdf[min(index, cdf.shape[0] - 1), 0])


def summary_table(results):
    """One CSV row per scenario.

    Returns
    -------
    str
        Columns ``scenario,median_sum_se,p10_cu_se,mean_d2d_se``. The D2D
        column is empty without D2D pairs.
    """

    rows = [("scenario", "median_sum_se", "p10_cu_se", "mean_d2d_se")]
    for result in results:
        d2d = result.d2d_se
        rows.append((result.scenario.name,
                     f"{np.median(result.sum_se):.4f}",
                     f"{percentile(result.cdfs['cu_se'], 10.0):.4f}",
                     f"{np.mean(d2d):.4f}" if d2d.size > 0 else ""))
    return "\n".join(",".join(row) for row in rows) + "\n"


def _number(value):
    return repr(float(value))


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _per_user_rows(result):
    for realization in result.realizations:
        report = realization.report
        B, K = report.cu_se.shape
        for b in range(B):
            for k in range(K):
                yield (realization.index, "cu", b, k,
                       _number(report.cu_se[b, k]), "",
                       _number(report.powers.cu[b, k]))
        for l, se in enumerate(report.d2d_se_exact):  # noqa: E741
            yield (realization.index, "d2d", "", l, _number(se),
                   _number(report.d2d_se_approx[l]),
                   _number(report.powers.d2d[l]))


def write_outputs(result, out_dir):
    """Write the CSV outputs of a scenario run.

    Parameters
    ----------
    result : ExperimentResult
        The result.
    out_dir : str or os.PathLike
        Output directory, created if missing.

    Returns
    -------
    list of str
        Paths of the written files.

    Notes
    -----
    Writes `per_user_se.csv`, `sum_se.csv`, `cdf_<metric>.csv` for every CDF,
    `bisection_trace.csv` for power-controlled scenarios and `config.txt`.
    Failures raise ``OSError`` naming the path.
    """

    os.makedirs(out_dir, exist_ok=True)
    written = []

    def path(name):
        written.append(os.path.join(out_dir, name))
        return written[-1]

    _write_csv(path("per_user_se.csv"), PER_USER_COLUMNS,
               _per_user_rows(result))

    bandwidth = result.config.bandwidth
    _write_csv(path("sum_se.csv"),
               ("realization", "sum_se", "sum_throughput_mbps"),
               ((realization.index, _number(realization.report.sum_se),
                 _number(realization.report.sum_se * bandwidth / 1.0e6))
                for realization in result.realizations))

    for metric, cdf in result.cdfs.items():
        _write_csv(path(f"cdf_{metric}.csv"), ("value", "cdf"),
                   ((_number(value), _number(probability))
                    for value, probability in cdf))

    if result.scenario.maxmin:
        _write_csv(path("bisection_trace.csv"),
                   ("realization", "step", "lambda", "feasible", "status",
                    "iterations"),
                   ((realization.index,) + row
                    for realization in result.realizations
                    for row in trace_rows(realization.trace)))

    with open(path("config.txt"), "w", encoding="utf-8") as handle:
        handle.write(config_to_text(result.config))
        for key, value in result.metadata.items():
            handle.write(f"# {key} = {value}\n")
    return written
