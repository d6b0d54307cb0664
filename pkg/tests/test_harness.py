#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import functools
import os

import numpy as np
import pytest

from d2d_underlay import (
    NetworkConfig, Processing, ZeroForcingDimensionError, SCENARIOS,
    get_scenario, run_scenario, aggregate_cdf, percentile, summary_table,
    write_outputs)

SMALL = {"realizations": 2, "mc_trials": 50}


def run(name, seed=0, **kwargs):
    return run_scenario(get_scenario(name), SMALL["realizations"], seed,
                        mc_trials=SMALL["mc_trials"], **kwargs)


def test_scenarios():
    assert set(SCENARIOS) == {"max-power", "maxmin-d2d",
                              "cellular-only-maxmin",
                              "max-power-cellular-only"}
    assert get_scenario("maxmin-d2d").processing == Processing.ZF
    assert get_scenario("maxmin-d2d", Processing.MR).processing \
        == Processing.MR
    assert SCENARIOS["maxmin-d2d"].processing == Processing.ZF
    with pytest.raises(ValueError):
        get_scenario("sum-se")


def test_max_power():
    result = run("max-power")
    assert len(result.reports) == 2
    for report in result.reports:
        assert np.all(report.powers.cu == 200.0)
        assert np.all(report.powers.d2d == 200.0)
    assert set(result.cdfs) == {"cu_se", "d2d_se", "sum_se"}
    assert result.metadata["seed"] == 0
    assert result.metadata["bandwidth"] == 20.0e6
    assert result.config.rng_seed == 0


def test_cellular_only():
    result = run("cellular-only-maxmin")
    assert result.config.num_d2d_pairs == 0
    assert result.config.tau == 2
    assert "d2d_se" not in result.cdfs
    for report in result.reports:
        assert report.d2d_se_exact.size == 0
        assert report.cu_se.size == 18
        assert report.sum_se == pytest.approx(report.cu_se.sum(), rel=1e-12)
    assert all(len(trace) > 0 for trace in result.traces)


def test_zero_forcing_checked_first():
    config = NetworkConfig(antennas_per_bs=7)
    with pytest.raises(ZeroForcingDimensionError):
        run_scenario(get_scenario("max-power"), 1, 0, config=config)
    # MR has no such requirement
    result = run_scenario(get_scenario("max-power", Processing.MR), 1, 0,
                          config=config, mc_trials=10)
    assert len(result.reports) == 1


@pytest.mark.parametrize("kwargs", [{"num_realizations": 0},
                                    {"mc_trials": 0},
                                    {"workers": 0}])
def test_invalid_run(kwargs):
    args = {"num_realizations": 1, "mc_trials": 10, "workers": 1}
    args.update(kwargs)
    with pytest.raises(ValueError):
        run_scenario(get_scenario("max-power"), args["num_realizations"], 0,
                     mc_trials=args["mc_trials"], workers=args["workers"])


@pytest.mark.parametrize("values, expected", [
                                              ([1.0, 2.0, 3.0], [[1.0, 1.0 / 3.0], [2.0, 2.0 / 3.0], [3.0, 1.0]]),  # noqa: E501
                                              ([3.0, 1.0, 2.0], [[1.0, 1.0 / 3.0], [2.0, 2.0 / 3.0], [3.0, 1.0]]),  # noqa: E501
                                              ([4.0, 4.0, 4.0], [[4.0, 1.0]]),  # noqa: E501
                                              ([2.0, 1.0, 2.0, 5.0], [[1.0, 0.25], [2.0, 0.75], [5.0, 1.0]])  # noqa: E501
                                              ])
def test_aggregate_cdf(values, expected):
    cdf = aggregate_cdf(values)
    assert np.allclose(cdf, expected, rtol=1.0e-15)
    assert np.all(np.diff(cdf[:, 1]) > 0.0)
    assert cdf[-1, 1] == 1.0


def test_aggregate_cdf_empty():
    with pytest.raises(ValueError):
        aggregate_cdf([])


def test_percentile():
    cdf = aggregate_cdf(np.arange(1.0, 11.0))
    assert percentile(cdf, 10.0) == 1.0
    assert percentile(cdf, 50.0) == 5.0
    assert percentile(cdf, 55.0) == 6.0
    assert percentile(cdf, 100.0) == 10.0
    with pytest.raises(ValueError):
        percentile(cdf, 0.0)


def test_percentile_reproducible():
    a = run("max-power", seed=3)
    b = run("max-power", seed=3)
    assert percentile(a.cdfs["cu_se"], 10.0) \
        == percentile(b.cdfs["cu_se"], 10.0)
    c = run("max-power", seed=4)
    assert not np.array_equal(a.cu_se, c.cu_se)


def read(path):
    with open(path, "rb") as handle:
        return handle.read()


def test_write_outputs(tmp_path):
    result = run("maxmin-d2d")
    paths = write_outputs(result, tmp_path / "out")
    names = sorted(os.path.basename(path) for path in paths)
    assert names == ["bisection_trace.csv", "cdf_cu_se.csv",
                     "cdf_d2d_se.csv", "cdf_sum_se.csv", "config.txt",
                     "per_user_se.csv", "sum_se.csv"]

    lines = read(tmp_path / "out" / "per_user_se.csv").decode().splitlines()
    assert lines[0] == \
        "realization,user_type,cell,user_index,se_exact,se_approx,power_mw"
    assert len(lines) == 1 + 2 * (9 * 2 + 10)
    cu = lines[1].split(",")
    assert cu[:4] == ["0", "cu", "0", "0"]
    assert cu[5] == ""
    d2d = lines[19].split(",")
    assert d2d[:4] == ["0", "d2d", "", "0"]
    assert float(d2d[5]) >= 0.0

    sum_lines = read(tmp_path / "out" / "sum_se.csv").decode().splitlines()
    assert sum_lines[0] == "realization,sum_se,sum_throughput_mbps"
    realization, sum_se, throughput = sum_lines[1].split(",")
    assert float(sum_se) == result.reports[0].sum_se
    assert float(throughput) == pytest.approx(20.0 * float(sum_se))

    trace = read(tmp_path / "out" / "bisection_trace.csv").decode()
    assert trace.startswith(
        "realization,step,lambda,feasible,status,iterations\n")
    config = read(tmp_path / "out" / "config.txt").decode()
    assert "num_cells = 9\n" in config
    assert "# scenario = maxmin-d2d\n" in config

    cdf = read(tmp_path / "out" / "cdf_sum_se.csv").decode().splitlines()
    assert cdf[0] == "value,cdf"
    assert float(cdf[-1].split(",")[1]) == 1.0


def test_write_outputs_max_power(tmp_path):
    write_outputs(run("max-power"), tmp_path)
    assert not (tmp_path / "bisection_trace.csv").exists()


def test_determinism(tmp_path):
    serial = run("maxmin-d2d", seed=7)
    parallel = run("maxmin-d2d", seed=7, workers=2)
    write_outputs(serial, tmp_path / "serial")
    write_outputs(parallel, tmp_path / "parallel")
    write_outputs(run("maxmin-d2d", seed=7), tmp_path / "again")
    for name in os.listdir(tmp_path / "serial"):
        expected = read(tmp_path / "serial" / name)
        assert read(tmp_path / "parallel" / name) == expected
        assert read(tmp_path / "again" / name) == expected


def test_summary_table():
    table = summary_table([run("max-power"), run("cellular-only-maxmin")])
    lines = table.splitlines()
    assert lines[0] == "scenario,median_sum_se,p10_cu_se,mean_d2d_se"
    assert lines[1].startswith("max-power,")
    assert lines[2].startswith("cellular-only-maxmin,")
    assert lines[2].endswith(",")


@pytest.fixture(scope="module")
def reproduction():
    return {name: run_scenario(get_scenario(name), 200, 0, mc_trials=1000,
                               workers=4)
            for name in ("max-power", "maxmin-d2d", "cellular-only-maxmin")}


@pytest.mark.slow
def test_sum_se_with_d2d(reproduction):
    assert np.median(reproduction["maxmin-d2d"].sum_se) \
        > np.median(reproduction["cellular-only-maxmin"].sum_se)


@pytest.mark.slow
def test_weakest_users(reproduction):
    def p10(name):
        return percentile(reproduction[name].cdfs["cu_se"], 10.0)

    assert abs(p10("maxmin-d2d") - p10("cellular-only-maxmin")) \
        <= 0.15 * p10("cellular-only-maxmin")


@functools.lru_cache(maxsize=None)
def weakest_cu_se(name, processing, antennas):
    result = run_scenario(get_scenario(name, processing), 200, 0,
                          config=NetworkConfig(antennas_per_bs=antennas),
                          mc_trials=100, workers=4)
    return percentile(result.cdfs["cu_se"], 10.0)


@pytest.mark.slow
@pytest.mark.parametrize("processing, antennas", [
    pytest.param(Processing.ZF, 100, marks=pytest.mark.xfail(
        strict=True,
        reason="with 100 antennas ZF already serves the weakest CUs at full "
               "power better than the max-min level")),
    (Processing.MR, 100),
    (Processing.ZF, 20)])
def test_maxmin_lifts_weakest_users(processing, antennas):
    assert weakest_cu_se("maxmin-d2d", processing, antennas) \
        > weakest_cu_se("max-power", processing, antennas)
