#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import numpy as np
import pytest

from d2d_underlay import (
    NetworkConfig, PilotAllocation, PilotPowers, InvalidPilotAllocation,
    allocate_pilots, gamma_bs_cu, gamma_bs_d2d, gamma_bs_group,
    gamma_d2d_d2d, estimate_quality, sample_d2d_estimates, gamma_to_csv,
    random_stream)

from .network import manual_network, random_network


def allocation(K, groups, N):
    return PilotAllocation(cu_pilot_index=np.arange(K),
                           d2d_group=np.array(groups, dtype=np.int64),
                           num_d2d_pilots=N)


def reference_quality(betas, alloc, powers, tau):
    """The estimation quality tables, one entry at a time.
    """

    B, K, L = betas.num_cells, betas.users_per_cell, betas.num_d2d_pairs
    N = alloc.num_d2d_pilots
    group = list(alloc.d2d_group)
    p_c, p_d = powers.cu, powers.d2d

    bs_cu = np.zeros((B, B, K))
    d2d_cu = np.zeros((L, B, K))
    for k in range(K):
        for b in range(B):
            total = sum(p_c[c, k] * betas.beta_bs_cu[b, c, k]
                        for c in range(B))
            for c in range(B):
                bs_cu[b, c, k] = tau * p_c[c, k] \
                    * betas.beta_bs_cu[b, c, k] ** 2 / (1.0 + tau * total)
        for l in range(L):  # noqa: E741
            total = sum(p_c[c, k] * betas.beta_d2d_cu[l, c, k]
                        for c in range(B))
            for c in range(B):
                d2d_cu[l, c, k] = tau * p_c[c, k] \
                    * betas.beta_d2d_cu[l, c, k] ** 2 / (1.0 + tau * total)

    bs_d2d = np.zeros((B, L))
    bs_group = np.zeros((B, N))
    d2d_d2d = np.zeros((L, L))
    for m in range(L):
        members = [j for j in range(L) if group[j] == group[m]]
        for b in range(B):
            total = sum(p_d[j] * betas.beta_bs_d2d[b, j] for j in members)
            bs_d2d[b, m] = tau * p_d[m] * betas.beta_bs_d2d[b, m] ** 2 \
                / (1.0 + tau * total)
        for l in range(L):  # noqa: E741
            total = sum(p_d[j] * betas.beta_d2d_d2d[l, j] for j in members)
            d2d_d2d[l, m] = tau * p_d[m] * betas.beta_d2d_d2d[l, m] ** 2 \
                / (1.0 + tau * total)
    for i in range(N):
        members = [j for j in range(L) if group[j] == i]
        for b in range(B):
            amplitude = sum(np.sqrt(p_d[j]) * betas.beta_bs_d2d[b, j]
                            for j in members)
            total = sum(p_d[j] * betas.beta_bs_d2d[b, j] for j in members)
            bs_group[b, i] = tau * amplitude ** 2 / (1.0 + tau * total)
    return bs_cu, bs_d2d, bs_group, d2d_cu, d2d_d2d


@pytest.mark.parametrize("seed", tuple(range(100)))
def test_quality_reference(seed):
    rng = np.random.default_rng(seed)
    B = int(rng.choice([1, 4]))
    K = int(rng.integers(1, 4))
    L = int(rng.integers(1, 6))
    N = int(rng.integers(1, L + 1))
    betas = random_network(rng, B, K, L)
    alloc = allocation(K, rng.integers(0, N, size=L), N)
    powers = PilotPowers(cu=rng.uniform(1.0, 200.0, size=(B, K)),
                         d2d=rng.uniform(1.0, 200.0, size=L))
    quality = estimate_quality(betas, alloc, powers)
    assert quality.tau == K + N

    tables = (quality.gamma_bs_cu, quality.gamma_bs_d2d,
              quality.gamma_bs_group, quality.gamma_d2d_cu,
              quality.gamma_d2d_d2d)
    for table, reference in zip(tables,
                                reference_quality(betas, alloc, powers,
                                                  K + N)):
        assert table.shape == reference.shape
        assert np.allclose(table, reference, rtol=1.0e-12, atol=0.0)
        assert np.all(table >= 0.0)

    assert np.all(quality.gamma_bs_cu <= betas.beta_bs_cu)
    assert np.all(quality.gamma_bs_d2d <= betas.beta_bs_d2d)
    assert np.all(quality.gamma_d2d_cu <= betas.beta_d2d_cu)
    assert np.all(quality.gamma_d2d_d2d <= betas.beta_d2d_d2d)


@pytest.mark.parametrize("p, expected", [(1.0, 7.0 / 8.0),
                                         (0.0, 0.0)])
def test_gamma_bs_cu_single_cell(p, expected):
    betas = manual_network([[[1.0]]])
    powers = PilotPowers(cu=np.array([[p]]), d2d=np.zeros(0))
    gamma = gamma_bs_cu(betas, powers, 7)
    assert gamma.shape == (1, 1, 1)
    assert abs(gamma[0, 0, 0] - expected) < 1.0e-15


def test_gamma_bs_cu_asymptote():
    beta = 0.3
    betas = manual_network([[[beta]]])
    gamma = gamma_bs_cu(
        betas, PilotPowers(cu=np.array([[1.0e9]]), d2d=np.zeros(0)), 3)
    assert abs(gamma[0, 0, 0] - beta) < 1.0e-8 * beta


def two_pair_network(beta=2.0):
    return manual_network(
        np.ones((1, 1, 1)), np.full((1, 3), beta), np.ones((3, 1, 1)),
        np.full((3, 3), beta))


def test_gamma_d2d_shared_group():
    tau, p, beta = 4, 5.0, 2.0
    betas = two_pair_network(beta)
    # Pairs 0 and 1 share pilot 0, pair 2 uses pilot 1
    alloc = allocation(1, [0, 0, 1], 2)
    powers = PilotPowers(cu=np.ones((1, 1)), d2d=np.full(3, p))
    shared = tau * p * beta ** 2 / (1.0 + 2.0 * tau * p * beta)
    alone = tau * p * beta ** 2 / (1.0 + tau * p * beta)
    for gamma in (gamma_bs_d2d(betas, powers, alloc, tau)[0],
                  gamma_d2d_d2d(betas, powers, alloc, tau)[2]):
        assert np.allclose(gamma, [shared, shared, alone], rtol=1.0e-14)

    # Pair 2 is not affected by the power of the other group
    louder = PilotPowers(cu=np.ones((1, 1)), d2d=np.array([50.0, 50.0, p]))
    assert gamma_bs_d2d(betas, louder, alloc, tau)[0, 2] \
        == gamma_bs_d2d(betas, powers, alloc, tau)[0, 2]


def test_gamma_bs_group():
    tau = 4
    betas = manual_network(
        np.ones((1, 1, 1)), [[1.0, 3.0, 2.0]], np.ones((3, 1, 1)),
        np.ones((3, 3)))
    p = np.array([2.0, 5.0, 7.0])
    powers = PilotPowers(cu=np.ones((1, 1)), d2d=p)
    # Group 0 holds pairs 0 and 1, group 1 holds pair 2, group 2 is empty
    alloc = allocation(1, [0, 0, 1], 3)
    gamma = gamma_bs_group(betas, powers, alloc, tau)[0]

    expected = tau * (np.sqrt(2.0) * 1.0 + np.sqrt(5.0) * 3.0) ** 2 \
        / (1.0 + tau * (2.0 * 1.0 + 5.0 * 3.0))
    assert abs(gamma[0] - expected) < 1.0e-12 * expected
    singleton = gamma_bs_d2d(betas, powers, alloc, tau)[0, 2]
    assert abs(gamma[1] - singleton) < 1.0e-12 * singleton
    assert gamma[2] == 0.0


def test_allocate_pilots():
    config = NetworkConfig()
    alloc = allocate_pilots(config, random_stream(0, 0, "pilots"))
    assert alloc.tau == 7
    assert np.array_equal(alloc.cu_pilot_index, np.arange(2))
    assert alloc.d2d_group.shape == (10,)
    assert np.all((alloc.d2d_group >= 0) & (alloc.d2d_group < 5))
    assert sum(group.size for group in alloc.groups()) == 10
    assert np.array_equal(alloc.membership().sum(axis=1), np.ones(10))

    again = allocate_pilots(config, random_stream(0, 0, "pilots"))
    assert np.array_equal(alloc.d2d_group, again.d2d_group)


def test_allocate_pilots_distinct():
    config = NetworkConfig(num_d2d_pairs=5, num_d2d_pilots=5)
    alloc = allocate_pilots(config, random_stream(1, 0, "pilots"),
                            distinct=True)
    assert sorted(alloc.d2d_group) == list(range(5))
    assert all(group.size == 1 for group in alloc.groups())

    # Singleton groups leave no D2D pilot contamination
    rng = np.random.default_rng(3)
    betas = random_network(rng, 1, 2, 5)
    powers = PilotPowers(cu=np.full((1, 2), 200.0), d2d=np.full(5, 200.0))
    gamma = gamma_d2d_d2d(betas, powers, alloc, 7)
    beta = betas.beta_d2d_d2d
    expected = 7 * 200.0 * beta ** 2 / (1.0 + 7 * 200.0 * beta)
    assert np.allclose(gamma, expected, rtol=1.0e-12)

    with pytest.raises(InvalidPilotAllocation):
        allocate_pilots(NetworkConfig(), random_stream(1, 0, "pilots"),
                        distinct=True)


def test_invalid_allocation():
    with pytest.raises(InvalidPilotAllocation):
        allocation(2, [0, 3], 3)
    betas = two_pair_network()
    alloc = allocation(1, [0, 0, 1], 2)
    powers = PilotPowers(cu=np.ones((1, 1)), d2d=np.ones(3))
    with pytest.raises(InvalidPilotAllocation):
        estimate_quality(betas, alloc, powers, tau=2)
    with pytest.raises(InvalidPilotAllocation):
        estimate_quality(betas, allocation(1, [0, 1], 2), powers)


@pytest.mark.parametrize("cu, d2d", [(-1.0, 1.0),
                                     (1.0, -1.0),
                                     (1.0, 250.0),
                                     (201.0, 1.0)])
def test_pilot_power_limits(cu, d2d):
    betas = two_pair_network()
    alloc = allocation(1, [0, 0, 1], 2)
    powers = PilotPowers(cu=np.full((1, 1), cu), d2d=np.array([1.0, 1.0, d2d]))
    with pytest.raises(ValueError):
        estimate_quality(betas, alloc, powers, max_power=200.0)
    if cu > 0.0 and d2d > 0.0:
        # Without a cap only the signs are checked
        estimate_quality(betas, alloc, powers)
    else:
        with pytest.raises(ValueError):
            estimate_quality(betas, alloc, powers)
    estimate_quality(betas, alloc, PilotPowers(cu=np.full((1, 1), 200.0),
                                               d2d=np.full(3, 200.0)),
                     max_power=200.0)


def sampling_instance():
    rng = np.random.default_rng(7)
    betas = random_network(rng, 4, 2, 4)
    alloc = allocation(2, [0, 1, 0, 0], 2)
    powers = PilotPowers(cu=np.full((4, 2), 200.0), d2d=np.full(4, 200.0))
    return estimate_quality(betas, alloc, powers), alloc


def test_sample_d2d_estimates_mean():
    quality, alloc = sampling_instance()
    rng = np.random.default_rng(11)
    cu, d2d = sample_d2d_estimates(quality, alloc, 1, rng, size=200_000)
    assert cu.shape == (200_000, 4, 2)
    assert d2d.shape == (200_000, 4)
    assert np.allclose(d2d.mean(axis=0), quality.gamma_d2d_d2d[1],
                       rtol=0.02)
    assert np.allclose(cu.mean(axis=0), quality.gamma_d2d_cu[1], rtol=0.02)


def test_sample_d2d_estimates_shared_pilot():
    quality, alloc = sampling_instance()
    rng = np.random.default_rng(13)
    cu, d2d = sample_d2d_estimates(quality, alloc, 2, rng, size=1000)
    gamma = quality.gamma_d2d_d2d[2]
    # Pairs 0, 2 and 3 share a pilot
    assert np.allclose(d2d[:, 0] / d2d[:, 3], gamma[0] / gamma[3],
                       rtol=1.0e-12)
    assert np.allclose(d2d[:, 2] / d2d[:, 3], gamma[2] / gamma[3],
                       rtol=1.0e-12)
    assert not np.allclose(d2d[:, 1] / d2d[:, 3], gamma[1] / gamma[3])
    # CUs with the same in-cell index share a pilot across cells
    gamma = quality.gamma_d2d_cu[2]
    assert np.allclose(cu[:, 0, 1] / cu[:, 3, 1], gamma[0, 1] / gamma[3, 1],
                       rtol=1.0e-12)

    single_cu, single_d2d = sample_d2d_estimates(quality, alloc, 2, rng)
    assert single_cu.shape == (4, 2)
    assert single_d2d.shape == (4,)


def test_sample_zero_quality():
    betas = two_pair_network()
    alloc = allocation(1, [0, 0, 1], 2)
    powers = PilotPowers(cu=np.ones((1, 1)), d2d=np.array([0.0, 1.0, 1.0]))
    quality = estimate_quality(betas, alloc, powers)
    _, d2d = sample_d2d_estimates(quality, alloc, 0, np.random.default_rng(0),
                                  size=10)
    assert np.all(d2d[:, 0] == 0.0)


def test_gamma_to_csv():
    quality, _ = sampling_instance()
    lines = gamma_to_csv(quality).splitlines()
    assert lines[0] == "table,receiver,transmitter,value"
    assert len(lines) == 1 + 4 * 4 * 2 + 4 * 4 + 4 * 2 + 4 * 4 * 2 + 4 * 4
