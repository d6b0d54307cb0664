# SPDX-License-Identifier: LGPL-3.0-only
# Copyright (C) 2024 The d2d_underlay developers

"""Pilot allocation and MMSE channel estimation quality.

Cellular users in every cell share the ``K`` cellular pilots, CU ``k`` using
pilot ``k``. The D2D pairs share another ``N`` orthogonal pilots, so that
the pilot length is ``tau = K + N``. All estimation-quality tables are
noise-normalized, like the large-scale fading tables they derive from.
"""

import csv
import dataclasses
import io

import numpy as np

__all__ = \
    [
        "PilotAllocation",
        "PilotPowers",
        "EstimationQuality",
        "allocate_pilots",
        "gamma_bs_cu",
        "gamma_bs_d2d",
        "gamma_bs_group",
        "gamma_d2d_cu",
        "gamma_d2d_d2d",
        "estimate_quality",
        "sample_d2d_estimates",
        "gamma_to_csv",
        "InvalidPilotAllocation",
    ]


@dataclasses.dataclass(frozen=True)
class PilotAllocation:
    """Assignment of pilots to users.

    Attributes
    ----------
    cu_pilot_index : ndarray, shape (K,)
        Pilot of each in-cell CU index. CU ``k`` uses pilot ``k`` in every
        cell.
    d2d_group : ndarray, shape (L,)
        D2D pilot group ``i`` in ``0, ..., N - 1`` of each D2D pair.
    num_d2d_pilots : int
        Number of D2D pilots ``N``.

    Notes
    -----
    Indices are zero based. Groups may be empty or hold several pairs.
    """

    cu_pilot_index: np.ndarray
    d2d_group: np.ndarray
    num_d2d_pilots: int

    def __post_init__(self):
        group = self.d2d_group
        if group.size > 0 and (group.min() < 0
                               or group.max() >= self.num_d2d_pilots):
            raise InvalidPilotAllocation("D2D group index out of range")
        self.cu_pilot_index.setflags(write=False)
        group.setflags(write=False)

    @property
    def tau(self):
        """Pilot length ``K + N``.
        """

        return self.cu_pilot_index.size + self.num_d2d_pilots

    def membership(self):
        """One-hot membership matrix.

        Returns
        -------
        ndarray, shape (L, N)
            ``membership[l, i]`` is one if pair ``l`` belongs to group ``i``.
        """

        L = self.d2d_group.size
        member = np.zeros((L, self.num_d2d_pilots))
        member[np.arange(L), self.d2d_group] = 1.0
        return member

    def groups(self):
        """The sets ``n_1, ..., n_N`` as index arrays.
        """

        return [np.flatnonzero(self.d2d_group == i)
                for i in range(self.num_d2d_pilots)]


@dataclasses.dataclass(frozen=True)
class PilotPowers:
    """Pilot transmit powers in mW.

    Attributes
    ----------
    cu : ndarray, shape (B, K)
        Pilot power of each CU.
    d2d : ndarray, shape (L,)
        Pilot power of each D2D transmitter.
    """

    cu: np.ndarray
    d2d: np.ndarray

    @classmethod
    def full(cls, config):
        """All users transmit their pilots at maximum power.
        """

        return cls(
            cu=np.full((config.num_cells, config.users_per_cell),
                       config.max_power),
            d2d=np.full(config.num_d2d_pairs, config.max_power))

    def check(self, max_power=np.inf):
        """Raise ``ValueError`` unless all powers lie in ``[0, max_power]``.
        """

        for powers in (self.cu, self.d2d):
            if np.any(powers < 0.0) or np.any(powers > max_power):
                raise ValueError("Pilot powers must lie in [0, max_power]")


@dataclasses.dataclass(frozen=True)
class EstimationQuality:
    """Mean squares of all MMSE channel estimates.

    Attributes
    ----------
    gamma_bs_cu : ndarray, shape (B, B, K)
        ``gamma_bs_cu[b, c, k]``: estimate at BS ``b`` of CU ``k`` of cell
        ``c``.
    gamma_bs_d2d : ndarray, shape (B, L)
        Estimate at BS ``b`` of D2D transmitter ``l``.
    gamma_bs_group : ndarray, shape (B, N)
        Estimate at BS ``b`` of the sum of the channels of pilot group ``i``.
    gamma_d2d_cu : ndarray, shape (L, B, K)
        Estimate at D2D receiver ``l`` of CU ``k`` of cell ``b``.
    gamma_d2d_d2d : ndarray, shape (L, L)
        Estimate at D2D receiver ``l`` of D2D transmitter ``m``.
    tau : int
        Pilot length used for the estimates.
    """

    gamma_bs_cu: np.ndarray
    gamma_bs_d2d: np.ndarray
    gamma_bs_group: np.ndarray
    gamma_d2d_cu: np.ndarray
    gamma_d2d_d2d: np.ndarray
    tau: int

    def __post_init__(self):
        for table in (self.gamma_bs_cu, self.gamma_bs_d2d,
                      self.gamma_bs_group, self.gamma_d2d_cu,
                      self.gamma_d2d_d2d):
            table.setflags(write=False)

    @property
    def own_cu(self):
        """``gamma_bs_cu[b, b, k]`` for every CU, shape (B, K).
        """

        B = self.gamma_bs_cu.shape[0]
        return self.gamma_bs_cu[np.arange(B), np.arange(B), :]

    @property
    def own_d2d(self):
        """``gamma_d2d_d2d[l, l]`` for every pair, shape (L,).
        """

        return np.diagonal(self.gamma_d2d_d2d)


def allocate_pilots(config, rng, *, distinct=False):
    """Assign pilots to all users.

    Parameters
    ----------
    config : NetworkConfig
        The network configuration.
    rng : numpy.random.Generator
        Random generator used to draw the D2D groups.
    distinct : bool, optional
        Assign the D2D pilots as a random permutation, so that no two pairs
        share a pilot. Requires ``N == L``.

    Returns
    -------
    PilotAllocation
        Each D2D pair picks one of the ``N`` D2D pilots uniformly at random.
    """

    K = config.users_per_cell
    L = config.num_d2d_pairs
    N = config.num_d2d_pilots
    if N > config.coherence_block - K:
        raise InvalidPilotAllocation("Too many pilots for the coherence block")
    if distinct:
        if N != L:
            raise InvalidPilotAllocation(
                "Distinct D2D pilots require as many pilots as pairs")
        group = rng.permutation(L)
    elif L > 0:
        group = rng.integers(0, N, size=L)
    else:
        group = np.zeros(0, dtype=np.int64)
    return PilotAllocation(cu_pilot_index=np.arange(K),
                           d2d_group=np.asarray(group, dtype=np.int64),
                           num_d2d_pilots=N)


def _mmse_quality(tau, power, beta, contamination):
    # tau p beta^2 / (1 + tau sum_{co-pilot} p beta)
    return tau * power * beta ** 2 / (1.0 + tau * contamination)


def gamma_bs_cu(betas, pilot_powers, tau):
    """Estimation quality of the CU channels at every BS.

    Parameters
    ----------
    betas : NetworkRealization
        Large-scale fading coefficients.
    pilot_powers : PilotPowers
        Pilot powers.
    tau : int
        Pilot length.

    Returns
    -------
    ndarray, shape (B, B, K)
        ``tau p[c, k] beta[b, c, k]**2 / (1 + tau sum_c' p[c', k]
        beta[b, c', k])``, for every listening BS ``b``.
    """

    beta = betas.beta_bs_cu
    p = pilot_powers.cu
    contamination = np.einsum("bck,ck->bk", beta, p)
    return _mmse_quality(tau, p[None, :, :], beta, contamination[:, None, :])


def gamma_bs_d2d(betas, pilot_powers, allocation, tau):
    """Estimation quality of the D2D transmitter channels at every BS.

    Returns
    -------
    ndarray, shape (B, L)
        Contamination is summed over the pilot group of each transmitter.
    """

    beta = betas.beta_bs_d2d
    p = pilot_powers.d2d
    group_sum = (beta * p) @ allocation.membership()
    return _mmse_quality(tau, p[None, :], beta,
                         group_sum[:, allocation.d2d_group])


def gamma_bs_group(betas, pilot_powers, allocation, tau):
    """Estimation quality at every BS of the summed channel of each D2D pilot
    group.

    Returns
    -------
    ndarray, shape (B, N)
        ``tau (sum_l sqrt(p[l]) beta[b, l])**2 / (1 + tau sum_l p[l]
        beta[b, l])`` with sums over the group. Empty groups give zero.

    Notes
    -----
    This quantity only fixes the directions nulled by zero-forcing, and does
    not enter any spectral efficiency expression. It is computed exactly as
    written above, although the MMSE estimate of the summed scaled channel
    would have ``(sum_l tau p[l] beta[b, l])**2`` in the numerator. Both
    forms agree for singleton groups up to the ``tau p`` scaling of the
    estimated quantity.
    """

    beta = betas.beta_bs_d2d
    p = pilot_powers.d2d
    member = allocation.membership()
    amplitude = (np.sqrt(p) * beta) @ member
    group_sum = (beta * p) @ member
    return tau * amplitude ** 2 / (1.0 + tau * group_sum)


def gamma_d2d_cu(betas, pilot_powers, tau):
    """Estimation quality of the CU channels at every D2D receiver.

    Returns
    -------
    ndarray, shape (L, B, K)
    """

    beta = betas.beta_d2d_cu
    p = pilot_powers.cu
    contamination = np.einsum("lbk,bk->lk", beta, p)
    return _mmse_quality(tau, p[None, :, :], beta, contamination[:, None, :])


def gamma_d2d_d2d(betas, pilot_powers, allocation, tau):
    """Estimation quality of the D2D transmitter channels at every D2D
    receiver.

    Returns
    -------
    ndarray, shape (L, L)
        ``[l, m]`` is the estimate at receiver ``l`` of transmitter ``m``,
        contaminated by the other members of the group of ``m``.
    """

    beta = betas.beta_d2d_d2d
    p = pilot_powers.d2d
    group_sum = (beta * p) @ allocation.membership()
    return _mmse_quality(tau, p[None, :], beta,
                         group_sum[:, allocation.d2d_group])


def estimate_quality(betas, allocation, pilot_powers, tau=None, *,
                     max_power=None):
    """Compute all estimation-quality tables for a realization.

    Parameters
    ----------
    betas : NetworkRealization
        Large-scale fading coefficients.
    allocation : PilotAllocation
        Pilot allocation.
    pilot_powers : PilotPowers
        Pilot powers.
    tau : int, optional
        Pilot length. Defaults to ``allocation.tau``.
    max_power : float, optional
        Pilot power cap in mW. Negative pilot powers are always rejected.

    Returns
    -------
    EstimationQuality
        The tables, computed once and then shared by the spectral efficiency
        and power control computations.
    """

    if tau is None:
        tau = allocation.tau
    if tau < allocation.tau:
        raise InvalidPilotAllocation(
            f"Pilot length {tau} is shorter than K + N = {allocation.tau}")
    if allocation.d2d_group.size != betas.num_d2d_pairs \
            or allocation.cu_pilot_index.size != betas.users_per_cell:
        raise InvalidPilotAllocation(
            "Pilot allocation does not match the network realization")
    pilot_powers.check(np.inf if max_power is None else max_power)
    return EstimationQuality(
        gamma_bs_cu=gamma_bs_cu(betas, pilot_powers, tau),
        gamma_bs_d2d=gamma_bs_d2d(betas, pilot_powers, allocation, tau),
        gamma_bs_group=gamma_bs_group(betas, pilot_powers, allocation, tau),
        gamma_d2d_cu=gamma_d2d_cu(betas, pilot_powers, tau),
        gamma_d2d_d2d=gamma_d2d_d2d(betas, pilot_powers, allocation, tau),
        tau=tau)


def sample_d2d_estimates(quality, allocation, receiver, rng, size=None):
    """Draw squared magnitudes of the channel estimates at a D2D receiver.

    One standard complex Gaussian variable is drawn per pilot and per draw.
    Every estimate is a deterministic scaling of the despread observation of
    its pilot, so all estimates sharing a pilot are scaled copies of the same
    variable.

    Parameters
    ----------
    quality : EstimationQuality
        Estimation quality tables.
    allocation : PilotAllocation
        Pilot allocation.
    receiver : int
        The D2D receiver ``l``.
    rng : numpy.random.Generator
        Random generator.
    size : int, optional
        Number of independent draws. A single draw without a leading axis if
        not supplied.

    Returns
    -------
    cu : ndarray, shape (size, B, K)
        ``|g_hat[l, c][b, k]|**2``.
    d2d : ndarray, shape (size, L)
        ``|g_hat[l, d][m]|**2``.
    """

    draws = 1 if size is None else size
    K = allocation.cu_pilot_index.size
    num_pilots = K + allocation.num_d2d_pilots
    z = (rng.standard_normal((draws, num_pilots))
         + 1j * rng.standard_normal((draws, num_pilots))) / np.sqrt(2.0)
    power = np.abs(z) ** 2
    cu = quality.gamma_d2d_cu[receiver][None, :, :] \
        * power[:, None, allocation.cu_pilot_index]
    d2d = quality.gamma_d2d_d2d[receiver][None, :] \
        * power[:, K + allocation.d2d_group]
    if size is None:
        return cu[0], d2d[0]
    return cu, d2d


def gamma_to_csv(quality):
    """Text dump of the estimation quality tables.

    Returns
    -------
    str
        CSV with columns ``table,receiver,transmitter,value``. Multi-index
        receivers and transmitters are written as ``b:k``.
    """

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["table", "receiver", "transmitter", "value"])
    B, _, K = quality.gamma_bs_cu.shape
    for b, c, k in np.ndindex(B, B, K):
        writer.writerow(["bs_cu", b, f"{c}:{k}",
                         repr(float(quality.gamma_bs_cu[b, c, k]))])
    for (b, m), value in np.ndenumerate(quality.gamma_bs_d2d):
        writer.writerow(["bs_d2d", b, m, repr(float(value))])
    for (b, i), value in np.ndenumerate(quality.gamma_bs_group):
        writer.writerow(["bs_group", b, i, repr(float(value))])
    for (m, b, k), value in np.ndenumerate(quality.gamma_d2d_cu):
        writer.writerow(["d2d_cu", m, f"{b}:{k}", repr(float(value))])
    for (m, n), value in np.ndenumerate(quality.gamma_d2d_d2d):
        writer.writerow(["d2d_d2d", m, n, repr(float(value))])
    return buffer.getvalue()


class InvalidPilotAllocation(ValueError):
    "The pilot allocation is not consistent with the network."
