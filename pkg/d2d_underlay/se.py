# SPDX-License-Identifier: LGPL-3.0-only
# Copyright (C) 2024 The d2d_underlay developers

"""Spectral efficiency lower bounds for cellular users and D2D pairs.

Cellular users are detected by MR or ZF processing at their serving BS, and
use the closed-form use-and-then-forget bounds. D2D receivers apply MR to
their own scalar channel estimate and use all other estimates as side
information. Their bound contains an expectation over the small-scale
fading, evaluated by Monte Carlo, and has a closed-form approximation used
for power control.

Powers are in mW and all coefficients are noise-normalized, so the noise
variance is one everywhere.
"""

import dataclasses
from enum import Enum

import numpy as np

from .estimation import sample_d2d_estimates

__all__ = \
    [
        "Processing",
        "PowerAssignment",
        "SEReport",
        "LinkGains",
        "sinr_to_se",
        "se_cu_mr",
        "se_cu_zf",
        "se_d2d_approx",
        "se_d2d_exact_mc",
        "link_gains",
        "se_report",
        "ZeroForcingDimensionError",
    ]


class Processing(Enum):
    """Receive processing at the base stations.

    MR : Maximum-ratio combining.

    ZF : Zero-forcing, nulling the ``K`` in-cell users and the ``N`` D2D
    pilot-group directions at the cost of ``K + N`` array-gain dimensions.
    """

    MR = "mr"
    ZF = "zf"

    def __repr__(self):
        return type(self).__name__ + "." + self.name


@dataclasses.dataclass(frozen=True)
class PowerAssignment:
    """Data transmit powers in mW.

    Attributes
    ----------
    cu : ndarray, shape (B, K)
        Power of every cellular user.
    d2d : ndarray, shape (L,)
        Power of every D2D transmitter.
    """

    cu: np.ndarray
    d2d: np.ndarray

    @classmethod
    def full(cls, config):
        """Every user transmits at ``config.max_power``.
        """

        return cls(
            cu=np.full((config.num_cells, config.users_per_cell),
                       config.max_power),
            d2d=np.full(config.num_d2d_pairs, config.max_power))

    @classmethod
    def from_stacked(cls, powers, num_cells, users_per_cell, num_d2d_pairs):
        """Split a stacked power vector ``[cu.ravel(), d2d]``.

        D2D powers absent from the vector are set to zero.
        """

        powers = np.asarray(powers, dtype=float)
        num_cu = num_cells * users_per_cell
        d2d = np.zeros(num_d2d_pairs)
        d2d[:powers.size - num_cu] = powers[num_cu:]
        return cls(cu=powers[:num_cu].reshape(num_cells, users_per_cell),
                   d2d=d2d)

    def stacked(self):
        return np.concatenate([self.cu.ravel(), self.d2d])

    def check(self, max_power, *, rtol=1.0e-12):
        """Raise ``ValueError`` unless all powers lie in ``[0, max_power]``.
        """

        powers = self.stacked()
        if np.any(powers < 0.0) or np.any(powers > max_power * (1.0 + rtol)):
            raise ValueError("Powers must lie in [0, max_power]")


@dataclasses.dataclass(frozen=True)
class SEReport:
    """Spectral efficiencies of one network realization, in bit/s/Hz.

    Attributes
    ----------
    cu_se : ndarray, shape (B, K)
        Closed-form bound of every cellular user.
    d2d_se_exact : ndarray, shape (L,)
        Monte-Carlo evaluation of the D2D bound.
    d2d_se_approx : ndarray, shape (L,)
        Closed-form approximation of the D2D bound.
    processing : Processing
        Processing used at the base stations.
    prelog : float
        Fraction of the coherence block used for data.
    powers : PowerAssignment
        Data powers at which the efficiencies were evaluated.
    """

    cu_se: np.ndarray
    d2d_se_exact: np.ndarray
    d2d_se_approx: np.ndarray
    processing: Processing
    prelog: float
    powers: PowerAssignment

    @property
    def sum_se(self):
        """Network sum over all cellular users and D2D pairs.

        D2D pairs contribute their Monte-Carlo bound.
        """

        return float(np.sum(self.cu_se) + np.sum(self.d2d_se_exact))


def sinr_to_se(sinr, prelog):
    """``prelog * log2(1 + sinr)``, accurate for small and large SINRs.
    """

    return prelog * np.log1p(sinr) / np.log(2.0)


def _own(table):
    B = table.shape[0]
    return table[np.arange(B), np.arange(B), :]


def _coherent(gamma, p_cu):
    # sum_{c != b} p[c, k] gamma[b, c, k]
    return np.einsum("bck,ck->bk", gamma, p_cu) - p_cu * _own(gamma)


def se_cu_mr(powers, quality, betas, M, prelog):
    """Cellular SE with MR processing.

    Parameters
    ----------
    powers : PowerAssignment
        Data powers.
    quality : EstimationQuality
        Estimation quality tables.
    betas : NetworkRealization
        Large-scale fading coefficients.
    M : int
        Number of BS antennas.
    prelog : float
        Fraction of the coherence block used for data.

    Returns
    -------
    ndarray, shape (B, K)
        ``prelog log2(1 + M p gamma / I)`` where ``I`` contains the noise,
        the non-coherent interference of all CUs and D2D transmitters, and
        the coherent interference of co-pilot CUs in other cells.
    """

    p_cu, p_d2d = powers.cu, powers.d2d
    gamma = quality.gamma_bs_cu
    non_coherent = np.einsum("bck,ck->b", betas.beta_bs_cu, p_cu) \
        + betas.beta_bs_d2d @ p_d2d
    interference = 1.0 + non_coherent[:, None] + M * _coherent(gamma, p_cu)
    return sinr_to_se(M * p_cu * _own(gamma) / interference, prelog)


def _zf_gain(M, K, N):
    gain = M - (K + N)
    if gain <= 0:
        raise ZeroForcingDimensionError(
            f"Zero-forcing requires M > K + N, got M={M}, K + N={K + N}")
    return gain


def se_cu_zf(powers, quality, betas, M, K, N, prelog):
    """Cellular SE with ZF processing.

    Returns
    -------
    ndarray, shape (B, K)
        ``prelog log2(1 + (M - K - N) p gamma / I)`` where the non-coherent
        interference only contains the estimation errors ``beta - gamma``.
    """

    gain = _zf_gain(M, K, N)
    p_cu, p_d2d = powers.cu, powers.d2d
    gamma = quality.gamma_bs_cu
    residual = np.einsum("bck,ck->b", betas.beta_bs_cu - gamma, p_cu) \
        + (betas.beta_bs_d2d - quality.gamma_bs_d2d) @ p_d2d
    interference = 1.0 + residual[:, None] + gain * _coherent(gamma, p_cu)
    return sinr_to_se(gain * p_cu * _own(gamma) / interference, prelog)


def _d2d_interference(powers, betas):
    # Mean interference from all CUs and all other D2D transmitters
    beta = betas.beta_d2d_d2d
    from_cu = np.einsum("lbk,bk->l", betas.beta_d2d_cu, powers.cu)
    from_d2d = beta @ powers.d2d - np.diagonal(beta) * powers.d2d
    return from_cu + from_d2d


def se_d2d_approx(powers, quality, betas, prelog):
    """Closed-form approximation of the D2D SE.

    Returns
    -------
    ndarray, shape (L,)
        The expectations of the numerator and the denominator of the exact
        bound are taken separately.
    """

    p = powers.d2d
    gamma = quality.own_d2d
    error = np.diagonal(betas.beta_d2d_d2d) - gamma
    sinr = p * gamma / (p * error + _d2d_interference(powers, betas) + 1.0)
    return sinr_to_se(sinr, prelog)


def se_d2d_exact_mc(powers, quality, betas, allocation, prelog, trials, rng):
    """Monte-Carlo evaluation of the D2D SE bound.

    Parameters
    ----------
    powers : PowerAssignment
        Data powers.
    quality : EstimationQuality
        Estimation quality tables.
    betas : NetworkRealization
        Large-scale fading coefficients.
    allocation : PilotAllocation
        Pilot allocation, which fixes the correlation of the estimates.
    prelog : float
        Fraction of the coherence block used for data.
    trials : int
        Number of small-scale fading draws per pair.
    rng : numpy.random.Generator
        Random generator. Pairs are processed in index order.

    Returns
    -------
    ndarray, shape (L,)
        Average over the draws of ``prelog log2(1 + p |g_hat|**2 / D)``, where
        ``D`` holds the own estimation error, the instantaneous estimated
        interference plus its estimation error, and the noise.
    """

    if trials < 1:
        raise ValueError("trials must be positive")
    p_cu, p_d2d = powers.cu, powers.d2d
    L = p_d2d.size
    error_cu = betas.beta_d2d_cu - quality.gamma_d2d_cu
    error_d2d = betas.beta_d2d_d2d - quality.gamma_d2d_d2d
    se = np.zeros(L)
    for l in range(L):  # noqa: E741
        cu, d2d = sample_d2d_estimates(quality, allocation, l, rng,
                                       size=trials)
        others = p_d2d.copy()
        others[l] = 0.0
        denominator = (
            1.0 + p_d2d[l] * error_d2d[l, l]
            + np.einsum("tbk,bk->t", cu + error_cu[l][None], p_cu)
            + (d2d + error_d2d[l][None, :]) @ others)
        sinr = p_d2d[l] * d2d[:, l] / denominator
        se[l] = np.mean(sinr_to_se(sinr, prelog))
    return se


@dataclasses.dataclass(frozen=True)
class LinkGains:
    """Linear SINR model over a stacked power vector.

    The SINR of user ``u`` is ``g[u] p[u] / (1 + sum_v A[u, v] p[v])``. Users
    are the ``B K`` cellular users in row-major ``(b, k)`` order, followed by
    the D2D pairs when these are included.

    Attributes
    ----------
    gain : ndarray, shape (U,)
        Coherent gains ``g``.
    interference : ndarray, shape (U, U)
        Non-negative interference coefficients ``A``.
    num_cells, users_per_cell, num_d2d_pairs : int
        Network dimensions.
    """

    gain: np.ndarray
    interference: np.ndarray
    num_cells: int
    users_per_cell: int
    num_d2d_pairs: int

    @property
    def num_users(self):
        return self.gain.size

    def sinr(self, powers):
        powers = np.asarray(powers, dtype=float)
        return self.gain * powers / (1.0 + self.interference @ powers)

    def se(self, powers, prelog):
        return sinr_to_se(self.sinr(powers), prelog)

    def assignment(self, powers):
        """The :class:`PowerAssignment` of a stacked power vector.
        """

        return PowerAssignment.from_stacked(
            powers, self.num_cells, self.users_per_cell, self.num_d2d_pairs)


def link_gains(quality, betas, processing, M, K, N, *, include_d2d=True):
    """Linear SINR model of the closed-form bounds.

    Parameters
    ----------
    quality : EstimationQuality
        Estimation quality tables.
    betas : NetworkRealization
        Large-scale fading coefficients.
    processing : Processing
        Cellular receive processing.
    M, K, N : int
        Number of antennas, users per cell and D2D pilots.
    include_d2d : bool, optional
        Whether the D2D pairs are users of the model. Otherwise their
        constraints and the interference they cause are dropped.

    Returns
    -------
    LinkGains
        The model. CU rows reproduce :func:`se_cu_mr` or :func:`se_cu_zf` and
        D2D rows reproduce :func:`se_d2d_approx`.
    """

    B = betas.num_cells
    L = betas.num_d2d_pairs if include_d2d else 0
    num_cu = B * K
    gamma = quality.gamma_bs_cu
    if processing == Processing.MR:
        array_gain = M
        cu_cu = betas.beta_bs_cu.copy()
        cu_d2d = betas.beta_bs_d2d[:, :L]
    elif processing == Processing.ZF:
        array_gain = _zf_gain(M, K, N)
        cu_cu = betas.beta_bs_cu - gamma
        cu_d2d = (betas.beta_bs_d2d - quality.gamma_bs_d2d)[:, :L]
    else:
        raise ValueError(f"Unexpected processing: {processing}")

    # Coherent interference of co-pilot CUs in other cells
    same_pilot = np.eye(K)[None, :, None, :]
    other_cell = (1.0 - np.eye(B))[:, None, :, None]
    coherent = array_gain * gamma.transpose(0, 2, 1)[:, :, :, None] \
        * same_pilot * other_cell

    A = np.zeros((num_cu + L, num_cu + L))
    A[:num_cu, :num_cu] = (cu_cu[:, None, :, :] + coherent).reshape(
        num_cu, num_cu)
    A[:num_cu, num_cu:] = np.repeat(cu_d2d, K, axis=0)
    g = np.zeros(num_cu + L)
    g[:num_cu] = array_gain * _own(gamma).ravel()
    if L > 0:
        A[num_cu:, :num_cu] = betas.beta_d2d_cu.reshape(L, num_cu)
        d2d_d2d = np.array(betas.beta_d2d_d2d)
        np.fill_diagonal(d2d_d2d,
                         np.diagonal(betas.beta_d2d_d2d) - quality.own_d2d)
        A[num_cu:, num_cu:] = d2d_d2d
        g[num_cu:] = quality.own_d2d
    return LinkGains(gain=g, interference=A, num_cells=B,
                     users_per_cell=K, num_d2d_pairs=betas.num_d2d_pairs)


def se_report(powers, quality, betas, allocation, processing, M, K, N,
              prelog, trials, rng):
    """Spectral efficiencies of all users of one realization.

    Returns
    -------
    SEReport
        Closed-form cellular SEs, and both the Monte-Carlo and the
        approximate D2D SEs.
    """

    if processing == Processing.MR:
        cu_se = se_cu_mr(powers, quality, betas, M, prelog)
    elif processing == Processing.ZF:
        cu_se = se_cu_zf(powers, quality, betas, M, K, N, prelog)
    else:
        raise ValueError(f"Unexpected processing: {processing}")
    return SEReport(
        cu_se=cu_se,
        d2d_se_exact=se_d2d_exact_mc(powers, quality, betas, allocation,
                                     prelog, trials, rng),
        d2d_se_approx=se_d2d_approx(powers, quality, betas, prelog),
        processing=processing, prelog=prelog, powers=powers)


class ZeroForcingDimensionError(ValueError):
    "Zero-forcing needs more antennas than nulled directions."
