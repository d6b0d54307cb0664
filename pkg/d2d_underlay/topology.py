# SPDX-License-Identifier: LGPL-3.0-only
# Copyright (C) 2024 The d2d_underlay developers

"""Random network realizations on a wrapped square and their large-scale
fading coefficients.
"""

import dataclasses
import io
import csv

import numpy as np

from .config import PathLossParams, random_stream

__all__ = \
    [
        "NetworkRealization",
        "generate_network",
        "wrap_distance",
        "path_loss",
        "normalize_beta",
        "cell_index",
        "network_to_csv",
    ]


@dataclasses.dataclass(frozen=True)
class NetworkRealization:
    """Positions and large-scale fading coefficients of one network.

    All coefficients are linear and normalized by the noise power.

    Attributes
    ----------
    bs_positions : ndarray, shape (B, 2)
        Base station positions in meters.
    cu_positions : ndarray, shape (B, K, 2)
        Positions of the cellular users, indexed by serving cell.
    d2d_tx_positions, d2d_rx_positions : ndarray, shape (L, 2)
        Positions of the D2D transmitters and receivers.
    beta_bs_cu : ndarray, shape (B, B, K)
        ``beta_bs_cu[b, c, k]`` is the coefficient between BS ``b`` and CU
        ``k`` of cell ``c``.
    beta_bs_d2d : ndarray, shape (B, L)
        ``beta_bs_d2d[b, l]`` is the coefficient between BS ``b`` and D2D
        transmitter ``l``.
    beta_d2d_cu : ndarray, shape (L, B, K)
        ``beta_d2d_cu[l, b, k]`` is the coefficient between D2D receiver ``l``
        and CU ``k`` of cell ``b``.
    beta_d2d_d2d : ndarray, shape (L, L)
        ``beta_d2d_d2d[l, m]`` is the coefficient between D2D receiver ``l``
        and D2D transmitter ``m``.
    """

    bs_positions: np.ndarray
    cu_positions: np.ndarray
    d2d_tx_positions: np.ndarray
    d2d_rx_positions: np.ndarray
    beta_bs_cu: np.ndarray
    beta_bs_d2d: np.ndarray
    beta_d2d_cu: np.ndarray
    beta_d2d_d2d: np.ndarray

    def __post_init__(self):
        B, _, K = self.beta_bs_cu.shape
        L = self.beta_d2d_d2d.shape[0]
        if self.beta_bs_cu.shape != (B, B, K) \
                or self.beta_bs_d2d.shape != (B, L) \
                or self.beta_d2d_cu.shape != (L, B, K) \
                or self.beta_d2d_d2d.shape != (L, L):
            raise ValueError("Inconsistent large-scale fading table shapes")
        for table in (self.beta_bs_cu, self.beta_bs_d2d, self.beta_d2d_cu,
                      self.beta_d2d_d2d):
            table.setflags(write=False)

    @property
    def num_cells(self):
        return self.beta_bs_cu.shape[0]

    @property
    def users_per_cell(self):
        return self.beta_bs_cu.shape[2]

    @property
    def num_d2d_pairs(self):
        return self.beta_d2d_d2d.shape[0]


def wrap_distance(a, b, side):
    """Distance on a torus of a given side.

    Parameters
    ----------
    a, b : array_like, shape (..., 2)
        Points with coordinates in ``[0, side)``. Broadcast against each
        other.
    side : float
        Side of the square in meters.

    Returns
    -------
    ndarray or float
        The per-axis minimum-image Euclidean distance.
    """

    delta = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    delta = np.minimum(delta, side - delta)
    return np.hypot(delta[..., 0], delta[..., 1])


def path_loss(d, params=PathLossParams()):
    """Three-slope path loss.

    Parameters
    ----------
    d : array_like
        Distance in meters.
    params : PathLossParams, optional
        Model parameters.

    Returns
    -------
    ndarray or float
        The channel gain in dB, i.e. the negated loss. Slopes are 0, 20 and
        35 dB per decade below ``d0``, between ``d0`` and ``d1``, and above
        ``d1``.
    """

    d = np.asarray(d, dtype=float)
    if np.any(d < 0.0):
        raise ValueError("Distances must be non-negative")
    fixed = params.fixed_loss()
    # Distances in km, clamped to the plateau below d0
    d_km = np.maximum(d, params.d0) / 1000.0
    d1_km = params.d1 / 1000.0
    far = -fixed - 35.0 * np.log10(d_km)
    near = -fixed - 15.0 * np.log10(d1_km) - 20.0 * np.log10(d_km)
    loss = np.where(d_km > d1_km, far, near)
    return loss if loss.ndim > 0 else float(loss)


def normalize_beta(loss_db, noise_dbm):
    """Convert a gain in dB into a linear coefficient normalized by the noise
    power.
    """

    return 10.0 ** ((np.asarray(loss_db, dtype=float) - noise_dbm) / 10.0)


def cell_index(point, config):
    """Index of the grid cell containing a point.

    Cells are numbered row by row, ``b = row * sqrt(B) + column``.
    """

    point = np.asarray(point, dtype=float)
    n = config.grid_side
    column = np.clip(np.floor(point[..., 0] / config.cell_side), 0, n - 1)
    row = np.clip(np.floor(point[..., 1] / config.cell_side), 0, n - 1)
    return (row * n + column).astype(np.int64)


def _large_scale(distances, config):
    return normalize_beta(path_loss(distances, config.path_loss_params),
                          config.noise_power)


def generate_network(config, realization_index):
    """Generate a random network realization.

    Parameters
    ----------
    config : NetworkConfig
        The network configuration.
    realization_index : int
        Index of the realization. Together with ``config.rng_seed`` it fully
        determines the result.

    Returns
    -------
    NetworkRealization
        The realization.

    Notes
    -----
    Base stations sit at the centers of a ``sqrt(B) x sqrt(B)`` grid and
    each serves ``K`` users drawn uniformly in its cell. D2D transmitters are
    uniform over the whole area and each receiver lies at
    ``config.d2d_link_distance`` from its transmitter in a uniformly random
    direction. Base stations and cellular users are drawn first, so the
    cellular part does not depend on the number of D2D pairs.
    """

    rng = random_stream(config.rng_seed, realization_index, "topology")
    B = config.num_cells
    K = config.users_per_cell
    L = config.num_d2d_pairs
    n = config.grid_side
    side = config.area_side
    cell = config.cell_side

    row, column = np.divmod(np.arange(B), n)
    corners = np.stack([column * cell, row * cell], axis=-1)
    bs = corners + 0.5 * cell
    cu = corners[:, None, :] + cell * rng.random((B, K, 2))

    tx = side * rng.random((L, 2))
    angle = 2.0 * np.pi * rng.random(L)
    offset = config.d2d_link_distance * np.stack(
        [np.cos(angle), np.sin(angle)], axis=-1)
    rx = np.mod(tx + offset, side)

    beta_bs_cu = _large_scale(
        wrap_distance(bs[:, None, None, :], cu[None, :, :, :], side), config)
    beta_bs_d2d = _large_scale(
        wrap_distance(bs[:, None, :], tx[None, :, :], side), config)
    beta_d2d_cu = _large_scale(
        wrap_distance(rx[:, None, None, :], cu[None, :, :, :], side), config)
    beta_d2d_d2d = _large_scale(
        wrap_distance(rx[:, None, :], tx[None, :, :], side), config)

    return NetworkRealization(
        bs_positions=bs, cu_positions=cu,
        d2d_tx_positions=tx, d2d_rx_positions=rx,
        beta_bs_cu=beta_bs_cu.reshape(B, B, K),
        beta_bs_d2d=beta_bs_d2d.reshape(B, L),
        beta_d2d_cu=beta_d2d_cu.reshape(L, B, K),
        beta_d2d_d2d=beta_d2d_d2d.reshape(L, L))


def network_to_csv(realization):
    """Text dump of all positions.

    Returns
    -------
    str
        CSV with columns ``entity,index,x,y``. Cellular users are indexed by
        ``b * K + k``.
    """

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["entity", "index", "x", "y"])
    entities = (("bs", realization.bs_positions),
                ("cu", realization.cu_positions.reshape(-1, 2)),
                ("d2d_tx", realization.d2d_tx_positions),
                ("d2d_rx", realization.d2d_rx_positions))
    for entity, positions in entities:
        for index, (x, y) in enumerate(positions):
            writer.writerow([entity, index, repr(float(x)), repr(float(y))])
    return buffer.getvalue()
