# SPDX-License-Identifier: LGPL-3.0-only
# Copyright (C) 2024 The d2d_underlay developers

"""Network and propagation parameters, configuration files and random
streams.
"""

import dataclasses
import math
import os

import numpy as np

__all__ = \
    [
        "PathLossParams",
        "NetworkConfig",
        "load_config_file",
        "config_to_text",
        "random_stream",
        "InvalidConfiguration",
    ]


@dataclasses.dataclass(frozen=True)
class PathLossParams:
    """Parameters of the three-slope path-loss model.

    Attributes
    ----------
    carrier_frequency : float
        Carrier frequency in MHz.
    bs_height : float
        Base station antenna height in meters.
    user_height : float
        User antenna height in meters.
    d0 : float
        First breakpoint distance in meters. The loss is constant below it.
    d1 : float
        Second breakpoint distance in meters.
    """

    carrier_frequency: float = 2000.0
    bs_height: float = 15.0
    user_height: float = 1.65
    d0: float = 10.0
    d1: float = 50.0

    def __post_init__(self):
        if not 0.0 < self.d0 < self.d1:
            raise InvalidConfiguration("Breakpoints must satisfy 0 < d0 < d1")
        if self.carrier_frequency <= 0.0:
            raise InvalidConfiguration("carrier_frequency must be positive")
        if self.bs_height <= 0.0 or self.user_height <= 0.0:
            raise InvalidConfiguration("Antenna heights must be positive")

    def fixed_loss(self):
        """Hata-COST231 constant term of the model, in dB.

        Returns
        -------
        float
            The positive constant subtracted at every distance.
        """

        log_f = math.log10(self.carrier_frequency)
        return (46.3 + 33.9 * log_f
                - 13.82 * math.log10(self.bs_height)
                - (1.1 * log_f - 0.7) * self.user_height
                + (1.56 * log_f - 0.8))


@dataclasses.dataclass(frozen=True)
class NetworkConfig:
    """Parameters of a multi-cell network with underlaid D2D pairs.

    Attributes
    ----------
    num_cells : int
        Number of cells ``B``. Must be a perfect square.
    users_per_cell : int
        Number of cellular users per cell ``K``.
    num_d2d_pairs : int
        Number of D2D pairs ``L``.
    num_d2d_pilots : int
        Number of D2D pilots ``N``, at most ``L``.
    antennas_per_bs : int
        Number of base station antennas ``M``.
    area_side : float
        Side of the square (wrapped) coverage area in meters.
    d2d_link_distance : float
        Distance between the transmitter and receiver of a D2D pair, in
        meters.
    coherence_block : int
        Number of symbols ``tau_c`` in a coherence block.
    d0, d1 : float
        Path-loss breakpoints in meters.
    carrier_frequency : float
        Carrier frequency in MHz.
    bs_height, user_height : float
        Antenna heights in meters.
    noise_power : float
        Receiver noise power in dBm.
    max_power : float
        Maximum pilot and data transmit power in mW.
    bandwidth : float
        System bandwidth in Hz. Only used to report throughputs.
    rng_seed : int
        Seed of all random streams.

    Notes
    -----
    ``num_d2d_pairs`` and ``num_d2d_pilots`` may both be zero, which describes
    a conventional cellular network with ``tau = K``.
    """

    num_cells: int = 9
    users_per_cell: int = 2
    num_d2d_pairs: int = 10
    num_d2d_pilots: int = 5
    antennas_per_bs: int = 100
    area_side: float = 1000.0
    d2d_link_distance: float = 10.0
    coherence_block: int = 200
    d0: float = 10.0
    d1: float = 50.0
    carrier_frequency: float = 2000.0
    bs_height: float = 15.0
    user_height: float = 1.65
    noise_power: float = -94.0
    max_power: float = 200.0
    bandwidth: float = 20.0e6
    rng_seed: int = 0

    def __post_init__(self):
        B = self.num_cells
        if B < 1 or math.isqrt(B) ** 2 != B:
            raise InvalidConfiguration(
                f"num_cells must be a positive perfect square, got {B}")
        if self.users_per_cell < 1:
            raise InvalidConfiguration("users_per_cell must be positive")
        L, N = self.num_d2d_pairs, self.num_d2d_pilots
        if L < 0 or N < 0:
            raise InvalidConfiguration("Invalid number of D2D pairs or pilots")
        if (L == 0) != (N == 0):
            raise InvalidConfiguration(
                "num_d2d_pairs and num_d2d_pilots must both be positive, or "
                "both zero for a cellular-only network")
        if N > L:
            raise InvalidConfiguration(
                f"num_d2d_pilots ({N}) exceeds num_d2d_pairs ({L})")
        if self.antennas_per_bs < 1:
            raise InvalidConfiguration("antennas_per_bs must be positive")
        if self.tau >= self.coherence_block:
            raise InvalidConfiguration(
                f"Pilot length {self.tau} must be shorter than the coherence "
                f"block {self.coherence_block}")
        if not 0.0 < self.d0 < self.d1 < self.area_side:
            raise InvalidConfiguration(
                "Breakpoints must satisfy 0 < d0 < d1 < area_side")
        if not 0.0 < self.d2d_link_distance < 0.5 * self.area_side:
            raise InvalidConfiguration(
                "d2d_link_distance must lie in (0, area_side / 2)")
        if not self.max_power > 0.0:
            raise InvalidConfiguration("max_power must be positive")
        if not math.isfinite(self.noise_power):
            raise InvalidConfiguration("noise_power must be finite")
        if self.bandwidth <= 0.0:
            raise InvalidConfiguration("bandwidth must be positive")
        # Validates the remaining propagation parameters
        self.path_loss_params

    @property
    def tau(self):
        """Pilot length ``K + N`` in symbols.
        """

        return self.users_per_cell + self.num_d2d_pilots

    @property
    def prelog(self):
        """Fraction ``1 - tau / tau_c`` of the block used for data.
        """

        return 1.0 - self.tau / self.coherence_block

    @property
    def grid_side(self):
        return math.isqrt(self.num_cells)

    @property
    def cell_side(self):
        return self.area_side / self.grid_side

    @property
    def path_loss_params(self):
        return PathLossParams(carrier_frequency=self.carrier_frequency,
                              bs_height=self.bs_height,
                              user_height=self.user_height,
                              d0=self.d0, d1=self.d1)

    def with_overrides(self, **fields):
        """Return a validated copy with some fields replaced.

        Parameters
        ----------
        fields
            Field values to replace. Unknown names raise
            :class:`InvalidConfiguration`.

        Returns
        -------
        NetworkConfig
            The new configuration.
        """

        unknown = set(fields) - _FIELD_TYPES.keys()
        if unknown:
            raise InvalidConfiguration(
                f"Unknown configuration fields: {', '.join(sorted(unknown))}")
        return dataclasses.replace(self, **fields)


_FIELD_TYPES = {field.name: field.type
                for field in dataclasses.fields(NetworkConfig)}

# Command-line spellings accepted in configuration files
_ALIASES = {
    "cells": "num_cells",
    "users_per_cell": "users_per_cell",
    "d2d_pairs": "num_d2d_pairs",
    "d2d_pilots": "num_d2d_pilots",
    "antennas": "antennas_per_bs",
    "seed": "rng_seed",
}


def _convert(key, value, path):
    kind = _FIELD_TYPES[key]
    try:
        if kind in (int, "int"):
            return int(value)
        return float(value)
    except ValueError as err:
        raise InvalidConfiguration(
            f"{path}: invalid value {value!r} for {key}") from err


def load_config_file(path):
    """Read ``key = value`` configuration overrides from a text file.

    Parameters
    ----------
    path : str or os.PathLike
        The file to read. Blank lines and lines starting with ``#`` are
        ignored. Keys are :class:`NetworkConfig` field names, or command-line
        flag names such as ``d2d-pairs``.

    Returns
    -------
    dict
        Typed field overrides.
    """

    overrides = {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.readlines()
    except OSError as err:
        raise InvalidConfiguration(
            f"Cannot read configuration file {os.fspath(path)}: "
            f"{err.strerror}") from err

    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfiguration(
                f"{os.fspath(path)}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        key = _ALIASES.get(key, key)
        if key not in _FIELD_TYPES:
            raise InvalidConfiguration(
                f"{os.fspath(path)}:{lineno}: unknown key {key!r}")
        overrides[key] = _convert(key, value, os.fspath(path))
    return overrides


def config_to_text(config):
    """Render a configuration as sorted ``key = value`` lines.
    """

    lines = [f"{name} = {getattr(config, name)!r}"
             for name in sorted(_FIELD_TYPES)]
    lines.append(f"tau = {config.tau!r}")
    lines.append(f"prelog = {config.prelog!r}")
    return "\n".join(lines) + "\n"


# Purposes of the independent per-realization random streams
_STREAMS = {"topology": 0, "pilots": 1, "monte_carlo": 2}


def random_stream(seed, realization_index, purpose):
    """Return the random generator for one purpose of one realization.

    Parameters
    ----------
    seed : int
        The experiment seed.
    realization_index : int
        The index of the network realization.
    purpose : str
        One of `'topology'`, `'pilots'` or `'monte_carlo'`.

    Returns
    -------
    numpy.random.Generator
        A generator which depends only on the arguments, so that
        realizations can be produced in any order or in parallel.
    """

    if purpose not in _STREAMS:
        raise ValueError(f"Unknown random stream: {purpose}")
    if realization_index < 0:
        raise ValueError("realization_index must be non-negative")
    seq = np.random.SeedSequence(
        seed, spawn_key=(realization_index, _STREAMS[purpose]))
    return np.random.default_rng(seq)


class InvalidConfiguration(ValueError):
    "The network configuration is not valid."
