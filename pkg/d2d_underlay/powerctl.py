# SPDX-License-Identifier: LGPL-3.0-only
# Copyright (C) 2024 The d2d_underlay developers

"""Max-min spectral efficiency power control.

The smallest SE over all cellular users and D2D pairs is maximized by
bisection on the common SE level ``lam``. Each check is a linear feasibility
problem in the stacked power vector, solved by default with the standard
interference function fixed-point iteration.
"""

import csv
import dataclasses
import functools
import io
import logging
import warnings
from enum import Enum

import numpy as np

from .se import PowerAssignment, Processing, \
    ZeroForcingDimensionError, link_gains, sinr_to_se

__all__ = \
    [
        "FeasibilityStatus",
        "FeasibilityResult",
        "MaxMinProblem",
        "MaxMinSolution",
        "BisectionAction",
        "BisectionCheck",
        "BisectionEnd",
        "MaxMinBisection",
        "target_sinr",
        "feasibility_check",
        "utopia_point",
        "solve_maxmin",
        "trace_to_csv",
        "FeasibilityIterationLimit",
    ]

try:
    import numba
    from numba import njit
except ImportError:
    numba = None

    def njit(fn):
        @functools.wraps(fn)
        def wrapped_fn(*args, **kwargs):
            return fn(*args, **kwargs)
        return wrapped_fn

logger = logging.getLogger(__name__)

ORACLES = ("iteration", "direct", "lp")

# Relative slack on the power cap before a requirement counts as exceeding it
_CAP_RTOL = 1.0e-12


class FeasibilityStatus(Enum):
    """Outcome of a feasibility test.

    FEASIBLE : A power vector within the caps meets every SINR target.

    INFEASIBLE : Some target provably cannot be met within the caps.

    ITERATION_LIMIT : The fixed-point iteration hit its cap before either
    converging or proving infeasibility.

    DEGENERATE : A user with zero coherent gain has a positive target.
    """

    FEASIBLE = 0
    INFEASIBLE = 1
    ITERATION_LIMIT = 2
    DEGENERATE = 3

    def __repr__(self):
        return type(self).__name__ + "." + self.name


_FEASIBLE = FeasibilityStatus.FEASIBLE.value
_INFEASIBLE = FeasibilityStatus.INFEASIBLE.value
_ITERATION_LIMIT = FeasibilityStatus.ITERATION_LIMIT.value


@dataclasses.dataclass(frozen=True)
class FeasibilityResult:
    """Result of a feasibility test.

    Attributes
    ----------
    status : FeasibilityStatus
        The verdict.
    powers : ndarray
        Stacked power vector. For a feasible verdict of the fixed-point or
        direct oracles this is the component-wise minimal feasible power.
        Otherwise it is the last iterate.
    iterations : int
        Number of fixed-point iterations performed.
    degenerate_users : tuple of int
        Stacked indices of users with zero coherent gain.
    """

    status: FeasibilityStatus
    powers: np.ndarray
    iterations: int = 0
    degenerate_users: tuple = ()

    @property
    def feasible(self):
        return self.status == FeasibilityStatus.FEASIBLE


@dataclasses.dataclass(frozen=True)
class MaxMinProblem:
    """A max-min SE power-control problem for one network realization.

    Attributes
    ----------
    quality : EstimationQuality
        Estimation quality tables.
    betas : NetworkRealization
        Large-scale fading coefficients.
    processing : Processing
        Cellular receive processing.
    antennas_per_bs : int
        Number of BS antennas ``M``.
    users_per_cell : int
        Number of cellular users per cell ``K``.
    num_d2d_pilots : int
        Number of D2D pilots ``N``.
    prelog : float
        Fraction of the coherence block used for data.
    max_power : float
        Per-user power cap in mW.
    tolerance : float
        Bisection tolerance on ``lam`` in bit/s/Hz.
    feasibility_tol : float
        Relative change at which the fixed-point iteration stops.
    max_iterations : int
        Fixed-point iteration cap.
    oracle : str
        Feasibility oracle. One of `'iteration'`, `'direct'` or `'lp'`.
    cellular_only : bool
        Whether to drop the D2D constraints and the interference caused by
        D2D transmitters.
    """

    quality: object
    betas: object
    processing: Processing
    antennas_per_bs: int
    users_per_cell: int
    num_d2d_pilots: int
    prelog: float
    max_power: float
    tolerance: float = 1.0e-3
    feasibility_tol: float = 1.0e-8
    max_iterations: int = 10_000
    oracle: str = "iteration"
    cellular_only: bool = False

    def __post_init__(self):
        if not self.tolerance > 0.0:
            raise ValueError("tolerance must be positive")
        if not self.max_power > 0.0:
            raise ValueError("max_power must be positive")
        if not self.feasibility_tol > 0.0:
            raise ValueError("feasibility_tol must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.oracle not in ORACLES:
            raise ValueError(f"Unknown feasibility oracle: {self.oracle}")
        if self.processing == Processing.ZF \
                and self.antennas_per_bs <= self.users_per_cell \
                + self.num_d2d_pilots:
            raise ZeroForcingDimensionError(
                "Zero-forcing requires M > K + N")

    @classmethod
    def from_config(cls, config, quality, betas, processing, **kwargs):
        """Build a problem using the dimensions and the power cap of a
        :class:`NetworkConfig`.
        """

        return cls(quality=quality, betas=betas, processing=processing,
                   antennas_per_bs=config.antennas_per_bs,
                   users_per_cell=config.users_per_cell,
                   num_d2d_pilots=config.num_d2d_pilots,
                   prelog=config.prelog, max_power=config.max_power,
                   **kwargs)

    @functools.cached_property
    def gains(self):
        """The :class:`LinkGains` of the constraint set.
        """

        return link_gains(self.quality, self.betas, self.processing,
                          self.antennas_per_bs, self.users_per_cell,
                          self.num_d2d_pilots,
                          include_d2d=not self.cellular_only)

    @property
    def num_d2d_pairs(self):
        """Number of D2D pairs taking part in the problem.
        """

        return 0 if self.cellular_only else self.betas.num_d2d_pairs


def target_sinr(lam, prelog):
    """The SINR achieving an SE of ``lam``, ``2 ** (lam / prelog) - 1``.
    """

    if lam < 0.0:
        raise ValueError("lam must be non-negative")
    return float(np.expm1(lam / prelog * np.log(2.0)))


@njit
def interference_fixed_point(gain, interference, target, max_power, tol,
                             max_iterations):
    """Standard interference function iteration.

    Parameters
    ----------
    gain : ndarray, shape (U,)
        Positive coherent gains.
    interference : ndarray, shape (U, U)
        Interference coefficients.
    target : float
        Common SINR target.
    max_power : float
        Power cap.
    tol : float
        Stop when the largest relative change of a power is below this.
    max_iterations : int
        Iteration cap.

    Returns
    -------
    tuple
        ``(powers, status, iterations)``, with ``status`` the value of a
        :class:`FeasibilityStatus`.
    """

    U = gain.shape[0]
    p = np.zeros(U)
    q = np.zeros(U)
    for iteration in range(1, max_iterations + 1):
        change = 0.0
        for u in range(U):
            total = 1.0
            for v in range(U):
                total += interference[u, v] * p[v]
            required = target * total / gain[u]
            if required > max_power * (1.0 + _CAP_RTOL):
                return p, _INFEASIBLE, iteration
            q[u] = min(required, max_power)
            if q[u] > 0.0:
                change = max(change, abs(q[u] - p[u]) / q[u])
        for u in range(U):
            p[u] = q[u]
        if change < tol:
            return p, _FEASIBLE, iteration
    return p, _ITERATION_LIMIT, max_iterations


def interference_fixed_point_numpy(gain, interference, target, max_power, tol,
                                   max_iterations):
    """Vectorized equivalent of :func:`interference_fixed_point`.
    """

    p = np.zeros_like(gain)
    for iteration in range(1, max_iterations + 1):
        required = target * (1.0 + interference @ p) / gain
        if np.any(required > max_power * (1.0 + _CAP_RTOL)):
            return p, _INFEASIBLE, iteration
        q = np.minimum(required, max_power)
        change = np.max(np.abs(q - p) / np.where(q > 0.0, q, 1.0),
                        initial=0.0)
        p = q
        if change < tol:
            return p, _FEASIBLE, iteration
    return p, _ITERATION_LIMIT, max_iterations


@functools.lru_cache(maxsize=None)
def _fixed_point_kernel():
    if numba is None:
        warnings.warn("Numba not available -- using numpy iteration",
                      RuntimeWarning)
        return interference_fixed_point_numpy
    return interference_fixed_point


def _iteration_oracle(problem, gains, target):
    kernel = _fixed_point_kernel()
    powers, status, iterations = kernel(
        np.ascontiguousarray(gains.gain, dtype=np.float64),
        np.ascontiguousarray(gains.interference, dtype=np.float64),
        float(target), float(problem.max_power),
        float(problem.feasibility_tol), int(problem.max_iterations))
    return FeasibilityResult(status=FeasibilityStatus(int(status)),
                             powers=np.array(powers),
                             iterations=int(iterations))


def _direct_oracle(problem, gains, target):
    U = gains.num_users
    normalized = target * gains.interference / gains.gain[:, None]
    infeasible = FeasibilityResult(status=FeasibilityStatus.INFEASIBLE,
                                   powers=np.zeros(U))
    if U > 0 and np.max(np.abs(np.linalg.eigvals(normalized))) >= 1.0:
        return infeasible
    powers = np.linalg.solve(np.eye(U) - normalized, target / gains.gain)
    if np.any(powers < 0.0) \
            or np.any(powers > problem.max_power * (1.0 + _CAP_RTOL)):
        return infeasible
    return FeasibilityResult(status=FeasibilityStatus.FEASIBLE,
                             powers=np.minimum(powers, problem.max_power))


def _lp_oracle(problem, gains, target):
    from scipy.optimize import linprog

    U = gains.num_users
    result = linprog(
        c=np.ones(U),
        A_ub=target * gains.interference - np.diag(gains.gain),
        b_ub=np.full(U, -target),
        bounds=[(0.0, problem.max_power)] * U,
        method="highs")
    if result.status == 0:
        return FeasibilityResult(status=FeasibilityStatus.FEASIBLE,
                                 powers=np.clip(result.x, 0.0,
                                                problem.max_power),
                                 iterations=int(result.nit))
    elif result.status == 2:
        return FeasibilityResult(status=FeasibilityStatus.INFEASIBLE,
                                 powers=np.zeros(U),
                                 iterations=int(result.nit))
    elif result.status == 1:
        return FeasibilityResult(status=FeasibilityStatus.ITERATION_LIMIT,
                                 powers=np.zeros(U),
                                 iterations=int(result.nit))
    else:
        raise RuntimeError(f"Linear program failed: {result.message}")


_ORACLE_FUNCTIONS = {"iteration": _iteration_oracle,
                     "direct": _direct_oracle,
                     "lp": _lp_oracle}


def feasibility_check(problem, lam):
    """Test whether every user can reach an SE of ``lam``.

    Parameters
    ----------
    problem : MaxMinProblem
        The problem.
    lam : float
        The common SE level in bit/s/Hz.

    Returns
    -------
    FeasibilityResult
        The verdict and the associated stacked powers.

    Notes
    -----
    Each constraint ``SE_u >= lam`` reads ``g_u p_u >= t (1 + sum_v A_uv p_v)``
    with ``t = target_sinr(lam, prelog)``. The fixed-point iteration starts
    from zero powers. Its iterates are non-decreasing and never exceed the
    minimal feasible power, so a requirement above the cap proves
    infeasibility.
    """

    gains = problem.gains
    target = target_sinr(lam, problem.prelog)
    degenerate = tuple(int(u) for u in np.flatnonzero(gains.gain <= 0.0))
    if target == 0.0:
        return FeasibilityResult(status=FeasibilityStatus.FEASIBLE,
                                 powers=np.zeros(gains.num_users),
                                 degenerate_users=degenerate)
    if degenerate:
        return FeasibilityResult(status=FeasibilityStatus.DEGENERATE,
                                 powers=np.zeros(gains.num_users),
                                 degenerate_users=degenerate)
    return _ORACLE_FUNCTIONS[problem.oracle](problem, gains, target)


def utopia_point(problem):
    """Upper bound on the max-min SE.

    Returns
    -------
    float
        The smallest interference-free SE with every user at full power. CUs
        have SINR ``P_max G gamma`` where ``G`` is ``M`` for MR and
        ``M - K - N`` for ZF, and D2D pairs have SINR ``P_max gamma``.
    """

    gains = problem.gains
    return float(np.min(sinr_to_se(problem.max_power * gains.gain,
                                   problem.prelog)))


class BisectionAction:
    """Bisection action base class.

    Attributes
    ----------
    * args : Any
        Action parameters.
    """

    def __init__(self, *args):
        self.args = args

    def __repr__(self):
        return f"{type(self).__name__}({', '.join(map(repr, self.args))})"


class BisectionCheck(BisectionAction):
    """A feasibility test at one SE level.

    Attributes
    ----------
    step : int
        Check number, starting at one.
    lam : float
        The tested SE level.
    result : FeasibilityResult
        The verdict.
    """

    def __init__(self, step, lam, result):
        super().__init__(step, lam, result)

    @property
    def step(self):
        return self.args[0]

    @property
    def lam(self):
        return self.args[1]

    @property
    def result(self):
        return self.args[2]

    @property
    def feasible(self):
        return self.result.feasible


class BisectionEnd(BisectionAction):
    """Indicates that the bisection has concluded.

    Attributes
    ----------
    lam : float
        The largest SE level found feasible.
    result : FeasibilityResult
        The feasibility result at ``lam``.
    """

    def __init__(self, lam, result):
        super().__init__(lam, result)

    @property
    def lam(self):
        return self.args[0]

    @property
    def result(self):
        return self.args[1]


class MaxMinBisection:
    """Bisection line search over the common SE level.

    Iterating yields one :class:`BisectionCheck` per feasibility test and a
    final :class:`BisectionEnd`.

    Attributes
    ----------
    problem : MaxMinProblem
        The problem to solve.

    Notes
    -----
    The bracket starts at ``[0, utopia_point(problem)]``. Checks which hit the
    iteration cap count as infeasible.
    """

    def __init__(self, problem):
        self._problem = problem
        self._lo = 0.0
        self._hi = utopia_point(problem)
        self._trace = []
        self._hit_limit = False
        self._exhausted = False
        self._iter = None

    def __iter__(self):
        return self

    def __next__(self):
        if self._iter is None:
            self._iter = self._iterator()
        return next(self._iter)

    def _iterator(self):
        problem = self._problem
        best = feasibility_check(problem, 0.0)
        if self._hi <= 0.0:
            logger.warning("Utopia point is zero, returning zero powers")

        step = 0
        while self._hi - self._lo >= problem.tolerance:
            lam = 0.5 * (self._lo + self._hi)
            result = feasibility_check(problem, lam)
            step += 1
            check = BisectionCheck(step, lam, result)
            self._trace.append(check)
            logger.debug(f"check {step:d}: lambda={lam:.6g} "
                         f"status={result.status.name} "
                         f"iterations={result.iterations:d}")
            if result.status == FeasibilityStatus.ITERATION_LIMIT:
                self._hit_limit = True
                logger.warning(f"Fixed-point iteration cap reached at "
                               f"lambda={lam:.6g}, treated as infeasible")
            yield check

            if result.feasible:
                self._lo = lam
                best = result
            else:
                self._hi = lam

        if self._lo == 0.0 and self._hit_limit:
            raise FeasibilityIterationLimit(
                "No positive SE level could be certified within "
                f"{problem.max_iterations:d} iterations")
        self._exhausted = True
        yield BisectionEnd(self._lo, best)

    @property
    def problem(self):
        return self._problem

    @property
    def bracket(self):
        """The current ``(lo, hi)`` bracket.
        """

        return self._lo, self._hi

    @property
    def trace(self):
        """The checks yielded so far.
        """

        return tuple(self._trace)

    @property
    def is_exhausted(self):
        """Whether the bisection has concluded.
        """

        return self._exhausted


@dataclasses.dataclass(frozen=True)
class MaxMinSolution:
    """Solution of a max-min problem.

    Attributes
    ----------
    lam : float
        Max-min SE level in bit/s/Hz.
    powers : PowerAssignment
        Power assignment achieving ``lam``.
    slack : ndarray
        Stacked per-constraint ``SE_u - lam``.
    iterations : int
        Total fixed-point iterations over all checks.
    trace : tuple of BisectionCheck
        The bisection checks.
    degenerate_users : tuple of int
        Stacked indices of users with zero coherent gain.
    """

    lam: float
    powers: PowerAssignment
    slack: np.ndarray
    iterations: int
    trace: tuple
    degenerate_users: tuple = ()


def solve_maxmin(problem):
    """Maximize the smallest SE over all users.

    Parameters
    ----------
    problem : MaxMinProblem
        The problem.

    Returns
    -------
    MaxMinSolution
        The largest feasible level found and its minimal power assignment.
    """

    bisection = MaxMinBisection(problem)
    for action in bisection:
        if isinstance(action, BisectionEnd):
            break
    else:
        raise RuntimeError("Bisection ended without a result")

    gains = problem.gains
    result = action.result
    trace = bisection.trace
    if result.degenerate_users:
        logger.warning(f"Users with zero estimation quality: "
                       f"{result.degenerate_users}")
    return MaxMinSolution(
        lam=action.lam,
        powers=gains.assignment(result.powers),
        slack=gains.se(result.powers, problem.prelog) - action.lam,
        iterations=sum(check.result.iterations for check in trace),
        trace=trace,
        degenerate_users=result.degenerate_users)


def trace_rows(trace):
    for check in trace:
        yield (check.step, repr(float(check.lam)), int(check.feasible),
               check.result.status.name.lower(), check.result.iterations)


def trace_to_csv(trace):
    """Text dump of a bisection trace.

    Returns
    -------
    str
        CSV with columns ``step,lambda,feasible,status,iterations``.
    """

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["step", "lambda", "feasible", "status", "iterations"])
    writer.writerows(trace_rows(trace))
    return buffer.getvalue()


class FeasibilityIterationLimit(RuntimeError):
    "The fixed-point iteration cap prevented a positive SE level."
