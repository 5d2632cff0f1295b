"""Optimal stopping thresholds and power control under delay (and power)
constraints.

Two problems are solved:

* two-level power control (unit power on the chosen channel) with an
  average-delay bound, by back-substituting the stationarity condition for
  each threshold and bisecting on the delay multiplier ``lambda_d``;
* joint water-filling power and thresholds with average power and delay
  bounds, by back-substituting the Lambert-W threshold formula inside a
  bisection on ``lambda_p`` nested inside a bisection on ``lambda_d``.

Thresholds for channel i only depend on the already-optimized suffix
i+1..M, so every candidate dual point costs a single backward pass.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .analytic import AnalyticMetrics, evaluate, min_expected_delay, stage_integrals
from .errors import DomainError, InfeasibleError, NoBracketError, NonConvergenceError
from .model import (
    CONSTANT_ONE,
    ChannelEnsemble,
    Constraints,
    SlotTiming,
    StoppingPolicy,
    WaterFilling,
)
from .special import lambert_w0

__all__ = [
    "DualPoint",
    "SolverControl",
    "DelayStatus",
    "PowerStatus",
    "SolveReport",
    "bisect",
    "waterfilling_power",
    "gamma_equation_lhs",
    "thresholds_two_level",
    "thresholds_waterfilling",
    "unconstrained_two_level",
    "solve_two_level",
    "solve_optimal",
    "stationarity_residuals",
]

log = logging.getLogger(__name__)

_INV_E = math.exp(-1.0)


@dataclass(frozen=True)
class DualPoint:
    lambda_p: float
    lambda_d: float

    def __post_init__(self):
        if not (self.lambda_p >= 0 and self.lambda_d >= 0):
            raise ValueError(f"dual variables must be nonnegative, got {self}")


@dataclass(frozen=True)
class SolverControl:
    tol: float = 1e-10
    max_bisection_iters: int = 200
    bracket_growth: float = 2.0
    max_bracket_expansions: int = 80

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.bracket_growth > 1:
            raise ValueError("bracket_growth must exceed 1")


DEFAULT_CONTROL = SolverControl()


class DelayStatus(enum.Enum):
    ACTIVE = "DelayActive"
    INACTIVE = "DelayInactive"


class PowerStatus(enum.Enum):
    ACTIVE = "PowerActive"
    INACTIVE = "PowerInactive"
    ABSENT = "PowerAbsent"


@dataclass(frozen=True)
class SolveReport:
    policy: StoppingPolicy
    duals: DualPoint
    metrics: AnalyticMetrics
    power_slack: float  # S_1 - P_avg (0.0 when no power budget)
    delay_slack: float  # p_1 - 1/D_max
    outer_iterations: int
    inner_iterations: int
    delay_status: DelayStatus
    power_status: PowerStatus

    @property
    def complementary_slackness(self) -> tuple[float, float]:
        """(lambda_p * |power slack|, lambda_d * |delay slack|)."""
        return (
            self.duals.lambda_p * abs(self.power_slack),
            self.duals.lambda_d * abs(self.delay_slack),
        )


def bisect(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    ctl: SolverControl = DEFAULT_CONTROL,
) -> float:
    """Root of a monotone function on [lo, hi].

    If f(lo) and f(hi) share a sign the upper end is pushed out
    geometrically (``hi = lo + growth * (hi - lo)``) up to
    ``ctl.max_bracket_expansions`` times. Stops when |f| <= tol or the
    bracket is narrower than tol * max(1, |x|).
    """
    flo = f(lo)
    if flo == 0.0:
        return float(lo)
    fhi = f(hi)
    expansions = 0
    while fhi != 0.0 and (flo > 0) == (fhi > 0):
        if expansions >= ctl.max_bracket_expansions:
            raise NoBracketError(
                f"no sign change on [{lo}, {hi}]", residuals={"f_lo": flo, "f_hi": fhi}
            )
        hi = lo + ctl.bracket_growth * (hi - lo)
        fhi = f(hi)
        expansions += 1
    if fhi == 0.0:
        return float(hi)
    increasing = fhi > 0
    best_x, best_f = (lo, flo) if abs(flo) < abs(fhi) else (hi, fhi)
    for _ in range(ctl.max_bisection_iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) < abs(best_f):
            best_x, best_f = mid, fm
        if abs(fm) <= ctl.tol or (hi - lo) <= ctl.tol * max(1.0, abs(mid)):
            return float(mid)
        if (fm > 0) == increasing:
            hi = mid
        else:
            lo = mid
    raise NonConvergenceError(
        f"bisection did not converge in {ctl.max_bisection_iters} steps",
        residuals={"x": best_x, "f": best_f},
    )


def waterfilling_power(gamma: float, lambda_p: float) -> float:
    """Optimal power (1/lambda_p - 1/gamma)^+ at gain ``gamma``."""
    if not (gamma > 0 and lambda_p > 0):
        raise DomainError(f"need gamma > 0 and lambda_p > 0, got {gamma!r}, {lambda_p!r}")
    return max(1.0 / lambda_p - 1.0 / gamma, 0.0)


def gamma_equation_lhs(gamma: float, lambda_p: float, c: float) -> float:
    """c * (log(gamma/lambda_p) - lambda_p * (1/lambda_p - 1/gamma)^+).

    Strictly increasing in gamma; its value at the optimal threshold equals
    the suffix value U - lambda_p S - lambda_d (1 - p).
    """
    return c * (math.log(gamma / lambda_p) - lambda_p * waterfilling_power(gamma, lambda_p))


def _two_level_threshold(rhs: float, c: float) -> float:
    if rhs <= 0.0:
        return 0.0
    return math.expm1(rhs / c)


def _waterfilling_threshold(rhs: float, lambda_p: float, c: float) -> float:
    if rhs < 0.0:
        # gains below the cutoff: c log(g / lambda_p) = rhs
        return lambda_p * math.exp(rhs / c)
    z = -math.exp(-rhs / c - 1.0)
    if z == 0.0:
        return math.inf
    w = lambert_w0(max(z, -_INV_E))
    return -lambda_p / w


def _back_substitute(ens, timing, threshold_fn, rule):
    """One backward pass: threshold i from suffix values, then update them.

    ``threshold_fn(U, S, p, c)`` maps suffix values to the threshold.
    """
    m = ens.count
    c = timing.fractions(m).tolist()
    ths = [0.0] * m
    U = S = p = 0.0
    for i in range(m - 1, -1, -1):
        th = threshold_fn(U, S, p, c[i])
        ths[i] = th
        st = stage_integrals(th, ens.fading, rule)
        theta = ens.free_prob[i]
        q = theta * st.stop_prob
        U = theta * c[i] * st.rate + (1.0 - q) * U
        S = theta * c[i] * st.power + (1.0 - q) * S
        p = q + (1.0 - q) * p
    return StoppingPolicy(tuple(ths), rule), U, S, p


def _two_level_pass(lambda_d, ens, timing):
    return _back_substitute(
        ens,
        timing,
        lambda U, S, p, c: _two_level_threshold(U - lambda_d * (1.0 - p), c),
        CONSTANT_ONE,
    )


def _waterfilling_pass(lambda_p, lambda_d, ens, timing):
    return _back_substitute(
        ens,
        timing,
        lambda U, S, p, c: _waterfilling_threshold(
            U - lambda_p * S - lambda_d * (1.0 - p), lambda_p, c
        ),
        WaterFilling(1.0 / lambda_p),
    )


def thresholds_two_level(
    lambda_d: float, ens: ChannelEnsemble, timing: SlotTiming
) -> StoppingPolicy:
    """Optimal unit-power thresholds for a given delay multiplier.

    gamma_th(i) = [exp((U_{i+1} - lambda_d (1 - p_{i+1})) / c_i) - 1]^+,
    computed from channel M down to 1.
    """
    if not lambda_d >= 0:
        raise ValueError(f"lambda_d must be nonnegative, got {lambda_d!r}")
    return _two_level_pass(lambda_d, ens, timing)[0]


def thresholds_waterfilling(
    duals: DualPoint, ens: ChannelEnsemble, timing: SlotTiming
) -> StoppingPolicy:
    """Thresholds solving the gamma-finding equations for fixed duals.

    With r_i = U_{i+1} - lambda_p S_{i+1} - lambda_d (1 - p_{i+1}) the
    threshold solves gamma_equation_lhs(g) = r_i. For r_i >= 0 this is
    -lambda_p / W0(-exp(-r_i/c_i - 1)) >= lambda_p; for r_i < 0 the root
    lies below the water-filling cutoff, at lambda_p exp(r_i / c_i).
    """
    if not duals.lambda_p > 0:
        raise DomainError("water-filling thresholds need lambda_p > 0")
    return _waterfilling_pass(duals.lambda_p, duals.lambda_d, ens, timing)[0]


def _report(policy, duals, ens, timing, constraints, outer, inner, delay_status, power_status):
    metrics = evaluate(policy, ens, timing)
    power_slack = 0.0
    if power_status is not PowerStatus.ABSENT:
        power_slack = metrics.avg_power - constraints.p_avg
    delay_slack = metrics.success_prob - 1.0 / constraints.d_max
    return SolveReport(
        policy=policy,
        duals=duals,
        metrics=metrics,
        power_slack=power_slack,
        delay_slack=delay_slack,
        outer_iterations=outer,
        inner_iterations=inner,
        delay_status=delay_status,
        power_status=power_status,
    )


def _check_delay_feasible(ens, d_max):
    d_min = min_expected_delay(ens)
    # relative slack absorbs rounding when d_max is set to d_min itself
    if d_max < d_min * (1.0 - 1e-12):
        raise InfeasibleError(
            f"d_max={d_max} is below the minimum achievable expected delay {d_min:.9g}",
            threshold=d_min,
        )
    return d_min


def _success_target(ens, d_max):
    """1/d_max, capped at the success probability of all-zero thresholds.

    The cap uses the same recursion as the backward pass, so a bound equal
    to the minimum delay stays reachable despite rounding.
    """
    p_max = 0.0
    for theta in reversed(ens.free_prob):
        p_max = theta + (1.0 - theta) * p_max
    return min(1.0 / d_max, p_max)


class _Counter:
    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, x):
        self.calls += 1
        return self.fn(x)


def unconstrained_two_level(ens: ChannelEnsemble, timing: SlotTiming) -> SolveReport:
    """Throughput-optimal unit-power thresholds with no delay bound (lambda_d = 0)."""
    policy = thresholds_two_level(0.0, ens, timing)
    return _report(
        policy,
        DualPoint(0.0, 0.0),
        ens,
        timing,
        Constraints(d_max=math.inf),
        0,
        0,
        DelayStatus.INACTIVE,
        PowerStatus.ABSENT,
    )


def solve_two_level(
    ens: ChannelEnsemble,
    timing: SlotTiming,
    d_max: float,
    ctl: SolverControl = DEFAULT_CONTROL,
) -> SolveReport:
    """Maximize unit-power throughput subject to E[D] <= d_max."""
    constraints = Constraints(d_max=d_max)
    _check_delay_feasible(ens, d_max)
    target = _success_target(ens, d_max)

    policy, U, _, p = _two_level_pass(0.0, ens, timing)
    if p >= target:
        return _report(
            policy, DualPoint(0.0, 0.0), ens, timing, constraints, 0, 0,
            DelayStatus.INACTIVE, PowerStatus.ABSENT,
        )

    residual = _Counter(lambda ld: _two_level_pass(ld, ens, timing)[3] - target)
    hi = max(U, ctl.tol)
    lambda_d = bisect(residual, 0.0, hi, ctl)
    policy = thresholds_two_level(lambda_d, ens, timing)
    return _report(
        policy, DualPoint(0.0, lambda_d), ens, timing, constraints, residual.calls, 0,
        DelayStatus.ACTIVE, PowerStatus.ABSENT,
    )


def _solve_lambda_p(ens, timing, p_avg, lambda_d, ctl, counter):
    """lambda_p with S_1 = p_avg at fixed lambda_d, bisecting on log(lambda_p)."""

    def residual(u):
        counter[0] += 1
        S = _waterfilling_pass(math.exp(u), lambda_d, ens, timing)[2]
        return (S - p_avg) / p_avg

    # S_1 decreases in lambda_p, so the residual decreases in u
    lo = math.log(1e-12)
    hi = math.log(1e3 / p_avg)
    u = bisect(lambda u: -residual(u), lo, hi, ctl)
    return math.exp(u)


def solve_optimal(
    ens: ChannelEnsemble,
    timing: SlotTiming,
    constraints: Constraints,
    ctl: SolverControl = DEFAULT_CONTROL,
) -> SolveReport:
    """Maximize throughput over thresholds and power functions.

    The power budget is always binding (throughput strictly increases with
    power), so lambda_p > 0 is found by bisection for every candidate
    lambda_d. lambda_d = 0 is tried first; only if that violates the delay
    bound is lambda_d bisected until p_1 = 1/d_max.
    """
    if constraints.p_avg is None:
        raise ValueError("solve_optimal needs a power budget p_avg")
    _check_delay_feasible(ens, constraints.d_max)
    p_avg = constraints.p_avg
    target = _success_target(ens, constraints.d_max)
    inner = [0]

    lambda_p = _solve_lambda_p(ens, timing, p_avg, 0.0, ctl, inner)
    policy, U, S, p = _waterfilling_pass(lambda_p, 0.0, ens, timing)
    if p >= target:
        return _report(
            policy, DualPoint(lambda_p, 0.0), ens, timing, constraints, 0, inner[0],
            DelayStatus.INACTIVE, PowerStatus.ACTIVE,
        )

    def outer(ld):
        lp = _solve_lambda_p(ens, timing, p_avg, ld, ctl, inner)
        return _waterfilling_pass(lp, ld, ens, timing)[3] - target

    outer_counted = _Counter(outer)
    lambda_d = bisect(outer_counted, 0.0, max(U, ctl.tol), ctl)
    lambda_p = _solve_lambda_p(ens, timing, p_avg, lambda_d, ctl, inner)
    policy = _waterfilling_pass(lambda_p, lambda_d, ens, timing)[0]
    log.debug("solve_optimal: lambda_p=%g lambda_d=%g thresholds=%s", lambda_p, lambda_d, policy.thresholds)
    return _report(
        policy, DualPoint(lambda_p, lambda_d), ens, timing, constraints,
        outer_counted.calls, inner[0], DelayStatus.ACTIVE, PowerStatus.ACTIVE,
    )


def stationarity_residuals(
    report: SolveReport, ens: ChannelEnsemble, timing: SlotTiming
) -> np.ndarray:
    """Per-channel residual of the threshold optimality condition.

    Two-level: c_i log(1 + th_i) - max(r_i, 0) with
    r_i = U_{i+1} - lambda_d (1 - p_{i+1}).
    Water-filling: gamma_equation_lhs(th_i) - r_i with
    r_i = U_{i+1} - lambda_p S_{i+1} - lambda_d (1 - p_{i+1}).
    Suffix values are recomputed from the reported policy.
    """
    from .analytic import suffix_values

    policy = report.policy
    U, S, p = suffix_values(policy, ens, timing)
    c = timing.fractions(ens.count)
    lp, ld = report.duals.lambda_p, report.duals.lambda_d
    out = np.empty(ens.count)
    for i, th in enumerate(policy.thresholds):
        if isinstance(policy.power_rule, WaterFilling):
            r = U[i + 1] - lp * S[i + 1] - ld * (1.0 - p[i + 1])
            out[i] = gamma_equation_lhs(th, lp, c[i]) - r
        else:
            r = U[i + 1] - ld * (1.0 - p[i + 1])
            out[i] = c[i] * math.log1p(th) - max(r, 0.0)
    return out
