"""Exact expected throughput, power, success probability and delay of a
stopping policy.

Every quantity obeys the same backward recursion over the sensing order,
starting from zero past the last channel::

    X_i = theta_i * c_i * I_i + (1 - theta_i * Fbar(th_i)) * X_{i+1}

where I_i is the per-stage integral of the rate (throughput), of the power
(average power) or 1/c_i (success probability). For exponential fading the
stage integrals have closed forms in terms of E1; other fading kinds fall
back to adaptive quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import InfeasibleError
from .model import (
    ChannelEnsemble,
    ConstantOne,
    FadingKind,
    FadingLaw,
    PowerRule,
    SlotTiming,
    StoppingPolicy,
    WaterFilling,
)
from .special import exp_integral_e1_scaled

__all__ = [
    "AnalyticMetrics",
    "StageIntegrals",
    "stage_integrals",
    "stage_integrals_quadrature",
    "suffix_values",
    "evaluate",
    "success_probability",
    "expected_delay",
    "min_expected_delay",
    "expected_power",
    "expected_throughput",
]


@dataclass(frozen=True)
class AnalyticMetrics:
    throughput: float
    avg_power: float
    success_prob: float
    expected_delay: float  # math.inf when success_prob == 0


@dataclass(frozen=True)
class StageIntegrals:
    """Integrals over gains above a threshold for one channel.

    stop_prob = Fbar(th); power = int P(g) f(g) dg; rate = int log(1 + P(g) g) f(g) dg.
    """

    stop_prob: float
    power: float
    rate: float


_ZERO_STAGE = StageIntegrals(0.0, 0.0, 0.0)


def _closed_form(threshold: float, law: FadingLaw, rule: PowerRule) -> StageIntegrals:
    g = law.mean_gain
    stop = math.exp(-threshold / g)
    if isinstance(rule, ConstantOne):
        # int_a^inf log(1+x) f = log(1+a) e^{-a/g} + e^{1/g} E1((1+a)/g)
        rate = stop * (math.log1p(threshold) + exp_integral_e1_scaled((1.0 + threshold) / g))
        return StageIntegrals(stop, stop, rate)
    lam = rule.cutoff
    a = max(threshold, lam)
    tail = math.exp(-a / g)
    if tail == 0.0:
        return StageIntegrals(stop, 0.0, 0.0)
    e1s = exp_integral_e1_scaled(a / g)  # e^{a/g} E1(a/g)
    power = tail * (1.0 / lam - e1s / g)
    rate = tail * (math.log(a / lam) + e1s)
    return StageIntegrals(stop, max(power, 0.0), rate)


def stage_integrals_quadrature(
    threshold: float, law: FadingLaw, rule: PowerRule, tol: float = 1e-10
) -> StageIntegrals:
    """Same integrals by adaptive Gauss-Kronrod quadrature.

    Integrates over [a, a + 40 mean_gain]; the neglected tail is below
    exp(-40) relative for light-tailed gains.
    """
    if math.isinf(threshold):
        return _ZERO_STAGE
    g = law.mean_gain
    lo = threshold
    if isinstance(rule, WaterFilling):
        lo = max(threshold, rule.cutoff)
    hi = lo + 40.0 * g

    def power_integrand(x):
        return rule.power(x) * law.pdf(x)

    def rate_integrand(x):
        return math.log1p(rule.power(x) * x) * law.pdf(x)

    opts = dict(epsabs=tol, epsrel=1e-12, limit=200)
    stop = integrate.quad(law.pdf, threshold, threshold + 40.0 * g, **opts)[0]
    power = integrate.quad(power_integrand, lo, hi, **opts)[0]
    rate = integrate.quad(rate_integrand, lo, hi, **opts)[0]
    return StageIntegrals(stop, power, rate)


def stage_integrals(threshold: float, law: FadingLaw, rule: PowerRule) -> StageIntegrals:
    if math.isinf(threshold):
        return _ZERO_STAGE
    if law.kind is FadingKind.EXPONENTIAL:
        return _closed_form(threshold, law, rule)
    return stage_integrals_quadrature(threshold, law, rule)


def suffix_values(policy: StoppingPolicy, ens: ChannelEnsemble, timing: SlotTiming):
    """Suffix recursions for all i.

    Returns arrays ``(U, S, p)`` of length M+1; entry i (0-based) is the
    value for channels i+1..M, and entry M is zero.
    """
    policy.check_matches(ens)
    m = ens.count
    c = timing.fractions(m)
    U = np.zeros(m + 1)
    S = np.zeros(m + 1)
    p = np.zeros(m + 1)
    for i in range(m - 1, -1, -1):
        st = stage_integrals(policy.thresholds[i], ens.fading, policy.power_rule)
        theta = ens.free_prob[i]
        q = theta * st.stop_prob
        U[i] = theta * c[i] * st.rate + (1.0 - q) * U[i + 1]
        S[i] = theta * c[i] * st.power + (1.0 - q) * S[i + 1]
        p[i] = q + (1.0 - q) * p[i + 1]
    return U, S, p


def _delay(p: float) -> float:
    return math.inf if p <= 0.0 else 1.0 / p


def evaluate(policy: StoppingPolicy, ens: ChannelEnsemble, timing: SlotTiming) -> AnalyticMetrics:
    U, S, p = suffix_values(policy, ens, timing)
    p1 = min(max(float(p[0]), 0.0), 1.0)
    return AnalyticMetrics(float(U[0]), float(S[0]), p1, _delay(p1))


def success_probability(policy: StoppingPolicy, ens: ChannelEnsemble) -> float:
    """Probability that some channel is used in a slot (not blocked)."""
    policy.check_matches(ens)
    p = 0.0
    for theta, th in zip(reversed(ens.free_prob), reversed(policy.thresholds)):
        q = theta * ens.fading.ccdf(th)
        p = q + (1.0 - q) * p
    return p


def expected_delay(policy: StoppingPolicy, ens: ChannelEnsemble) -> float:
    """Mean number of slots until a packet goes through, 1/p_1.

    Returns ``math.inf`` when no slot can ever succeed.
    """
    return _delay(success_probability(policy, ens))


def min_expected_delay(ens: ChannelEnsemble) -> float:
    """Smallest expected delay of any policy (all thresholds zero)."""
    blocked = math.prod(1.0 - t for t in ens.free_prob)
    if blocked >= 1.0:
        raise InfeasibleError("no channel is ever free", threshold=math.inf)
    return 1.0 / (1.0 - blocked)


def expected_power(policy: StoppingPolicy, ens: ChannelEnsemble, timing: SlotTiming) -> float:
    """E[c_k P_k] over the stop index k (zero on blocked slots)."""
    return float(suffix_values(policy, ens, timing)[1][0])


def expected_throughput(policy: StoppingPolicy, ens: ChannelEnsemble, timing: SlotTiming) -> float:
    """E[c_k log(1 + P_k g_k)] in nats per slot."""
    return float(suffix_values(policy, ens, timing)[0][0])
