"""Acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line (also collected in the terminal
summary) and then asserts. Run with ``pytest tests/test_acceptance.py -s -v``.
"""

import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from crstop.analytic import evaluate, min_expected_delay, success_probability
from crstop.model import (
    ChannelEnsemble,
    Constraints,
    FadingLaw,
    SlotTiming,
    StoppingPolicy,
)
from crstop.sim import packet_delay_trace, simulate
from crstop.solver import (
    solve_optimal,
    solve_two_level,
    stationarity_residuals,
    unconstrained_two_level,
)
from crstop.special import exp_integral_e1, lambert_w0, lambert_w0_series

M, THETA, TAU = 10, 0.1, 0.05
D_MAX = 1.54
SEED = 20140601


def _instance(mean_gain):
    return ChannelEnsemble.homogeneous(M, THETA, mean_gain)


TIMING = SlotTiming(TAU)


def test_c1_minimum_delay(verdict):
    d = min_expected_delay(_instance(1.0))
    exact = 1.0 / (1.0 - 0.9**10)
    ok_exact = abs(d - exact) <= 1e-9
    ok_sig = float(f"{d:.3g}") == D_MAX
    verdict(
        "C1 minimum delay",
        ok_exact and ok_sig,
        f"min E[D]={d:.10f}, 1/(1-0.9^10)={exact:.10f}, 3 s.f.={d:.3g}",
    )
    assert ok_exact and ok_sig


def test_c2_delay_bounding(verdict):
    gains = [float(g) for g in range(1, 11)]
    worst_analytic = 0.0
    worst_z = 0.0
    min_free = math.inf
    for k, g in enumerate(gains):
        ens = _instance(g)
        rep = solve_two_level(ens, TIMING, D_MAX)
        worst_analytic = max(worst_analytic, rep.metrics.expected_delay)
        trace = np.asarray(packet_delay_trace(rep.policy, ens, TIMING, 10**5, seed=SEED + k))
        se = trace.std(ddof=1) / math.sqrt(trace.size)
        worst_z = max(worst_z, abs(trace.mean() - 1.5354) / se)
        min_free = min(min_free, unconstrained_two_level(ens, TIMING).metrics.expected_delay)
    ok_analytic = worst_analytic <= 1.5355 + 1e-6
    ok_sim = worst_z <= 3.0
    ok_free = min_free > D_MAX
    verdict(
        "C2 delay bounding",
        ok_analytic and ok_sim and ok_free,
        f"max analytic E[D]={worst_analytic:.6f} (need <=1.5355) [{'ok' if ok_analytic else 'FAIL'}]; "
        f"max |sim-1.5354|/se={worst_z:.2f} [{'ok' if ok_sim else 'FAIL'}]; "
        f"min unconstrained E[D]={min_free:.4f} (need >1.54) [{'ok' if ok_free else 'FAIL'}]",
    )
    assert ok_analytic, "constrained E[D] exceeds 1.5355"
    assert ok_sim
    assert ok_free


def test_c3_throughput_gap(verdict):
    gaps = []
    for g in (1.0, 2.0, 5.0, 10.0):
        ens = _instance(g)
        free = unconstrained_two_level(ens, TIMING).metrics.throughput
        tied = solve_two_level(ens, TIMING, D_MAX).metrics.throughput
        gaps.append((free - tied) / free)
    ok_level = gaps[0] < 0.04
    ok_trend = all(b <= a + 1e-6 for a, b in zip(gaps, gaps[1:]))
    verdict(
        "C3 throughput gap",
        ok_level and ok_trend,
        "gaps at 1,2,5,10 = " + ", ".join(f"{x:.4%}" for x in gaps),
    )
    assert ok_level and ok_trend


def _power_gain(g):
    ens = _instance(g)
    two = solve_two_level(ens, TIMING, D_MAX)
    opt = solve_optimal(ens, TIMING, Constraints(D_MAX, two.metrics.avg_power))
    return (opt.metrics.throughput - two.metrics.throughput) / two.metrics.throughput


def test_c4_power_control_gain(verdict):
    high = _power_gain(10.0)
    low = _power_gain(0.1)
    ok_high = high > 0.06
    ok_low = abs(low - 0.34) <= 0.08
    verdict(
        "C4 power-control gain",
        ok_high and ok_low,
        f"gain at mean gain 10 = {high:.3%} (need >6%) [{'ok' if ok_high else 'FAIL'}]; "
        f"gain at mean gain 0.1 = {low:.3%} (need 34+-8%) [{'ok' if ok_low else 'FAIL'}]",
    )
    assert ok_high, f"gain {high:.3%} at mean gain 10"
    assert ok_low, f"gain {low:.3%} at mean gain 0.1"


def _random_policy(rng, k):
    m = int(rng.integers(1, 7))
    ens = ChannelEnsemble(tuple(rng.uniform(0.05, 0.95, m)), FadingLaw(float(rng.uniform(0.2, 10.0))))
    timing = SlotTiming(float(rng.uniform(0.0, 0.9 / m)))
    g = ens.fading.mean_gain
    ths = rng.uniform(0.0, 2.0 * g, m)
    ths[rng.random(m) < 0.15] = math.inf
    if k % 2:
        pol = StoppingPolicy.water_filling(ths.tolist(), float(rng.uniform(0.05, 1.5) / g))
    else:
        pol = StoppingPolicy.constant(ths.tolist())
    return pol, ens, timing


def test_c5_analytic_vs_monte_carlo(verdict):
    rng = np.random.default_rng(SEED)
    failures = []
    checks = 0
    for k in range(20):
        pol, ens, timing = _random_policy(rng, k)
        m = evaluate(pol, ens, timing)
        est = simulate(pol, ens, timing, 10**6, seed=SEED + k)
        for name, got, se, want in (
            ("throughput", est.throughput_mean, est.throughput_se, m.throughput),
            ("power", est.power_mean, est.power_se, m.avg_power),
            ("success", est.success_rate, est.success_se, m.success_prob),
        ):
            checks += 1
            if abs(got - want) > 3 * se and not (se == 0 and got == want):
                failures.append(f"#{k} {name}")
    ok = len(failures) <= 2
    verdict("C5 analytic vs Monte Carlo", ok, f"{len(failures)}/{checks} outside 3 se {failures}")
    assert checks == 60 and ok


def _random_case(rng):
    m = int(rng.integers(1, 9))
    ens = ChannelEnsemble(tuple(rng.uniform(0.05, 0.9, m)), FadingLaw(float(rng.uniform(0.2, 8))))
    timing = SlotTiming(0.9 / m * float(rng.uniform(0.05, 1)))
    d_min = min_expected_delay(ens)
    d_free = unconstrained_two_level(ens, timing).metrics.expected_delay
    d_max = d_min + float(rng.uniform(0.05, 1.2)) * (d_free - d_min)
    return ens, timing, d_max


def test_c6_kkt_plug_back(verdict):
    rng = np.random.default_rng(7)
    cases = [(_instance(1.0), TIMING, D_MAX, None)]
    for _ in range(10):
        ens, timing, d_max = _random_case(rng)
        cases.append((ens, timing, d_max, float(rng.uniform(0.5, 2.0))))
    worst_stat = worst_cs = 0.0
    for ens, timing, d_max, scale in cases:
        two = solve_two_level(ens, timing, d_max)
        p_avg = two.metrics.avg_power * (scale or 1.0)
        opt = solve_optimal(ens, timing, Constraints(d_max, p_avg))
        for rep in (two, opt):
            worst_stat = max(worst_stat, float(np.max(np.abs(stationarity_residuals(rep, ens, timing)))))
            worst_cs = max(worst_cs, *rep.complementary_slackness)
    ok = worst_stat <= 1e-8 and worst_cs <= 1e-8
    verdict(
        "C6 KKT plug-back",
        ok,
        f"{len(cases)} instances x 2 solvers, max stationarity residual {worst_stat:.2e}, "
        f"max complementary slackness {worst_cs:.2e}",
    )
    assert ok


def test_c7_grid_oracle(verdict):
    theta = (0.5, 0.6)
    g = 1.0
    ens = ChannelEnsemble(theta, FadingLaw(g))
    c = TIMING.fractions(2)
    free = unconstrained_two_level(ens, TIMING).metrics
    d_min = min_expected_delay(ens)
    d_max = 0.5 * (d_min + free.expected_delay)  # constraint binds
    rep = solve_two_level(ens, TIMING, d_max)

    grid = np.arange(0.0, 8.0 + 1e-9, 0.005)
    stop = np.exp(-grid / g)
    rate = np.log1p(grid) * stop + np.exp(1 / g) * special.exp1((1 + grid) / g)
    q1 = theta[0] * stop[:, None]
    q2 = theta[1] * stop[None, :]
    U = theta[0] * c[0] * rate[:, None] + (1 - q1) * theta[1] * c[1] * rate[None, :]
    p = q1 + (1 - q1) * q2
    feasible = p >= 1.0 / d_max
    best = float(U[feasible].max())
    err = abs(best - rep.metrics.throughput)
    ok = err <= 1e-3 and rep.duals.lambda_d > 0
    verdict(
        "C7 grid oracle",
        ok,
        f"grid U={best:.6f}, solver U={rep.metrics.throughput:.6f}, |diff|={err:.2e}, "
        f"lambda_D={rep.duals.lambda_d:.4f}",
    )
    assert ok


def test_c8_special_functions(verdict):
    rng = np.random.default_rng(3)
    z = np.concatenate(
        [
            [-1 / math.e + 1e-9, -1 / math.e + 1e-12, 0.0],
            rng.uniform(-1 / math.e, 0.0, 300),
            rng.uniform(0.0, 10.0, 300),
            10.0 ** rng.uniform(1, 300, 397),
        ]
    )
    assert z.size == 1000
    worst_rt = 0.0
    for x in z.tolist():
        w = lambert_w0(x)
        worst_rt = max(worst_rt, abs(w * math.exp(w) - x) / max(1.0, abs(x)) if w < 700 else
                       abs(w + math.log(w) - math.log(x)))
    worst_series = max(abs(lambert_w0_series(x) - lambert_w0(x)) for x in np.linspace(-0.3, 0.3, 201))
    worst_e1 = 0.0
    for x in np.geomspace(1e-3, 50.0, 20).tolist():
        ref = integrate.quad(lambda t: math.exp(-t) / t, x, math.inf, epsabs=0, epsrel=1e-13, limit=500)[0]
        worst_e1 = max(worst_e1, abs(exp_integral_e1(x) - ref) / ref)
    ok = worst_rt <= 1e-12 and worst_series <= 1e-9 and worst_e1 <= 1e-8
    verdict(
        "C8 special functions",
        ok,
        f"W round-trip {worst_rt:.1e}, series gap {worst_series:.1e}, E1 rel err {worst_e1:.1e}",
    )
    assert ok


def test_c9_geometric_delay(verdict):
    ens = _instance(1.0)
    pol = solve_two_level(ens, TIMING, D_MAX).policy
    p = success_probability(pol, ens)
    d = np.asarray(packet_delay_trace(pol, ens, TIMING, 10**5, seed=SEED))
    n = d.size
    # bins 1..K with the tail pooled so every expected count is >= 5
    k_max = 1
    while n * p * (1 - p) ** k_max >= 5 and (n * (1 - p) ** (k_max + 1)) >= 5:
        k_max += 1
    obs = [np.count_nonzero(d == k) for k in range(1, k_max + 1)] + [np.count_nonzero(d > k_max)]
    exp = [n * p * (1 - p) ** (k - 1) for k in range(1, k_max + 1)] + [n * (1 - p) ** k_max]
    res = stats.chisquare(obs, exp)
    ok = res.pvalue > 0.01
    verdict(
        "C9 geometric delay",
        ok,
        f"p1={p:.6f}, {len(obs)} bins, chi2={res.statistic:.2f}, p-value={res.pvalue:.3f}",
    )
    assert ok
