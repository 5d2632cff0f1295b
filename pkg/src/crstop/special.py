"""Principal-branch Lambert W and the exponential integral E1.

Real arguments only. ``lambert_w0`` is the production routine; the
Maclaurin series ``lambert_w0_series`` is kept as an independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

__all__ = [
    "SeriesControl",
    "lambert_w0",
    "lambert_w0_series",
    "exp_integral_e1",
    "exp_integral_e1_scaled",
]

EULER_GAMMA = 0.5772156649015329

# 1/e split into a double and its rounding error, for e*z + 1 near the branch point.
_INV_E_HI = 0.36787944117144233
_INV_E_LO = -1.2428753672788363e-17

_BRANCH_SLACK = 1e-12
_BRANCH_WINDOW = 1e-6

# W0 around z = -1/e in powers of p = sqrt(2(e z + 1)).
_BRANCH_COEFFS = (
    -1.0,
    1.0,
    -1.0 / 3.0,
    11.0 / 72.0,
    -43.0 / 540.0,
    769.0 / 17280.0,
    -221.0 / 8505.0,
    680863.0 / 43545600.0,
    -1963.0 / 204120.0,
    226287557.0 / 37623398400.0,
)


@dataclass(frozen=True)
class SeriesControl:
    max_terms: int = 10_000
    abs_tol: float = 1e-16
    max_newton_iters: int = 60

    def __post_init__(self):
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")


DEFAULT_SERIES = SeriesControl()


def _branch_series(p: float) -> float:
    w = 0.0
    for coef in reversed(_BRANCH_COEFFS):
        w = w * p + coef
    return w


def lambert_w0(z: float, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """Principal branch W0(z) for real z >= -1/e.

    Uses the branch-point expansion right next to -1/e, Halley iteration on
    w*exp(w) = z for moderate z and Newton on w + log(w) = log(z) for z > 1
    (no overflow for large z).
    """
    if math.isnan(z):
        raise DomainError("lambert_w0 of NaN")
    if math.isinf(z):
        if z > 0:
            return math.inf
        raise DomainError("lambert_w0 undefined at -inf")
    # e*z + 1 evaluated without cancellation
    ez1 = math.e * ((z + _INV_E_HI) + _INV_E_LO)
    if ez1 < 0.0:
        if ez1 < -math.e * _BRANCH_SLACK:
            raise DomainError(f"lambert_w0 needs z >= -1/e, got {z!r}")
        return -1.0
    if z == 0.0:
        return 0.0
    p = math.sqrt(2.0 * ez1)
    if ez1 <= math.e * _BRANCH_WINDOW:
        return _branch_series(p)

    if z > 1.0:
        lz = math.log(z)
        if z < 3.0:
            w = 0.5 * lz + 0.56
        else:
            llz = math.log(lz)
            w = lz - llz + llz / lz
        for _ in range(ctl.max_newton_iters):
            step = (w + math.log(w) - lz) * w / (w + 1.0)
            w -= step
            if abs(step) <= 4e-16 * w:
                break
        return w

    if z < -0.25:
        w = _branch_series(p)
    else:
        w = math.log1p(z)
    for _ in range(ctl.max_newton_iters):
        ew = math.exp(w)
        f = w * ew - z
        wp1 = w + 1.0
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        step = f / denom
        w -= step
        if abs(step) <= 4e-16 * (1.0 + abs(w)):
            break
    return w


def lambert_w0_series(z: float, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """Maclaurin series sum_{n>=1} (-n)^(n-1) z^n / n!, for |z| < 1/e.

    Consecutive terms satisfy a_{n+1} = -z (1 + 1/n)^(n-1) a_n, which keeps
    every intermediate finite. Summation stops once the geometric tail bound
    falls below ``ctl.abs_tol``.
    """
    if not abs(z) < 1.0 / math.e:
        raise DomainError(f"series diverges for |z| >= 1/e, got {z!r}")
    if z == 0.0:
        return 0.0
    ratio_limit = abs(z) * math.e
    term = z
    total = z
    for n in range(1, ctl.max_terms):
        term *= -z * (1.0 + 1.0 / n) ** (n - 1)
        total += term
        if abs(term) / (1.0 - ratio_limit) <= ctl.abs_tol:
            break
    return total


def _e1_series(x: float) -> float:
    # E1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k k!)
    total = 0.0
    term = 1.0
    for k in range(1, 200):
        term *= -x / k
        contrib = term / k
        total += contrib
        if abs(contrib) <= 1e-17 * abs(total):
            break
    return -EULER_GAMMA - math.log(x) - total


def _e1_scaled_cf(x: float) -> float:
    # exp(x) E1(x) by the modified Lentz continued fraction; good for x >= 1
    tiny = 1e-300
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) <= 1e-16:
            break
    return h


def exp_integral_e1(x: float) -> float:
    """E1(x) = int_x^inf exp(-t)/t dt for x > 0."""
    if not x > 0:
        raise DomainError(f"E1 needs x > 0, got {x!r}")
    if math.isinf(x):
        return 0.0
    if x < 1.0:
        return _e1_series(x)
    return math.exp(-x) * _e1_scaled_cf(x)


def exp_integral_e1_scaled(x: float) -> float:
    """exp(x) * E1(x), finite for large x where E1 itself underflows."""
    if not x > 0:
        raise DomainError(f"E1 needs x > 0, got {x!r}")
    if math.isinf(x):
        return 0.0
    if x < 1.0:
        return math.exp(x) * _e1_series(x)
    return _e1_scaled_cf(x)
