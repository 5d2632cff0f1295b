"""Problem-instance types: fading law, channel ensemble, slot timing,
constraints and stopping policies.

All types are frozen dataclasses and can be shared freely between threads.
Channel indices in docstrings are 1-based (channel 1 is sensed first);
Python sequences are 0-based as usual.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import DomainError

__all__ = [
    "FadingKind",
    "FadingLaw",
    "ChannelEnsemble",
    "SlotTiming",
    "Constraints",
    "ConstantOne",
    "WaterFilling",
    "PowerRule",
    "CONSTANT_ONE",
    "StoppingPolicy",
]


class FadingKind(enum.Enum):
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class FadingLaw:
    """Distribution of the per-channel power gain (SNR per unit power).

    Only exponential gains (Rayleigh amplitude) ship; ``mean_gain`` is the
    average gain with unit noise variance.
    """

    mean_gain: float
    kind: FadingKind = FadingKind.EXPONENTIAL

    def __post_init__(self):
        if not (self.mean_gain > 0 and math.isfinite(self.mean_gain)):
            raise ValueError(f"mean_gain must be positive and finite, got {self.mean_gain!r}")
        object.__setattr__(self, "kind", FadingKind(self.kind))

    def pdf(self, x: float) -> float:
        if x < 0:
            raise DomainError(f"pdf undefined for negative gain {x!r}")
        g = self.mean_gain
        return math.exp(-x / g) / g

    def ccdf(self, x: float) -> float:
        """Pr[gain > x]."""
        if x < 0:
            raise DomainError(f"ccdf undefined for negative gain {x!r}")
        if math.isinf(x):
            return 0.0
        return math.exp(-x / self.mean_gain)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.exponential(self.mean_gain, size)


@dataclass(frozen=True)
class ChannelEnsemble:
    """The M channels in sensing order.

    ``free_prob[i]`` is the probability that channel i+1 is idle in a slot.
    Gains are i.i.d. across channels with law ``fading``.
    """

    free_prob: tuple[float, ...]
    fading: FadingLaw

    def __post_init__(self):
        probs = tuple(float(t) for t in self.free_prob)
        if not probs:
            raise ValueError("need at least one channel")
        for t in probs:
            if not 0.0 < t <= 1.0:
                raise ValueError(f"free probabilities must lie in (0, 1], got {t!r}")
        object.__setattr__(self, "free_prob", probs)

    @classmethod
    def homogeneous(cls, count: int, theta: float, mean_gain: float) -> "ChannelEnsemble":
        if count < 1:
            raise ValueError("count must be >= 1")
        return cls((theta,) * count, FadingLaw(mean_gain))

    @property
    def count(self) -> int:
        return len(self.free_prob)

    def with_mean_gain(self, mean_gain: float) -> "ChannelEnsemble":
        return ChannelEnsemble(self.free_prob, FadingLaw(mean_gain, self.fading.kind))


@dataclass(frozen=True)
class SlotTiming:
    """Sensing time as a fraction of the slot length.

    After sensing i channels a fraction ``1 - i * tau_over_T`` of the slot is
    left for transmission.
    """

    tau_over_T: float

    def __post_init__(self):
        if not 0.0 < self.tau_over_T < 1.0:
            raise ValueError(f"tau_over_T must lie in (0, 1), got {self.tau_over_T!r}")

    def remaining_fraction(self, i: int) -> float:
        """c_i for 1-based channel index i."""
        if i < 1:
            raise ValueError("channel index is 1-based")
        c = 1.0 - i * self.tau_over_T
        if c <= 0.0:
            raise ValueError(f"no time left to transmit after sensing {i} channels")
        return c

    def fractions(self, count: int) -> np.ndarray:
        """Array of c_1..c_M; fails unless M * tau_over_T < 1."""
        if count * self.tau_over_T >= 1.0:
            raise ValueError(
                f"{count} channels with tau/T={self.tau_over_T} leave no transmission time"
            )
        return 1.0 - self.tau_over_T * np.arange(1, count + 1)


@dataclass(frozen=True)
class Constraints:
    """Average-delay bound (slots) and optional average-power budget."""

    d_max: float
    p_avg: float | None = None

    def __post_init__(self):
        if not self.d_max >= 1.0:
            raise ValueError(f"d_max must be >= 1 slot, got {self.d_max!r}")
        if self.p_avg is not None and not self.p_avg > 0:
            raise ValueError(f"p_avg must be positive, got {self.p_avg!r}")


@dataclass(frozen=True)
class ConstantOne:
    """Unit power on the selected channel."""

    def power(self, gamma):
        return np.ones_like(gamma, dtype=float) if isinstance(gamma, np.ndarray) else 1.0


@dataclass(frozen=True)
class WaterFilling:
    """Power (level - 1/gamma)^+ with water level ``level`` = 1/lambda_P."""

    level: float

    def __post_init__(self):
        if not (self.level > 0 and math.isfinite(self.level)):
            raise ValueError(f"water level must be positive and finite, got {self.level!r}")

    @property
    def cutoff(self) -> float:
        """Gain below which no power is spent (lambda_P)."""
        return 1.0 / self.level

    def power(self, gamma):
        if isinstance(gamma, np.ndarray):
            with np.errstate(divide="ignore"):
                return np.maximum(self.level - 1.0 / gamma, 0.0)
        if gamma <= 0:
            return 0.0
        return max(self.level - 1.0 / gamma, 0.0)


CONSTANT_ONE = ConstantOne()

PowerRule = Union[ConstantOne, WaterFilling]


@dataclass(frozen=True)
class StoppingPolicy:
    """Per-channel gain thresholds plus the power rule.

    A channel found idle is used iff its gain exceeds its threshold; an
    infinite threshold means the channel is always skipped.
    """

    thresholds: tuple[float, ...]
    power_rule: PowerRule = field(default=CONSTANT_ONE)

    def __post_init__(self):
        ths = tuple(float(t) for t in self.thresholds)
        for t in ths:
            if math.isnan(t) or t < 0:
                raise ValueError(f"thresholds must be nonnegative, got {t!r}")
        object.__setattr__(self, "thresholds", ths)

    @classmethod
    def constant(cls, thresholds: Sequence[float]) -> "StoppingPolicy":
        return cls(tuple(thresholds), CONSTANT_ONE)

    @classmethod
    def water_filling(cls, thresholds: Sequence[float], lambda_p: float) -> "StoppingPolicy":
        return cls(tuple(thresholds), WaterFilling(1.0 / lambda_p))

    @property
    def count(self) -> int:
        return len(self.thresholds)

    def check_matches(self, ens: ChannelEnsemble) -> None:
        if self.count != ens.count:
            raise ValueError(
                f"policy has {self.count} thresholds but ensemble has {ens.count} channels"
            )
