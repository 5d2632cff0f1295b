"""Delay-constrained optimal stopping and power control for a radio that
senses M channels one after another within each time slot."""

from .analytic import (
    AnalyticMetrics,
    evaluate,
    expected_delay,
    expected_power,
    expected_throughput,
    min_expected_delay,
    success_probability,
)
from .errors import (
    DomainError,
    InfeasibleError,
    InfiniteDelayError,
    NoBracketError,
    NonConvergenceError,
)
from .model import (
    CONSTANT_ONE,
    ChannelEnsemble,
    ConstantOne,
    Constraints,
    FadingKind,
    FadingLaw,
    SlotTiming,
    StoppingPolicy,
    WaterFilling,
)
from .sim import SimEstimates, packet_delay_trace, simulate
from .solver import (
    DualPoint,
    SolveReport,
    SolverControl,
    solve_optimal,
    solve_two_level,
    thresholds_two_level,
    thresholds_waterfilling,
    unconstrained_two_level,
)

__version__ = "0.1.0"
