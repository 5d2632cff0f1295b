"""Slot-level Monte Carlo simulation of sequential sensing and stopping.

Each slot draws channel states b_i ~ Bernoulli(theta_i) and gains
g_i ~ FadingLaw for all M channels, scans channels in order and stops at
the first idle channel whose gain exceeds its threshold. Nothing is shared
between slots, so slots are split into batches that run independently.

Random streams: numpy ``PCG64`` seeded from ``SeedSequence(seed,
spawn_key=(batch,))``. A batch's stream depends only on (seed, batch), so
results are bit-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import InfiniteDelayError
from .model import ChannelEnsemble, SlotTiming, StoppingPolicy

__all__ = [
    "SlotOutcome",
    "SlotOutcomes",
    "SimEstimates",
    "draw_slots",
    "simulate",
    "packet_delay_trace",
]

DEFAULT_BATCHES = 32
_MAX_BATCH_ROWS = 1 << 16


@dataclass(frozen=True)
class SlotOutcome:
    stop_index: int | None  # 1-based channel used, None for a blocked slot
    rate: float
    power_used: float


@dataclass(frozen=True)
class SlotOutcomes:
    """Columnar record of consecutive slots; ``stop_index`` is 0 when blocked."""

    stop_index: np.ndarray
    rate: np.ndarray
    power_used: np.ndarray

    def __len__(self):
        return len(self.stop_index)

    def __iter__(self) -> Iterator[SlotOutcome]:
        for k, r, pw in zip(self.stop_index.tolist(), self.rate.tolist(), self.power_used.tolist()):
            yield SlotOutcome(k if k > 0 else None, r, pw)


@dataclass(frozen=True)
class SimEstimates:
    """Sample means with batch-means standard errors.

    Delay is in slots and counts the successful slot (mean 1/p); the
    alternative "wasted slots" convention is ``wasted_slots_mean``.
    Infinite delay is reported as ``math.inf``.
    """

    slots: int
    batches: int
    throughput_mean: float
    throughput_se: float
    power_mean: float
    power_se: float
    success_rate: float
    success_se: float
    delay_mean: float
    delay_se: float
    successes: int

    @property
    def wasted_slots_mean(self) -> float:
        return self.delay_mean - 1.0


def _slot_kernel(policy, ens, c, rng, n):
    m = ens.count
    theta = np.asarray(ens.free_prob)
    th = np.asarray(policy.thresholds)
    free = rng.random((n, m)) < theta
    gains = ens.fading.sample(rng, (n, m))
    usable = free & (gains > th)
    used = usable.any(axis=1)
    k = usable.argmax(axis=1)
    g = gains[np.arange(n), k]
    power = np.where(used, policy.power_rule.power(g), 0.0)
    ck = c[k]
    rate = np.where(used, ck * np.log1p(power * g), 0.0)
    return np.where(used, k + 1, 0), rate, ck * power


def _batch_stream(seed: int, batch: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(batch,))))


def draw_slots(
    policy: StoppingPolicy,
    ens: ChannelEnsemble,
    timing: SlotTiming,
    slots: int,
    seed: int,
    batch: int = 0,
) -> SlotOutcomes:
    """Outcomes of ``slots`` consecutive slots from stream (seed, batch)."""
    if slots < 1:
        raise ValueError("slots must be >= 1")
    policy.check_matches(ens)
    c = timing.fractions(ens.count)
    rng = _batch_stream(seed, batch)
    parts = []
    left = slots
    while left:
        n = min(left, _MAX_BATCH_ROWS)
        parts.append(_slot_kernel(policy, ens, c, rng, n))
        left -= n
    k, rate, power = (np.concatenate(col) for col in zip(*parts))
    return SlotOutcomes(k, rate, power)


def _batch_sums(policy, ens, timing, n, seed, batch):
    out = draw_slots(policy, ens, timing, n, seed, batch)
    return n, out.rate.sum(), out.power_used.sum(), int(np.count_nonzero(out.stop_index))


def _split(slots, batches):
    base, extra = divmod(slots, batches)
    return [base + (1 if b < extra else 0) for b in range(batches)]


def simulate(
    policy: StoppingPolicy,
    ens: ChannelEnsemble,
    timing: SlotTiming,
    slots: int,
    seed: int,
    batches: int = DEFAULT_BATCHES,
    workers: int = 1,
) -> SimEstimates:
    """Monte Carlo estimates of throughput, power, success rate and delay.

    Standard errors come from the spread of ``batches`` batch means (fewer
    batches if ``slots`` is small; with a single batch the errors are
    infinite). The delay estimate is slots per success, with a delta-method
    error.
    """
    if slots < 1:
        raise ValueError("slots must be >= 1")
    policy.check_matches(ens)
    nb = max(1, min(batches, slots))
    sizes = _split(slots, nb)
    jobs = [(policy, ens, timing, n, seed, b) for b, n in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            sums = list(pool.map(lambda a: _batch_sums(*a), jobs))
    else:
        sums = [_batch_sums(*a) for a in jobs]

    n = np.array([s[0] for s in sums], dtype=float)
    rate = np.array([s[1] for s in sums])
    power = np.array([s[2] for s in sums])
    succ = np.array([s[3] for s in sums], dtype=float)

    def mean_se(total):
        mean = total.sum() / slots
        if nb < 2:
            return float(mean), math.inf
        return float(mean), float(np.std(total / n, ddof=1) / math.sqrt(nb))

    u, u_se = mean_se(rate)
    s, s_se = mean_se(power)
    p, p_se = mean_se(succ)
    if p > 0:
        d, d_se = 1.0 / p, p_se / (p * p)
    else:
        d, d_se = math.inf, math.inf
    return SimEstimates(
        slots=slots,
        batches=nb,
        throughput_mean=u,
        throughput_se=u_se,
        power_mean=s,
        power_se=s_se,
        success_rate=p,
        success_se=p_se,
        delay_mean=d,
        delay_se=d_se,
        successes=int(succ.sum()),
    )


def packet_delay_trace(
    policy: StoppingPolicy,
    ens: ChannelEnsemble,
    timing: SlotTiming,
    packets: int,
    seed: int,
    max_slots_per_packet: int = 10**7,
    chunk: int = 1 << 15,
) -> list[int]:
    """Slots spent on each of ``packets`` consecutive packets.

    One packet is delivered per successful slot; a packet's delay counts
    the blocked slots before it plus its own slot. Raises
    ``InfiniteDelayError`` when a packet sees ``max_slots_per_packet``
    blocked slots in a row.
    """
    if packets < 1:
        raise ValueError("packets must be >= 1")
    policy.check_matches(ens)
    c = timing.fractions(ens.count)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    delays: list[int] = []
    run = 0  # blocked slots carried over from the previous chunk
    while len(delays) < packets:
        k, _, _ = _slot_kernel(policy, ens, c, rng, chunk)
        hits = np.flatnonzero(k)
        if hits.size == 0:
            run += chunk
            if run >= max_slots_per_packet:
                raise InfiniteDelayError(
                    f"no successful slot in {run} consecutive slots"
                )
            continue
        gaps = np.diff(hits, prepend=-1)
        gaps[0] += run
        if gaps.max() > max_slots_per_packet:
            raise InfiniteDelayError(f"a packet waited more than {max_slots_per_packet} slots")
        delays.extend(gaps.tolist())
        run = chunk - 1 - int(hits[-1])
    return delays[:packets]
