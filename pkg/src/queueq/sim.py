"""Exact single-day simulation of the FCFS queue.

One day runs through slots 0..T. Arrivals land just after a slot opens,
the server removes one unit of backlog at each slot boundary while work
remains, and same-slot customers are served in uniformly random order.
A customer's waiting time is therefore the backlog found on arrival plus
the service times of the same-slot customers ranked ahead:

    W = V_{t-} + sum of services of same-slot predecessors.

Days are independent; reproducibility across runs and parallel schedules
comes from one counter-based stream per day, keyed by (seed, day).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .service import ServiceDist
from .workload import ArrivalDist

POISSON_INVERSION_MAX = 30.0


def day_stream(seed: int, day: int) -> np.random.Generator:
    """Counter-based stream for one day; stable under parallel scheduling."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, day], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def poisson_count(rng: np.random.Generator, mu: float) -> int:
    """Exact Poisson draw: sequential inversion for small means, else the
    generator's rejection sampler."""
    if mu < 0.0:
        raise InvalidParameterError(f"mean must be nonnegative, got {mu}")
    if mu == 0.0:
        return 0
    if mu > POISSON_INVERSION_MAX:
        return int(rng.poisson(mu))
    u = rng.random()
    k = 0
    term = math.exp(-mu)
    cum = term
    while u > cum:
        k += 1
        term *= mu / k
        cum += term
        if k > 10_000:  # cumulative sum exhausted by round-off
            break
    return k


@dataclass(frozen=True)
class DayOutcome:
    """Per-customer outcomes and the backlog trace of one day.

    Customer arrays are aligned and ordered by (slot, service rank).
    ``workload_trace[t]`` is the backlog just before slot t, recorded
    through the first post-period slot where it hits zero.
    """

    ids: np.ndarray
    slots: np.ndarray
    ranks: np.ndarray
    services: np.ndarray
    waits: np.ndarray
    workload_trace: np.ndarray
    arrivals_per_slot: np.ndarray


def simulate_day(
    arrivals, dist: ServiceDist, rng: np.random.Generator, T: int | None = None
) -> DayOutcome:
    """Run one day for the given (customer id, slot) arrivals.

    ``T`` fixes the acceptance horizon for the backlog trace; it defaults
    to the latest arrival slot.
    """
    ids = np.array([a[0] for a in arrivals], dtype=np.int64)
    slots = np.array([a[1] for a in arrivals], dtype=np.int64)
    if T is None:
        T = int(slots.max()) if len(slots) else 0
    if len(slots) and (slots.min() < 0 or slots.max() > T):
        raise InvalidParameterError(f"arrival slots must lie in 0..{T}")

    out_ids = np.empty(len(ids), dtype=np.int64)
    out_slots = np.empty(len(ids), dtype=np.int64)
    out_ranks = np.empty(len(ids), dtype=np.int64)
    out_services = np.empty(len(ids), dtype=np.int64)
    out_waits = np.empty(len(ids), dtype=np.int64)
    arrivals_per_slot = np.bincount(slots, minlength=T + 1) if len(slots) else np.zeros(T + 1, dtype=np.int64)

    trace = [0]
    backlog = 0
    pos = 0
    for t in range(T + 1):
        group = np.flatnonzero(slots == t)
        if len(group):
            group = group[rng.permutation(len(group))]
            services = dist.sample(rng, len(group))
            ahead = 0
            for rank, g in enumerate(group):
                out_ids[pos] = ids[g]
                out_slots[pos] = t
                out_ranks[pos] = rank
                out_services[pos] = services[rank]
                out_waits[pos] = backlog + ahead
                ahead += int(services[rank])
                pos += 1
            backlog += ahead
        backlog = max(backlog - 1, 0)
        trace.append(backlog)
    while trace[-1] > 0:
        trace.append(trace[-1] - 1)

    return DayOutcome(
        ids=out_ids, slots=out_slots, ranks=out_ranks,
        services=out_services, waits=out_waits,
        workload_trace=np.array(trace, dtype=np.int64),
        arrivals_per_slot=arrivals_per_slot.astype(np.int64),
    )


@dataclass(frozen=True)
class MonteCarloWaits:
    """Per-slot wait estimates aggregated over simulated days.

    ``stderr`` uses day-level clustering (waits within a day are
    correlated through the shared backlog), so mean +/- 3 stderr is an
    honest interval for the per-slot expected wait. ``v0_freq`` is the
    fraction of days whose backlog was zero just before each slot.
    """

    days: int
    counts: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    v0_freq: np.ndarray


def monte_carlo_waits(
    p: ArrivalDist, lam: float, dist: ServiceDist, days: int, seed: int = 0
) -> MonteCarloWaits:
    """Estimate per-slot expected waits by simulating whole days.

    Each day draws a Poisson(lam) customer count, assigns slots i.i.d.
    from ``p``, and runs the exact day simulation.
    """
    if days < 1:
        raise InvalidParameterError(f"days must be >= 1, got {days}")
    if lam <= 0.0:
        raise InvalidParameterError(f"lambda must be positive, got {lam}")
    T = p.horizon
    n = np.zeros(T + 1, dtype=np.int64)
    wait_sum = np.zeros(T + 1)          # sum over days of S_d(t)
    wait_sq = np.zeros(T + 1)           # sum of S_d(t)^2
    cross = np.zeros(T + 1)             # sum of S_d(t) * n_d(t)
    nn = np.zeros(T + 1)                # sum of n_d(t)^2
    v0_count = np.zeros(T + 1, dtype=np.int64)

    for day in range(days):
        rng = day_stream(seed, day)
        m = poisson_count(rng, lam)
        if m == 0:
            v0_count += 1
            continue
        slots = rng.choice(T + 1, size=m, p=p.probs)
        outcome = simulate_day(list(zip(range(m), slots)), dist, rng, T=T)
        v0_count += outcome.workload_trace[:T + 1] == 0
        day_n = outcome.arrivals_per_slot
        day_sum = np.bincount(outcome.slots, weights=outcome.waits, minlength=T + 1)
        n += day_n
        wait_sum += day_sum
        wait_sq += day_sum ** 2
        cross += day_sum * day_n
        nn += day_n.astype(float) ** 2

    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(n > 0, wait_sum / np.maximum(n, 1), np.nan)
        var_cluster = wait_sq - 2.0 * mean * cross + mean ** 2 * nn
        stderr = np.where(n > 0, np.sqrt(np.maximum(var_cluster, 0.0)) / np.maximum(n, 1), np.nan)
    return MonteCarloWaits(
        days=days, counts=n, mean=mean, stderr=stderr,
        v0_freq=v0_count / days,
    )
