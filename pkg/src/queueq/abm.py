"""Agent-based learning model of repeated queue joining.

A fixed pool of N potential customers plays the arrival game day after
day. Each day every customer independently joins with probability
``lambda / N``. A joining customer either exploits (probability
``theta(a)`` where ``a`` counts their lifetime visits): pick uniformly
among the slots with their lowest experienced mean wait; or explores:
pick a slot uniformly. Waits come from the exact day simulation, and all
per-slot counts and wait sums accumulate for life.

``theta`` is a sigmoid on the half line,

    theta(x) = exp(c1 / (1 - exp(c2 x))),  theta(0) = 0,

with c1 fixed so that theta equals 1/3 at its inflection point and c2
chosen to place that inflection at a requested ``eta``.

Slots never visited have an experienced mean wait of zero by the
``max(1, visits)`` convention, so they count as minimizers whenever every
sampled slot has waited at all; this built-in drive to try unexplored
slots is kept by default (``argmin_visited_only`` restricts the argmin to
visited slots instead).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .service import ServiceDist
from .sim import day_stream, simulate_day
from .workload import ArrivalDist

LN3 = math.log(3.0)
SOHL_C1 = (2.0 - LN3) * LN3 / (LN3 - 1.0)
_EXP_SATURATION = 40.0  # exp(-c1/expm1(z)) is 1.0 to double precision past this


@dataclass(frozen=True)
class SohlTheta:
    """Exploitation probability as a function of lifetime visit count."""

    c1: float
    c2: float
    eta: float

    def __call__(self, x):
        if np.ndim(x) == 0:
            return self._scalar(float(x))
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        z = self.c2 * x
        mid = (x > 0.0) & (z <= _EXP_SATURATION)
        out[mid] = np.exp(self.c1 / (1.0 - np.exp(z[mid])))
        out[z > _EXP_SATURATION] = 1.0
        return out

    def _scalar(self, x: float) -> float:
        if x <= 0.0:
            return 0.0
        z = self.c2 * x
        if z > _EXP_SATURATION:
            return 1.0
        return math.exp(self.c1 / (1.0 - math.exp(z)))


def sohl_params(eta: float) -> SohlTheta:
    """Sigmoid parameters with the inflection (value 1/3) at ``eta``."""
    if eta <= 0.0:
        raise InvalidParameterError(f"eta must be positive, got {eta}")
    c2 = math.log((SOHL_C1 + math.sqrt(SOHL_C1 ** 2 + 4.0)) / 2.0) / eta
    return SohlTheta(c1=SOHL_C1, c2=c2, eta=float(eta))


@dataclass
class AbmConfig:
    """Run parameters; ``checkpoints`` are the days whose averaged state is kept."""

    N: int = 100
    lam: float = 5.0
    T: int = 20
    eta: float = 30.0
    days: int = 20_000
    seed: int = 12345
    checkpoints: tuple[int, ...] = (200, 2_000, 20_000)
    argmin_visited_only: bool = False

    def __post_init__(self):
        if self.N < 1:
            raise InvalidParameterError(f"N must be >= 1, got {self.N}")
        if self.lam <= 0.0 or self.lam > self.N:
            raise InvalidParameterError(
                f"lambda must lie in (0, N]; got {self.lam} with N = {self.N}"
            )
        if self.days < 1:
            raise InvalidParameterError(f"days must be >= 1, got {self.days}")


@dataclass(frozen=True)
class AbmTrace:
    """Averaged strategy and wait at each recorded day."""

    checkpoints: dict[int, tuple[ArrivalDist, float]]


class AbmPopulation:
    """Lifetime arrival and wait records for all N potential customers."""

    def __init__(self, N: int, T: int, lam: float, theta: SohlTheta,
                 seed: int = 0, argmin_visited_only: bool = False):
        self.N = N
        self.T = T
        self.lam = lam
        self.delta = lam / N
        self.theta = theta
        self.seed = seed
        self.argmin_visited_only = argmin_visited_only
        self.day = 0
        self.counts = np.zeros((N, T + 1), dtype=np.int64)     # visits per slot
        self.wait_sums = np.zeros((N, T + 1), dtype=np.int64)  # waits per slot
        self.visits = np.zeros(N, dtype=np.int64)              # lifetime visits

    def _argmin_slots(self, i: int) -> np.ndarray:
        counts = self.counts[i]
        if self.argmin_visited_only:
            visited = counts > 0
            if not visited.any():
                return np.arange(self.T + 1)
            wbar = np.where(visited, self.wait_sums[i] / np.maximum(counts, 1), np.inf)
        else:
            wbar = self.wait_sums[i] / np.maximum(counts, 1)
        return np.flatnonzero(wbar == wbar.min())

    def step_day(self, dist: ServiceDist, rng: np.random.Generator | None = None):
        """Advance one day; returns the day's simulation outcome."""
        self.day += 1
        if rng is None:
            rng = day_stream(self.seed, self.day)
        joining = np.flatnonzero(rng.random(self.N) < self.delta)
        slots = np.empty(len(joining), dtype=np.int64)
        for j, i in enumerate(joining):
            if rng.random() < self.theta(self.visits[i]):
                mins = self._argmin_slots(i)
                slots[j] = mins[rng.integers(len(mins))]
            else:
                slots[j] = rng.integers(self.T + 1)
        outcome = simulate_day(list(zip(joining.tolist(), slots.tolist())),
                               dist, rng, T=self.T)
        self.counts[outcome.ids, outcome.slots] += 1
        self.visits[outcome.ids] += 1
        np.add.at(self.wait_sums, (outcome.ids, outcome.slots), outcome.waits)
        return outcome

    def strategy_matrix(self) -> np.ndarray:
        """Each customer's mixed strategy for the next day, one row per customer."""
        P = np.empty((self.N, self.T + 1))
        th = self.theta(self.visits.astype(float))
        P[:] = ((1.0 - th) / (self.T + 1))[:, None]
        for i in range(self.N):
            if th[i] > 0.0:
                mins = self._argmin_slots(i)
                P[i, mins] += th[i] / len(mins)
        return P

    def mean_strategy(self) -> ArrivalDist:
        return ArrivalDist(self.strategy_matrix().mean(axis=0))

    def mean_lifetime_wait(self) -> float:
        """Average over customers of their lifetime mean wait (skipping
        customers who never joined)."""
        joined = self.visits > 0
        if not joined.any():
            return 0.0
        totals = self.wait_sums.sum(axis=1)[joined]
        return float(np.mean(totals / self.visits[joined]))

    def averaged_state(self) -> tuple[ArrivalDist, float]:
        """Population-mean strategy and lifetime-mean wait at the current day."""
        return self.mean_strategy(), self.mean_lifetime_wait()


def run(cfg: AbmConfig, dist: ServiceDist) -> AbmTrace:
    """Simulate ``cfg.days`` days, recording the averaged state at checkpoints.

    A checkpoint at day ``nu`` pairs the strategies in force on day ``nu``
    (formed from the first ``nu - 1`` days of experience) with the mean
    lifetime wait after day ``nu`` completes.
    """
    theta = sohl_params(cfg.eta)
    pop = AbmPopulation(cfg.N, cfg.T, cfg.lam, theta,
                        seed=cfg.seed, argmin_visited_only=cfg.argmin_visited_only)
    wanted = set(cfg.checkpoints)
    recorded: dict[int, tuple[ArrivalDist, float]] = {}
    for day in range(1, cfg.days + 1):
        at_checkpoint = day in wanted
        p_bar = pop.mean_strategy() if at_checkpoint else None
        pop.step_day(dist)
        if at_checkpoint:
            recorded[day] = (p_bar, pop.mean_lifetime_wait())
    return AbmTrace(checkpoints=dict(sorted(recorded.items())))
