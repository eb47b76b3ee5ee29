"""Transient workload law and per-slot expected waits.

The acceptance period is slots ``0..T``. Customers other than the tagged
one arrive in slot ``t`` as a Poisson(lambda * p_t) stream, each bringing
an i.i.d. service demand, so the slot-t work injection ``S_t`` is compound
Poisson. The backlog just before slot t, ``V_{t-}``, evolves as

    V_{t-} = max(V_{(t-1)-} + S_{t-1} - 1, 0),     V_{0-} = 0,

and the expected wait of a slot-t arrival is

    w_t = E[V_{t-}] + (lambda * p_t / 2) * beta,

with E[V_{t-}] available as a running sum that needs only the atom at
zero of each backlog law:

    E[V_{t-}] = sum_{j<t} (lambda p_j beta - 1 + exp(-lambda p_j) v_j(0)).

All mass functions here are truncated vectors with an explicitly tracked
tail. Truncation points grow automatically until every tail is below
``EVOLUTION_TAIL_TOL``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import InvalidParameterError, KmaxExceededError
from .service import ServiceDist

EVOLUTION_TAIL_TOL = 1e-9
KMAX_CAP = 2 ** 16


@dataclass(frozen=True)
class ArrivalDist:
    """A probability vector over the acceptance slots 0..T."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or len(probs) < 1:
            raise InvalidParameterError("arrival distribution must be a 1-d vector")
        if np.any(probs < 0.0):
            raise InvalidParameterError("arrival probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise InvalidParameterError(
                f"arrival probabilities sum to {probs.sum()!r}, not 1"
            )
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    @property
    def horizon(self) -> int:
        return len(self.probs) - 1

    @classmethod
    def uniform(cls, T: int) -> "ArrivalDist":
        return cls(np.full(T + 1, 1.0 / (T + 1)))

    @classmethod
    def point_mass(cls, T: int, slot: int) -> "ArrivalDist":
        probs = np.zeros(T + 1)
        probs[slot] = 1.0
        return cls(probs)


@dataclass(frozen=True)
class TruncatedPmf:
    """A nonnegative vector on 0..K plus the mass beyond K."""

    mass: np.ndarray
    tail_mass: float

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=float)
        mass.flags.writeable = False
        object.__setattr__(self, "mass", mass)

    def mean(self) -> float:
        """First moment of the retained mass (truncation-sensitive)."""
        return float(np.arange(len(self.mass)) @ self.mass)


@dataclass(frozen=True)
class WaitProfile:
    """Per-slot expected waits ``w`` and backlog means ``ev``."""

    w: np.ndarray
    ev: np.ndarray
    w_star: float | None = None


def default_kmax(lam: float, beta: float) -> int:
    """Initial truncation point; doubled on demand until tails are small."""
    return math.ceil(20.0 + 4.0 * lam * beta + 10.0 * math.sqrt(lam) * beta)


def compound_poisson_pmf(rate: float, dist: ServiceDist, kmax: int) -> TruncatedPmf:
    """Mass function of a compound Poisson sum on 0..kmax.

    Computed by the standard recursion for Poisson counting:
    ``s(0) = exp(-rate)``, ``s(k) = (rate/k) * sum_m m b(m) s(k-m)``.
    """
    if rate < 0.0:
        raise InvalidParameterError(f"rate must be nonnegative, got {rate}")
    if kmax < 0:
        raise InvalidParameterError(f"kmax must be nonnegative, got {kmax}")
    s = np.zeros(kmax + 1)
    s[0] = math.exp(-rate)
    mb = dist.weighted  # m * b(m) for m = 1..support_max
    nb = len(mb)
    for k in range(1, kmax + 1):
        m = min(k, nb)
        # mass at k-m, ..., k-1 against weights m, ..., 1
        s[k] = (rate / k) * float(s[k - m:k] @ mb[m - 1::-1])
    return TruncatedPmf(s, 1.0 - float(s.sum()))


def _panjer_batch(rates: np.ndarray, mb: np.ndarray, kmax: int) -> np.ndarray:
    """Row-wise compound Poisson pmfs for a vector of rates; shape (M, kmax+1)."""
    s = np.zeros((len(rates), kmax + 1))
    s[:, 0] = np.exp(-rates)
    nb = len(mb)
    mb_rev = mb[::-1].copy()
    for k in range(1, kmax + 1):
        m = min(k, nb)
        s[:, k] = (rates / k) * (s[:, k - m:k] @ mb_rev[nb - m:])
    return s


def _vstep_batch(v: np.ndarray, s: np.ndarray) -> np.ndarray:
    """One backlog step: the law of max(V + S - 1, 0), rows independent."""
    kmax = v.shape[1] - 1
    u = fftconvolve(v, s, axes=1)
    np.maximum(u, 0.0, out=u)  # FFT round-off can leave tiny negatives
    out = np.empty_like(v)
    out[:, 0] = u[:, 0] + u[:, 1]
    out[:, 1:] = u[:, 2:kmax + 2]
    return out


def _evolve_v0(rates: np.ndarray, dist: ServiceDist, kmax: int) -> tuple[np.ndarray, float]:
    """Backlog-zero probabilities v_t(0) for t = 0..T given slot rates.

    Returns (v0 array of length T+1, worst tail mass seen).
    """
    T = len(rates) - 1
    v = np.zeros((1, kmax + 1))
    v[0, 0] = 1.0
    v0 = np.empty(T + 1)
    v0[0] = 1.0
    max_tail = 0.0
    for t in range(1, T + 1):
        s = _panjer_batch(rates[t - 1:t], dist.weighted, kmax)
        max_tail = max(max_tail, 1.0 - float(s.sum()))
        v = _vstep_batch(v, s)
        max_tail = max(max_tail, 1.0 - float(v.sum()))
        v0[t] = v[0, 0]
    return v0, max_tail


def _autogrow(fn, lam: float, beta: float, kmax: int | None):
    """Run fn(kmax) with doubling until its reported tail is small enough."""
    k = default_kmax(lam, beta) if kmax is None else int(kmax)
    while True:
        result, max_tail = fn(k)
        if max_tail <= EVOLUTION_TAIL_TOL:
            return result, k
        if k >= KMAX_CAP:
            raise KmaxExceededError(
                f"tail mass {max_tail:.3e} still above {EVOLUTION_TAIL_TOL} "
                f"at the kmax cap {KMAX_CAP}"
            )
        k = min(2 * k, KMAX_CAP)


def workload_evolution(
    p: ArrivalDist, lam: float, dist: ServiceDist, kmax: int | None = None
) -> list[TruncatedPmf]:
    """Backlog laws v_0, ..., v_T under arrival profile ``p``."""
    if lam <= 0.0:
        raise InvalidParameterError(f"lambda must be positive, got {lam}")
    rates = lam * p.probs

    def attempt(k):
        T = p.horizon
        v = np.zeros((1, k + 1))
        v[0, 0] = 1.0
        laws = [TruncatedPmf(v[0].copy(), 0.0)]
        max_tail = 0.0
        for t in range(1, T + 1):
            s = _panjer_batch(rates[t - 1:t], dist.weighted, k)
            max_tail = max(max_tail, 1.0 - float(s.sum()))
            v = _vstep_batch(v, s)
            tail = 1.0 - float(v.sum())
            max_tail = max(max_tail, tail)
            laws.append(TruncatedPmf(v[0].copy(), tail))
        return laws, max_tail

    laws, _ = _autogrow(attempt, lam, dist.mean_beta, kmax)
    return laws


def expected_waits(
    p: ArrivalDist, lam: float, dist: ServiceDist, kmax: int | None = None
) -> WaitProfile:
    """Per-slot expected waits and backlog means under profile ``p``.

    ``ev`` comes from the running sum over slot contributions rather than
    from the truncated backlog vectors, so it is not truncation-sensitive.
    """
    if lam <= 0.0:
        raise InvalidParameterError(f"lambda must be positive, got {lam}")
    rates = lam * p.probs
    beta = dist.mean_beta
    v0, _ = _autogrow(lambda k: _evolve_v0(rates, dist, k), lam, beta, kmax)
    increments = rates * beta - 1.0 + np.exp(-rates) * v0
    ev = np.concatenate(([0.0], np.cumsum(increments[:-1])))
    w = ev + 0.5 * rates * beta
    return WaitProfile(w=w, ev=ev)


def cost(q: ArrivalDist, p: ArrivalDist, lam: float, dist: ServiceDist) -> float:
    """Expected wait of a deviator playing ``q`` against a population at ``p``."""
    if q.horizon != p.horizon:
        raise InvalidParameterError(
            f"horizon mismatch: {q.horizon} vs {p.horizon}"
        )
    return float(q.probs @ expected_waits(p, lam, dist).w)
