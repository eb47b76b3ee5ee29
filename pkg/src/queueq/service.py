"""Discrete service-time distributions.

Three families are supported, all supported on {1, 2, ...} with mean
``beta`` measured in whole slots:

* deterministic: point mass at an integer ``beta`` (CV 0),
* geometric: success probability ``1/beta`` (CV ``sqrt(1 - 1/beta)``),
* geom_mixture: a two-component geometric mixture pinned by
  ``p * beta1 = 1``, tuned so the CV equals a requested target ``y``.

Geometric-type mass functions are materialized up to the smallest point
where the cumulative mass reaches ``1 - 1e-12``; the residual is kept in
``tail_mass`` rather than folded into the last bin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleCvError, InvalidParameterError

PMF_TRUNC_TOL = 1e-12

DETERMINISTIC = "deterministic"
GEOMETRIC = "geometric"
GEOM_MIXTURE = "geom_mixture"


@dataclass(frozen=True)
class ServiceDist:
    """A truncated service-time law plus its exact family parameters.

    ``pmf[k]`` is the probability of a k-slot service, with ``pmf[0] = 0``.
    ``mean_beta`` and ``cv`` are the exact (untruncated) moments of the
    family. For ``geom_mixture`` the component parameters
    ``(p, beta1, beta2, xi)`` are retained; they are ``None`` otherwise.
    """

    family: str
    mean_beta: float
    cv: float
    pmf: np.ndarray
    tail_mass: float
    p: float | None = None
    beta1: float | None = None
    beta2: float | None = None
    xi: float | None = None
    # k * pmf[k], the Panjer weight vector (index 0 dropped)
    weighted: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=float)
        if pmf[0] != 0.0:
            raise InvalidParameterError("service pmf must put zero mass on 0")
        total = pmf.sum()
        if not (1.0 - PMF_TRUNC_TOL - 1e-15 <= total + self.tail_mass <= 1.0 + 1e-12):
            raise InvalidParameterError(
                f"service pmf mass {total} + tail {self.tail_mass} != 1"
            )
        pmf.flags.writeable = False
        object.__setattr__(self, "pmf", pmf)
        w = np.arange(len(pmf), dtype=float) * pmf
        w.flags.writeable = False
        object.__setattr__(self, "weighted", w[1:])

    @property
    def support_max(self) -> int:
        return len(self.pmf) - 1

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Draw service times; geometric branches use exact inversion."""
        n = 1 if size is None else int(size)
        if self.family == DETERMINISTIC:
            out = np.full(n, int(round(self.mean_beta)), dtype=np.int64)
        elif self.family == GEOMETRIC:
            out = rng.geometric(1.0 / self.mean_beta, n)
        else:
            pick = rng.random(n) < self.p
            out = np.where(
                pick,
                rng.geometric(1.0 / self.beta1, n),
                rng.geometric(1.0 / self.beta2, n),
            )
        return int(out[0]) if size is None else out

    def to_json(self) -> dict:
        return {"family": self.family, "beta": self.mean_beta, "cv": self.cv}


def _geom_pmf(beta: float, kmax: int) -> np.ndarray:
    q = 1.0 / beta
    b = np.zeros(kmax + 1)
    k = np.arange(1, kmax + 1, dtype=float)
    b[1:] = q * (1.0 - q) ** (k - 1.0)
    return b


def _geom_tail(beta: float, kmax: int) -> float:
    return (1.0 - 1.0 / beta) ** kmax


def _smallest_support(tail_at) -> int:
    """Smallest K with tail(K) <= PMF_TRUNC_TOL, by bisection on K."""
    lo, hi = 1, 2
    while tail_at(hi) > PMF_TRUNC_TOL:
        hi *= 2
        if hi > 10**9:
            raise InvalidParameterError("service tail decays too slowly to truncate")
    while lo < hi:
        mid = (lo + hi) // 2
        if tail_at(mid) <= PMF_TRUNC_TOL:
            hi = mid
        else:
            lo = mid + 1
    return lo


def deterministic(beta) -> ServiceDist:
    """Point mass at an integer number of slots."""
    if beta != int(beta) or int(beta) < 1:
        raise InvalidParameterError(f"deterministic beta must be an integer >= 1, got {beta}")
    b = int(beta)
    pmf = np.zeros(b + 1)
    pmf[b] = 1.0
    return ServiceDist(DETERMINISTIC, float(b), 0.0, pmf, 0.0)


def geometric(beta: float) -> ServiceDist:
    """Geometric law on {1, 2, ...} with mean ``beta``."""
    beta = float(beta)
    if beta < 1.0:
        raise InvalidParameterError(f"geometric beta must be >= 1, got {beta}")
    cv = math.sqrt(1.0 - 1.0 / beta)
    if beta == 1.0:
        return ServiceDist(GEOMETRIC, 1.0, 0.0, np.array([0.0, 1.0]), 0.0)
    kmax = _smallest_support(lambda k: _geom_tail(beta, k))
    return ServiceDist(GEOMETRIC, beta, cv, _geom_pmf(beta, kmax), _geom_tail(beta, kmax))


def mixture_parameters(beta: float, y: float) -> tuple[float, float, float, float]:
    """Solve for (p, beta1, beta2, xi) with p*beta1 = 1 and CV equal to y."""
    beta, y = float(beta), float(y)
    if beta <= 1.0:
        raise InvalidParameterError(f"geom_mixture beta must be > 1, got {beta}")
    cv_floor = math.sqrt(1.0 - 1.0 / beta)
    if y <= cv_floor:
        raise InfeasibleCvError(
            f"cv target {y} is not above the single-geometric floor "
            f"sqrt(1 - 1/beta) = {cv_floor:.6f}"
        )
    bb = 3.0 * beta * (beta - 1.0) + y * y * beta * beta
    disc = bb * bb - 8.0 * (beta - 1.0) ** 2 * (y * y * beta * beta + beta * (beta + 1.0))
    if disc < 0.0:
        raise InfeasibleCvError(
            f"cv target {y} gives a negative discriminant ({disc}) for beta {beta}"
        )
    xi = 4.0 * (beta - 1.0) / (bb + math.sqrt(disc))
    p = 1.0 - xi * (beta - 1.0)
    if not 0.0 < p < 1.0:
        raise InfeasibleCvError(f"mixture weight p = {p} falls outside (0, 1)")
    beta1, beta2 = 1.0 / p, 1.0 / xi
    if beta1 < 1.0 or beta2 < 1.0:
        raise InfeasibleCvError(
            f"mixture component mean below 1 (beta1 = {beta1}, beta2 = {beta2})"
        )
    return p, beta1, beta2, xi


def geometric_mixture(beta: float, y: float) -> ServiceDist:
    """Two-component geometric mixture with mean ``beta`` and CV ``y``."""
    p, beta1, beta2, xi = mixture_parameters(beta, y)

    def tail(k: int) -> float:
        return p * _geom_tail(beta1, k) + (1.0 - p) * _geom_tail(beta2, k)

    kmax = _smallest_support(tail)
    pmf = p * _geom_pmf(beta1, kmax) + (1.0 - p) * _geom_pmf(beta2, kmax)
    return ServiceDist(
        GEOM_MIXTURE, float(beta), float(y), pmf, tail(kmax),
        p=p, beta1=beta1, beta2=beta2, xi=xi,
    )


def from_json(obj: dict) -> ServiceDist:
    """Build a distribution from {"family": ..., "beta": ..., "cv": ...}.

    ``cv`` is the mixture CV target and is ignored for the other families.
    """
    family = obj.get("family")
    if family == DETERMINISTIC:
        return deterministic(obj["beta"])
    if family == GEOMETRIC:
        return geometric(obj["beta"])
    if family == GEOM_MIXTURE:
        if "cv" not in obj or obj["cv"] is None:
            raise InvalidParameterError("geom_mixture requires a cv target")
        return geometric_mixture(obj["beta"], obj["cv"])
    raise InvalidParameterError(f"unknown service family {family!r}")
