"""Equilibrium arrival-time distributions.

At a symmetric equilibrium every slot carrying arrival mass attains the
common minimal expected wait ``w* = (lambda p0 / 2) beta``, which pins the
whole vector once the opening-slot mass is known: with ``x0`` given,

    x_t = max(x0 - 2 * sum_{j<t} {x_j + (-1 + exp(-lam x_j) v_j(0; x)) / (lam beta)}, 0)

where ``v_j(0; x)`` is the backlog-zero probability driven by slot rates
``lam * x_j``. The recursion is well defined for any nonnegative seed, so
the equilibrium reduces to a scalar root problem for the total mass
``G(x0) = sum_t x_t``: find ``x0`` with ``G(x0) = 1``. ``G`` is continuous
with ``G(0) = 0`` and ``G(1) >= 1``.

Two solvers are provided. The reference scans ``x0 = eps, 2 eps, ...`` and
stops at the first seed whose total mass is within ``delta`` of one, which
also selects the root with the smallest expected wait if several exist.
The default checks that ``G`` is nondecreasing on a coarse grid and then
bisects, falling back to the scan if the check fails.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, KmaxExceededError, NoRootError
from .service import ServiceDist
from .workload import (
    ArrivalDist,
    EVOLUTION_TAIL_TOL,
    KMAX_CAP,
    WaitProfile,
    _panjer_batch,
    _vstep_batch,
    default_kmax,
    expected_waits,
)

GRID_CHUNK = 512
MONOTONE_SLACK = 1e-10


@dataclass(frozen=True)
class SolverConfig:
    """Scan step ``epsilon``, mass tolerance ``delta``, and solver mode."""

    epsilon: float = 1e-4
    delta: float = 1e-3
    kmax: int | None = None
    mode: str = "bisection"

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise InvalidParameterError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise InvalidParameterError(f"delta must be in (0, 1), got {self.delta}")
        if self.mode not in ("grid", "bisection"):
            raise InvalidParameterError(f"mode must be 'grid' or 'bisection', got {self.mode!r}")


@dataclass(frozen=True)
class EquilibriumResult:
    """A solved arrival profile and the root-finding diagnostics."""

    p_star: ArrivalDist
    w_star: float
    profile: WaitProfile
    x0: float
    residual: float
    iterations: int
    mode: str


@dataclass(frozen=True)
class VerifyReport:
    """Outcome of the supported-slots-attain-the-minimum check."""

    is_equilibrium: bool
    w_min: float
    max_violation: float
    slot_ok: np.ndarray
    w: np.ndarray


def _forward_batch(
    x0s: np.ndarray, lam: float, dist: ServiceDist, T: int, kmax: int
) -> tuple[np.ndarray, float]:
    """Mass vectors for a batch of seeds; returns (X of shape (M, T+1), max tail)."""
    M = len(x0s)
    beta = dist.mean_beta
    X = np.zeros((M, T + 1))
    X[:, 0] = x0s
    v = np.zeros((M, kmax + 1))
    v[:, 0] = 1.0
    running = np.zeros(M)
    max_tail = 0.0
    for t in range(1, T + 1):
        xprev = X[:, t - 1]
        running += xprev + (-1.0 + np.exp(-lam * xprev) * v[:, 0]) / (lam * beta)
        X[:, t] = np.maximum(x0s - 2.0 * running, 0.0)
        if t < T:
            s = _panjer_batch(lam * xprev, dist.weighted, kmax)
            max_tail = max(max_tail, float(np.max(1.0 - s.sum(axis=1))))
            v = _vstep_batch(v, s)
            max_tail = max(max_tail, float(np.max(1.0 - v.sum(axis=1))))
    return X, max_tail


def _forward_autogrow(
    x0s: np.ndarray, lam: float, dist: ServiceDist, T: int, kmax: int | None
) -> tuple[np.ndarray, int]:
    k = default_kmax(lam, dist.mean_beta) if kmax is None else int(kmax)
    while True:
        X, max_tail = _forward_batch(x0s, lam, dist, T, k)
        if max_tail <= EVOLUTION_TAIL_TOL:
            return X, k
        if k >= KMAX_CAP:
            raise KmaxExceededError(
                f"tail mass {max_tail:.3e} above {EVOLUTION_TAIL_TOL} at kmax cap {KMAX_CAP}"
            )
        k = min(2 * k, KMAX_CAP)


def forward_recursion(
    x0: float, lam: float, dist: ServiceDist, T: int, kmax: int | None = None
) -> np.ndarray:
    """Mass vector seeded at ``x0``; need not be a probability vector."""
    if x0 < 0.0:
        raise InvalidParameterError(f"x0 must be nonnegative, got {x0}")
    if x0 > 1.0:
        warnings.warn(f"seed x0 = {x0} exceeds 1; total mass will exceed 1")
    X, _ = _forward_autogrow(np.array([float(x0)]), lam, dist, T, kmax)
    return X[0]


def mass_G(x0, lam: float, dist: ServiceDist, T: int, kmax: int | None = None):
    """Total mass of the recursion; accepts a scalar seed or a vector of seeds."""
    arr = np.atleast_1d(np.asarray(x0, dtype=float))
    if np.any(arr < 0.0):
        raise InvalidParameterError("seeds must be nonnegative")
    X, _ = _forward_autogrow(arr, lam, dist, T, kmax)
    G = X.sum(axis=1)
    return float(G[0]) if np.isscalar(x0) or np.ndim(x0) == 0 else G


def _package(
    x: np.ndarray, x0: float, lam: float, dist: ServiceDist,
    iterations: int, mode: str,
) -> EquilibriumResult:
    total = float(x.sum())
    residual = abs(1.0 - total)
    p_star = ArrivalDist(x / total)
    profile = expected_waits(p_star, lam, dist)
    w_star = 0.5 * lam * float(p_star.probs[0]) * dist.mean_beta
    profile = WaitProfile(w=profile.w, ev=profile.ev, w_star=w_star)
    return EquilibriumResult(
        p_star=p_star, w_star=w_star, profile=profile,
        x0=float(x0), residual=residual, iterations=iterations, mode=mode,
    )


def solve_grid(
    cfg: SolverConfig, lam: float, dist: ServiceDist, T: int
) -> EquilibriumResult:
    """Scan seeds ``k * epsilon`` for the first total mass within ``delta`` of 1."""
    if lam <= 0.0:
        raise InvalidParameterError(f"lambda must be positive, got {lam}")
    eps, delta = cfg.epsilon, cfg.delta
    n_steps = int(np.floor(1.0 / eps + 1e-12))
    kmax = cfg.kmax
    best = np.inf
    for start in range(1, n_steps + 1, GRID_CHUNK):
        ks = np.arange(start, min(start + GRID_CHUNK, n_steps + 1))
        x0s = ks * eps
        X, kmax = _forward_autogrow(x0s, lam, dist, T, kmax)
        res = np.abs(1.0 - X.sum(axis=1))
        hit = res < delta
        if hit.any():
            i = int(np.argmax(hit))
            return _package(X[i], x0s[i], lam, dist, int(ks[i]), "grid")
        best = min(best, float(res.min()))
    raise NoRootError(
        f"no seed in (0, 1] reached |1 - mass| < {delta}; best residual {best:.3e}",
        min_residual=best,
    )


def solve_bisection(
    tol: float, lam: float, dist: ServiceDist, T: int,
    cfg: SolverConfig | None = None, coarse_points: int = 21,
) -> EquilibriumResult:
    """Bisect ``G(x0) = 1`` after checking monotonicity on a coarse grid.

    Falls back to the grid scan (with a warning) if the coarse grid shows a
    decrease, since bisection is only trustworthy for a monotone mass map.
    """
    if lam <= 0.0:
        raise InvalidParameterError(f"lambda must be positive, got {lam}")
    cfg = cfg or SolverConfig()
    grid = np.linspace(0.0, 1.0, coarse_points)
    G = mass_G(grid, lam, dist, T, cfg.kmax)
    if np.any(np.diff(G) < -MONOTONE_SLACK):
        warnings.warn("total-mass map is not monotone on the coarse grid; "
                      "falling back to the grid scan")
        return solve_grid(SolverConfig(cfg.epsilon, cfg.delta, cfg.kmax, "grid"),
                          lam, dist, T)
    if np.all(G < 1.0):
        raise NoRootError(
            f"no bracket: total mass stays below 1 on [0, 1] (max {G.max():.6f})",
            min_residual=float(np.abs(1.0 - G).min()),
        )
    hi_idx = int(np.argmax(G >= 1.0))
    lo = float(grid[hi_idx - 1]) if hi_idx > 0 else 0.0
    hi = float(grid[hi_idx])
    iterations = 0
    x0 = hi
    g = float(G[hi_idx])
    while abs(g - 1.0) >= tol:
        iterations += 1
        if iterations > 200 or hi - lo < 1e-15:
            raise NoRootError(
                f"bisection stalled at |1 - mass| = {abs(g - 1.0):.3e}",
                min_residual=abs(g - 1.0),
            )
        x0 = 0.5 * (lo + hi)
        g = mass_G(x0, lam, dist, T, cfg.kmax)
        if g < 1.0:
            lo = x0
        else:
            hi = x0
    x = forward_recursion(x0, lam, dist, T, cfg.kmax)
    return _package(x, x0, lam, dist, iterations, "bisection")


def solve(cfg: SolverConfig, lam: float, dist: ServiceDist, T: int) -> EquilibriumResult:
    """Dispatch on ``cfg.mode``; bisection tightens the mass tolerance tenfold."""
    if cfg.mode == "grid":
        return solve_grid(cfg, lam, dist, T)
    return solve_bisection(cfg.delta * 1e-1, lam, dist, T, cfg)


def find_delta_roots(
    cfg: SolverConfig, lam: float, dist: ServiceDist, T: int
) -> np.ndarray:
    """All scan seeds whose total mass is within ``delta`` of 1 (diagnostic).

    The scan solver returns the first of these; inspecting the whole set
    shows whether the root is unique at the scan resolution.
    """
    n_steps = int(np.floor(1.0 / cfg.epsilon + 1e-12))
    roots = []
    kmax = cfg.kmax
    for start in range(1, n_steps + 1, GRID_CHUNK):
        ks = np.arange(start, min(start + GRID_CHUNK, n_steps + 1))
        x0s = ks * cfg.epsilon
        X, kmax = _forward_autogrow(x0s, lam, dist, T, kmax)
        res = np.abs(1.0 - X.sum(axis=1))
        roots.extend(x0s[res < cfg.delta])
    return np.asarray(roots)


def verify_equilibrium(
    p: ArrivalDist, lam: float, dist: ServiceDist, tol: float,
    support_threshold: float = 1e-6,
) -> VerifyReport:
    """Check that supported slots attain the minimal wait within ``tol``.

    Passes iff every slot with mass above ``support_threshold`` has wait
    within ``tol`` of the overall minimum, and no slot beats the best
    supported slot by more than ``tol``.
    """
    profile = expected_waits(p, lam, dist)
    w = profile.w
    w_min = float(w.min())
    supported = p.probs > support_threshold
    if not supported.any():
        raise InvalidParameterError("arrival distribution has no supported slot")
    w_sup_min = float(w[supported].min())
    gap = np.where(supported, np.abs(w - w_min), 0.0)
    undercut = np.maximum(w_sup_min - w, 0.0)
    slot_ok = (gap <= tol) & (undercut <= tol)
    max_violation = float(np.maximum(gap, undercut).max())
    return VerifyReport(
        is_equilibrium=bool(slot_ok.all()),
        w_min=w_min,
        max_violation=max_violation,
        slot_ok=slot_ok,
        w=w,
    )
