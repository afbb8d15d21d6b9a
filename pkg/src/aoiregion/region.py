"""Second-order AoI approximation and the outer/inner capacity-region checks.

Coordinates: each device is described by its mean delivery rate ``mu_i`` and
temporal variance ``sigma2_i``.  ``mu_i / p_i`` is the long-run fraction of
slots in which device ``i`` is scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .core import ConfigError, NetworkConfig, SecondOrderPoint, TargetPairs, validate_config

#: Equality tolerance for analytic candidates (solver output, hand-built points).
ANALYTIC_TOL = 1e-9
#: Equality tolerance for points estimated from simulation.
EMPIRICAL_TOL = 1e-2
#: Default margin keeping ``mu_i / p_i`` strictly inside (0, 1) for the inner bound.
DEFAULT_EPS = 1e-3


def aoi_approx(mu, sigma2, delta=0.0):
    """Approximate long-run average AoI of a delivery process.

    ``0.5 * (sigma2 / mu**2 + 1 / mu) + 0.5 + delta``.  Pass a positive
    ``delta`` for the conservative (inner) variant and a negative one for
    the optimistic (outer) variant.  Works elementwise on arrays.
    """
    mu = np.asarray(mu, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(mu <= 0):
        raise ValueError("aoi_approx needs mu > 0")
    if np.any(sigma2 < 0):
        raise ValueError("aoi_approx needs sigma2 >= 0")
    out = 0.5 * (sigma2 / mu**2 + 1.0 / mu) + 0.5 + np.asarray(delta, dtype=float)
    return float(out) if out.ndim == 0 else out


def system_variance(mu, p) -> float:
    """Long-run variance of the projected process for throughput vector ``mu``."""
    mu = np.asarray(mu, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0) or np.any(p > 1):
        raise ValueError("success probabilities must lie in (0, 1]")
    return float(np.sum(mu / p * (1.0 / p - 1.0)))


def allocate_variances(mu, p, w=None) -> np.ndarray:
    """Split the system variance budget to minimise ``sum_i w_i sigma2_i / mu_i**2``.

    The budget is the equality ``sum_i sqrt(sigma2_i) / p_i = sqrt(system_variance)``.
    Writing ``z_i = sqrt(sigma2_i) / p_i`` the minimiser is proportional to
    ``mu_i**2 / (w_i p_i**2)``.
    """
    mu = np.asarray(mu, dtype=float)
    p = np.asarray(p, dtype=float)
    w = np.ones_like(mu) if w is None else np.asarray(w, dtype=float)
    if np.any(mu <= 0) or not np.all(np.isfinite(mu)):
        raise ValueError("allocate_variances needs every mu_i > 0")
    if np.any(w <= 0):
        raise ValueError("allocation weights must be positive")
    s = np.sqrt(system_variance(mu, p))
    ratio = mu**2 / (w * p**2)
    z = s * ratio / ratio.sum()
    return (p * z) ** 2


def allocation_objective(mu, p, w=None) -> float:
    """Minimum of ``sum_i w_i sigma2_i / mu_i**2`` under the variance budget."""
    mu = np.asarray(mu, dtype=float)
    p = np.asarray(p, dtype=float)
    w = np.ones_like(mu) if w is None else np.asarray(w, dtype=float)
    return system_variance(mu, p) / float(np.sum(mu**2 / (w * p**2)))


@dataclass
class RegionCheckReport:
    """Outcome of an outer- or inner-bound check.

    Each entry of ``violated`` is ``(constraint_id, slack)``; slack is
    negative (or, for equalities, minus the absolute deviation).
    """

    bound: str
    feasible: bool
    violated: list[tuple[str, float]]
    slack_variance: float
    slack_mean: float
    schedule_fraction: np.ndarray = field(repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "bound": self.bound,
            "feasible": bool(self.feasible),
            "violated": [{"constraint": name, "slack": float(s)} for name, s in self.violated],
            "slack_variance": float(self.slack_variance),
            "slack_mean": float(self.slack_mean),
            "schedule_fraction": [float(x) for x in self.schedule_fraction],
        }


def _per_device_aoi(mu, sigma2, delta):
    aoi = np.full(mu.shape, np.inf)
    pos = mu > 0
    aoi[pos] = 0.5 * (sigma2[pos] / mu[pos] ** 2 + 1.0 / mu[pos]) + 0.5 + delta[pos]
    return aoi


def _check(bound, pairs, candidate, cfg, eps, delta, tol):
    validate_config(cfg)
    n = cfg.n_devices
    if len(pairs) != n or len(candidate) != n:
        raise ConfigError(f"pairs and candidate must have {n} entries")
    p = cfg.success_probs
    mu, sigma2 = candidate.mu, candidate.sigma2
    delta = np.zeros(n) if delta is None else np.broadcast_to(np.asarray(delta, float), (n,))
    sign = 1.0 if bound == "inner" else -1.0

    violated: list[tuple[str, float]] = []
    for i, s in enumerate(mu - pairs.m):
        if s < -tol:
            violated.append((f"throughput[{i}]", float(s)))

    aoi_slack = pairs.h - _per_device_aoi(mu, sigma2, sign * delta)
    for i, s in enumerate(aoi_slack):
        if not s >= -tol:
            violated.append((f"aoi[{i}]", float(s)))

    frac = mu / p
    slack_mean = cfg.n_slots_per_round - float(frac.sum())
    if abs(slack_mean) > tol:
        violated.append(("schedule_sum", -abs(slack_mean)))

    lo, hi = (eps, 1.0 - eps) if bound == "inner" else (0.0, 1.0)
    for i, y in enumerate(frac):
        s = min(y - lo, hi - y)
        if s < -tol:
            violated.append((f"fraction[{i}]", float(s)))

    root_budget = float(np.sum(np.sqrt(sigma2) / p))
    root_system = float(np.sqrt(system_variance(mu, p)))
    slack_variance = root_budget - root_system
    var_tol = tol * max(1.0, root_system)
    if bound == "inner":
        if abs(slack_variance) > var_tol:
            violated.append(("variance_budget", -abs(slack_variance)))
    elif slack_variance < -var_tol:
        violated.append(("variance_budget", slack_variance))

    return RegionCheckReport(
        bound=bound,
        feasible=not violated,
        violated=violated,
        slack_variance=slack_variance,
        slack_mean=slack_mean,
        schedule_fraction=frac,
    )


def check_outer(
    pairs: TargetPairs,
    candidate: SecondOrderPoint,
    cfg: NetworkConfig,
    delta=None,
    tol: float = ANALYTIC_TOL,
) -> RegionCheckReport:
    """Necessary conditions: can ``candidate`` witness ``pairs`` under some policy?"""
    return _check("outer", pairs, candidate, cfg, 0.0, delta, tol)


def check_inner(
    pairs: TargetPairs,
    candidate: SecondOrderPoint,
    cfg: NetworkConfig,
    eps: float = DEFAULT_EPS,
    delta=None,
    tol: float = ANALYTIC_TOL,
) -> RegionCheckReport:
    """Sufficient conditions: VWD driven by ``candidate`` attains ``pairs``.

    Requires the strict box ``eps <= mu_i / p_i <= 1 - eps`` and an exact
    variance budget.
    """
    if eps <= 0:
        raise ValueError("inner-bound strictness eps must be positive")
    return _check("inner", pairs, candidate, cfg, eps, delta, tol)
