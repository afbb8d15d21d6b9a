"""Numerical optimisation over the inner bound for the four joint throughput/AoI problems.

All problems are solved in scheduling-fraction coordinates ``y_i = mu_i / p_i``,
which live on the slice ``{sum_i y_i = M, lo_i <= y_i <= hi_i}``.  Problems
whose objective is quadratic in ``sigma_i`` (hard-constrained AoI minimisation
and the soft-constrained cost) eliminate the variances exactly through
:func:`region.allocate_variances`.  The others carry an extra simplex block
``beta`` with ``sigma_i = p_i beta_i sqrt(system_variance)``, which satisfies the
variance-budget equality by construction.

The optimiser is a spectral projected gradient method (Barzilai-Borwein steps
with a non-monotone backtracking line search) restarted from several random
feasible points.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import InfeasibleProblemError, NetworkConfig, SecondOrderPoint, validate_config
from .region import DEFAULT_EPS, allocate_variances, aoi_approx, system_variance

log = logging.getLogger(__name__)

KKT_TOL = 1e-8
MAX_ITER = 100_000
N_STARTS = 20


# --------------------------------------------------------------------------
# projection
# --------------------------------------------------------------------------

def project_box_slice(v, lo, hi, total: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{x : sum x = total, lo <= x <= hi}``.

    The projection is ``clip(v - tau, lo, hi)`` for the dual variable ``tau``
    solving ``sum clip(v - tau, lo, hi) = total``.  That sum is piecewise
    linear and nonincreasing in ``tau``; we bisect over its breakpoints and
    solve the final linear piece exactly.
    """
    v = np.asarray(v, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), v.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), v.shape)
    if np.any(lo > hi) or lo.sum() > total + 1e-12 or hi.sum() < total - 1e-12:
        raise InfeasibleProblemError(
            f"empty feasible set: sum(lo)={lo.sum():.6g}, sum(hi)={hi.sum():.6g}, total={total}"
        )
    bp = np.unique(np.concatenate([v - lo, v - hi]))
    g = np.clip(v[None, :] - bp[:, None], lo, hi).sum(axis=1)
    # g is nonincreasing along bp; find the first breakpoint with g <= total.
    lo_k, hi_k = 0, bp.size - 1
    if g[0] <= total:
        tau = bp[0]
    elif g[-1] >= total:
        tau = bp[-1]
    else:
        while hi_k - lo_k > 1:
            mid = (lo_k + hi_k) // 2
            if g[mid] > total:
                lo_k = mid
            else:
                hi_k = mid
        g0, g1 = g[lo_k], g[hi_k]
        tau = bp[lo_k] + (g0 - total) / (g0 - g1) * (bp[hi_k] - bp[lo_k])
    x = np.clip(v - tau, lo, hi)
    free = (x > lo) & (x < hi)
    if free.any():
        x[free] += (total - x.sum()) / free.sum()
        x = np.clip(x, lo, hi)
    return x


def fraction_bounds(cfg: NetworkConfig, lower=None, eps: float = DEFAULT_EPS):
    """Box ``max(lower_i / p_i, eps) <= y_i <= 1 - eps`` on scheduling fractions."""
    p = cfg.success_probs
    floor = np.zeros(cfg.n_devices) if lower is None else np.asarray(lower, float) / p
    lo = np.maximum(floor, eps)
    hi = np.full(cfg.n_devices, 1.0 - eps)
    return lo, hi


def project_mu(mu_raw, cfg: NetworkConfig, lower=None, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Project a throughput vector onto the schedulable slice, in ``mu / p`` coordinates."""
    validate_config(cfg)
    p = cfg.success_probs
    lo, hi = fraction_bounds(cfg, lower, eps)
    y = project_box_slice(np.asarray(mu_raw, float) / p, lo, hi, cfg.n_slots_per_round)
    return p * y


# --------------------------------------------------------------------------
# optimiser
# --------------------------------------------------------------------------

@dataclass
class _Run:
    x: np.ndarray
    f: float
    iterations: int
    residual: float


def _spg(fg, project, x0, *, center=None, tol=KKT_TOL, max_iter=MAX_ITER, memory=10,
         stop: Callable[[float], bool] | None = None) -> _Run:
    # ``center`` removes gradient components normal to the affine constraints;
    # they do not change the projection but cost precision in ``x - step * g``.
    if center is not None:
        raw_fg = fg

        def fg(z):
            val, grad = raw_fg(z)
            return val, center(grad)

    def kkt(z, grad):
        # Projected-gradient step, relative to the gradient scale.
        return float(np.max(np.abs(project(z - grad) - z))) / max(1.0, float(np.max(np.abs(grad))))

    x = project(x0)
    f, g = fg(x)
    history = [f]
    step = 1.0
    residual = kkt(x, g)
    it = 0
    while it < max_iter and residual >= tol:
        if stop is not None and stop(f):
            break
        it += 1
        d = project(x - step * g) - x
        gd = float(g @ d)
        if gd >= 0:
            # Numerically stalled direction; fall back to the unit projected step.
            d = project(x - g) - x
            gd = float(g @ d)
            if gd >= 0:
                break
        f_ref = max(history[-memory:])
        noise = 1e-12 * max(1.0, abs(f))
        lam = 1.0
        while True:
            x_new = x + lam * d
            f_new, g_new = fg(x_new)
            res_new = kkt(x_new, g_new)
            if np.isfinite(f_new):
                if f_new <= f_ref + 1e-4 * lam * gd:
                    break
                # Near the optimum f differences drown in rounding; gradients do not.
                if abs(f_new - f) <= noise and res_new < residual:
                    break
            lam *= 0.5
            if lam < 1e-20:
                break
        if lam < 1e-20:
            break
        s = x_new - x
        sy = float(s @ (g_new - g))
        step = float(np.clip((s @ s) / sy, 1e-12, 1e12)) if sy > 0 else 1e12
        x, f, g, residual = x_new, f_new, g_new, res_new
        history.append(f)
    return _Run(x, f, it, residual)


# --------------------------------------------------------------------------
# problem assemblies
# --------------------------------------------------------------------------

@dataclass
class Problem:
    """Objective ``fg`` (to minimise) over ``y`` or ``(y, beta)``.

    ``report`` maps the minimised value to the problem's natural objective
    (sum of AoI, total cost, total utility, or the admission margin).
    """

    name: str
    cfg: NetworkConfig
    lo: np.ndarray
    hi: np.ndarray
    joint: bool
    fg: Callable[[np.ndarray], tuple[float, np.ndarray]]
    point: Callable[[np.ndarray], SecondOrderPoint]
    report: Callable[[float], float]

    @property
    def n(self) -> int:
        return self.cfg.n_devices

    def project(self, x: np.ndarray) -> np.ndarray:
        n, m = self.n, self.cfg.n_slots_per_round
        y = project_box_slice(x[:n], self.lo, self.hi, m)
        if not self.joint:
            return y
        beta = project_box_slice(x[n:], 0.0, 1.0, 1.0)
        return np.concatenate([y, beta])

    def center(self, g: np.ndarray) -> np.ndarray:
        """Remove the per-block mean of a gradient (the slice normal directions)."""
        n = self.n
        out = g.copy()
        out[:n] -= out[:n].mean()
        if self.joint:
            out[n:] -= out[n:].mean()
        return out

    def random_start(self, rng: np.random.Generator) -> np.ndarray:
        n, m = self.n, self.cfg.n_slots_per_round
        y = rng.dirichlet(np.ones(n)) * m
        if not self.joint:
            return self.project(y)
        return self.project(np.concatenate([y, rng.dirichlet(np.ones(n))]))

    def center_start(self) -> np.ndarray:
        n, m = self.n, self.cfg.n_slots_per_round
        y = np.full(n, m / n)
        if not self.joint:
            return self.project(y)
        return self.project(np.concatenate([y, np.full(n, 1.0 / n)]))


def _delta(delta, n):
    return np.zeros(n) if delta is None else np.broadcast_to(np.asarray(delta, float), (n,)).copy()


def _aoi_terms(y, p, c, delta):
    """Per-device AoI after exact variance allocation, plus the pieces of its gradient."""
    s2 = float(c @ y)
    q = float(y @ y)
    base = 1.0 / (2.0 * p * y)
    total = 0.5 * s2 / q + base.sum() + 0.5 * y.size + delta.sum()
    grad = 0.5 * (c / q - 2.0 * s2 * y / q**2) - base / y
    return total, grad


def _allocated_point(y, p):
    mu = p * y
    return SecondOrderPoint(mu, allocate_variances(mu, p))


def min_aoi_problem(cfg: NetworkConfig, q, eps: float = DEFAULT_EPS, delta=None) -> Problem:
    """Minimise total approximate AoI subject to ``mu_i >= q_i``."""
    validate_config(cfg)
    p = cfg.success_probs
    c = 1.0 / p - 1.0
    dl = _delta(delta, cfg.n_devices)
    lo, hi = fraction_bounds(cfg, q, eps)

    def fg(y):
        return _aoi_terms(y, p, c, dl)

    return Problem("min_aoi_hard", cfg, lo, hi, False, fg, lambda y: _allocated_point(y, p),
                   lambda f: f)


@dataclass(frozen=True)
class QuadraticPenalty:
    """``C(x) = scale * x**2`` for ``x > 0`` and 0 otherwise."""

    scale: float = 1.0

    def value(self, x):
        xp = np.maximum(x, 0.0)
        return self.scale * xp * xp

    def derivative(self, x):
        return 2.0 * self.scale * np.maximum(x, 0.0)


def cost_soft_problem(cfg: NetworkConfig, q, penalty=None, eps: float = DEFAULT_EPS,
                      delta=None) -> Problem:
    """Minimise ``sum_i C(q_i - mu_i) + AoI_i`` with no throughput floor."""
    validate_config(cfg)
    p = cfg.success_probs
    c = 1.0 / p - 1.0
    q = np.asarray(q, float)
    pen = QuadraticPenalty() if penalty is None else penalty
    dl = _delta(delta, cfg.n_devices)
    lo, hi = fraction_bounds(cfg, None, eps)

    def fg(y):
        aoi, grad = _aoi_terms(y, p, c, dl)
        short = q - p * y
        return aoi + float(np.sum(pen.value(short))), grad - p * pen.derivative(short)

    return Problem("cost_soft", cfg, lo, hi, False, fg, lambda y: _allocated_point(y, p),
                   lambda f: f)


def _joint_point(x, p, c):
    n = p.size
    y, beta = x[:n], x[n:]
    mu = p * y
    s2 = float(c @ y)
    return SecondOrderPoint(mu, (p * beta) ** 2 * s2)


def prop_fair_problem(cfg: NetworkConfig, eps: float = DEFAULT_EPS, delta=None) -> Problem:
    """Maximise ``sum_i log mu_i - log AoI_i`` (minimises its negative)."""
    validate_config(cfg)
    p = cfg.success_probs
    c = 1.0 / p - 1.0
    n = cfg.n_devices
    dl = _delta(delta, n)
    lo, hi = fraction_bounds(cfg, None, eps)

    def fg(x):
        y, beta = x[:n], x[n:]
        s2 = float(c @ y)
        ratio = beta**2 * s2 / y**2
        a = 0.5 * (ratio + 1.0 / (p * y)) + 0.5 + dl
        f = -float(np.sum(np.log(p * y))) + float(np.sum(np.log(a)))
        gy = -1.0 / y + 0.5 * c * float(np.sum(beta**2 / (y**2 * a))) \
            + (-ratio / y - 1.0 / (2.0 * p * y**2)) / a
        gb = beta * s2 / (y**2 * a)
        return f, np.concatenate([gy, gb])

    return Problem("prop_fair", cfg, lo, hi, True, fg, lambda x: _joint_point(x, p, c),
                   lambda f: -f)


_CAP_FLOOR = 1e-24
_ADMISSION_LIFT = 1e-6


def admission_problem(cfg: NetworkConfig, e, eps: float = DEFAULT_EPS, delta=None) -> Problem:
    """Maximise the variance margin ``sum_i sqrt(cap_i)/p_i - sqrt(system_variance)``.

    ``cap_i = mu_i**2 (2 e_i - 1 - 1/mu_i)`` is the largest variance that keeps
    device ``i``'s approximate AoI at or below ``e_i``.
    """
    validate_config(cfg)
    p = cfg.success_probs
    c = 1.0 / p - 1.0
    n = cfg.n_devices
    ceiling = np.asarray(e, float) - _delta(delta, n)
    k = 2.0 * ceiling - 1.0
    if np.any(k <= 0):
        raise InfeasibleProblemError("AoI ceilings below 1 cannot be met")
    lo, hi = fraction_bounds(cfg, 1.0 / k, eps)
    # sqrt(cap_i) has infinite slope where cap_i = 0, so the maximum never sits
    # on those lower bounds unless the slice is degenerate.  Lifting them keeps
    # the gradient finite; otherwise an iterate stuck on a bound looks
    # stationary to the gradient-scaled KKT residual.
    lift = min(_ADMISSION_LIFT, max(cfg.n_slots_per_round - lo.sum(), 0.0) / (2 * n))
    lo = np.where(lo < hi, np.minimum(lo + lift, hi), lo)

    def fg(y):
        mu = p * y
        cap = mu * mu * k - mu
        root = np.sqrt(np.maximum(cap, 0.0))
        s2 = float(c @ y)
        phi = float(np.sum(root / p)) - np.sqrt(max(s2, 0.0))
        dcap = p * (2.0 * mu * k - 1.0)
        g = -dcap / (2.0 * p * np.sqrt(np.maximum(cap, _CAP_FLOOR)))
        if s2 > 0:
            g = g + c / (2.0 * np.sqrt(s2))
        return -phi, g

    def point(y):
        mu = p * y
        cap = np.maximum(mu * mu * k - mu, 0.0)
        s = np.sqrt(system_variance(mu, p))
        budget = float(np.sum(np.sqrt(cap) / p))
        scale = s / budget if budget > 0 else 0.0
        return SecondOrderPoint(mu, cap * scale**2)

    return Problem("admission", cfg, lo, hi, False, fg, point, lambda f: -f)


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------

@dataclass
class SolverResult:
    point: SecondOrderPoint
    objective: float
    converged: bool
    iterations: int
    kkt_residual: float
    problem: str = ""
    boundary: bool = False
    start_objectives: list[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "objective": float(self.objective),
            "converged": bool(self.converged),
            "boundary": bool(self.boundary),
            "iterations": int(self.iterations),
            "kkt_residual": float(self.kkt_residual),
            "point": self.point.to_dict(),
        }


def solve_problem(problem: Problem, *, n_starts: int = N_STARTS, seed: int = 0,
                  tol: float = KKT_TOL, max_iter: int = MAX_ITER,
                  stop: Callable[[float], bool] | None = None) -> SolverResult:
    """Multi-start projected gradient; keeps the best start (lowest index on ties)."""
    rng = np.random.default_rng(seed)
    best: _Run | None = None
    objectives = []
    total_iter = 0
    for k in range(n_starts):
        x0 = problem.center_start() if k == 0 else problem.random_start(rng)
        run = _spg(problem.fg, problem.project, x0, center=problem.center, tol=tol,
                   max_iter=max_iter, stop=stop)
        objectives.append(float(problem.report(run.f)))
        total_iter += run.iterations
        # Objectives equal to rounding level count as ties; the earlier start wins.
        if best is None or run.f < best.f - 1e-12 * max(1.0, abs(best.f)):
            best = run
        if stop is not None and stop(run.f):
            break
    reported = np.array(objectives)
    if reported.size > 1 and np.ptp(reported) > 1e-6 * max(1.0, abs(problem.report(best.f))):
        log.info("%s: multi-start objectives disagree (spread %.3g)", problem.name, np.ptp(reported))
    return SolverResult(
        point=problem.point(best.x),
        objective=float(problem.report(best.f)),
        converged=best.residual < tol,
        iterations=total_iter,
        kkt_residual=best.residual,
        problem=problem.name,
        start_objectives=objectives,
    )


def _full_schedule_point(cfg: NetworkConfig) -> SecondOrderPoint:
    # With M = N every device transmits every slot: iid Bernoulli(p_i) deliveries.
    p = cfg.success_probs
    return SecondOrderPoint(p.copy(), p * (1.0 - p))


def _boundary_result(cfg, name, objective) -> SolverResult:
    return SolverResult(_full_schedule_point(cfg), float(objective), False, 0, 0.0, name,
                        boundary=True)


def solve_min_aoi_hard(cfg: NetworkConfig, q, *, eps: float = DEFAULT_EPS, delta=None,
                       **kwargs) -> SolverResult:
    """Minimum total AoI subject to throughput floors ``q``."""
    validate_config(cfg)
    q = np.asarray(q, float)
    dl = _delta(delta, cfg.n_devices)
    if cfg.n_slots_per_round == cfg.n_devices:
        if np.any(q > cfg.success_probs):
            raise InfeasibleProblemError("throughput floors exceed p_i with every device scheduled")
        return _boundary_result(cfg, "min_aoi_hard",
                                float(np.sum(1.0 / cfg.success_probs + dl)))
    if np.sum(q / cfg.success_probs) >= cfg.n_slots_per_round:
        raise InfeasibleProblemError(
            f"sum q_i/p_i = {np.sum(q / cfg.success_probs):.6g} is not below M = "
            f"{cfg.n_slots_per_round}"
        )
    return solve_problem(min_aoi_problem(cfg, q, eps, delta), **kwargs)


def solve_cost_soft(cfg: NetworkConfig, q, penalty=None, *, eps: float = DEFAULT_EPS,
                    delta=None, **kwargs) -> SolverResult:
    """Minimum of total penalty plus total AoI."""
    validate_config(cfg)
    q = np.asarray(q, float)
    pen = QuadraticPenalty() if penalty is None else penalty
    if cfg.n_slots_per_round == cfg.n_devices:
        p = cfg.success_probs
        value = float(np.sum(pen.value(q - p) + 1.0 / p + _delta(delta, cfg.n_devices)))
        return _boundary_result(cfg, "cost_soft", value)
    return solve_problem(cost_soft_problem(cfg, q, pen, eps, delta), **kwargs)


def solve_prop_fair(cfg: NetworkConfig, *, eps: float = DEFAULT_EPS, delta=None,
                    **kwargs) -> SolverResult:
    """Maximum of ``sum_i log mu_i - log AoI_i``; with M = N returns the forced point."""
    validate_config(cfg)
    if cfg.n_slots_per_round == cfg.n_devices:
        p = cfg.success_probs
        aoi = 1.0 / p + _delta(delta, cfg.n_devices)
        return _boundary_result(cfg, "prop_fair", float(np.sum(np.log(p) - np.log(aoi))))
    return solve_problem(prop_fair_problem(cfg, eps, delta), **kwargs)


@dataclass
class AdmissionResult:
    feasible: bool
    witness: SecondOrderPoint | None
    margin: float
    solver: SolverResult | None = None

    def to_dict(self) -> dict:
        return {
            "feasible": bool(self.feasible),
            "margin": float(self.margin),
            "witness": None if self.witness is None else self.witness.to_dict(),
            "solver": None if self.solver is None else self.solver.to_dict(),
        }


ADMISSION_TOL = 1e-9


def check_admission(cfg: NetworkConfig, e, *, eps: float = DEFAULT_EPS, delta=None,
                    first_feasible: bool = False, **kwargs) -> AdmissionResult:
    """Decide whether AoI ceilings ``e`` are jointly attainable.

    With ``first_feasible`` the search stops at the first point with a
    nonnegative margin instead of maximising it (used by boundary bisection).
    """
    validate_config(cfg)
    e = np.asarray(e, float)
    n = cfg.n_devices
    if np.any(e < 1):
        return AdmissionResult(False, None, -np.inf)
    if cfg.n_slots_per_round == n:
        point = _full_schedule_point(cfg)
        slack = e - _delta(delta, n) - 1.0 / cfg.success_probs
        ok = bool(np.all(slack >= -ADMISSION_TOL))
        return AdmissionResult(ok, point if ok else None, float(slack.min()))
    try:
        problem = admission_problem(cfg, e, eps, delta)
        problem.project(problem.center_start())
    except InfeasibleProblemError:
        return AdmissionResult(False, None, -np.inf)
    stop = (lambda f: f <= 0.0) if first_feasible else None
    result = solve_problem(problem, stop=stop, **kwargs)
    ok = result.objective >= -ADMISSION_TOL
    return AdmissionResult(ok, result.point if ok else None, result.objective, result)
