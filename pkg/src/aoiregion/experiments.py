"""Scenario builders and sweep runners for the four experiment families.

A :class:`Scenario` pins down a network, one of the four optimisation
problems and the simulation budget.  :func:`run_sweep` walks a grid of one
sweep variable, solves the theoretical benchmark at each point, simulates the
requested policies and returns plot-ready rows.

Seeding: grid point ``k`` simulates every policy with seeds
``base_seed + k * SEED_STRIDE + j`` for trace ``j``, so policies at one grid
point share channel realisations and no grid point depends on another.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Callable

import numpy as np

from .core import (
    ConfigError,
    InfeasibleProblemError,
    NetworkConfig,
    SecondOrderPoint,
    TraceMetrics,
    validate_config,
)
from .policies import make_policy
from .region import aoi_approx
from .simulator import EnsembleMetrics, run_ensemble
from .solvers import (
    AdmissionResult,
    QuadraticPenalty,
    SolverResult,
    check_admission,
    solve_cost_soft,
    solve_min_aoi_hard,
    solve_prop_fair,
)

SCHEMA_VERSION = 1
PROBLEMS = ("min_aoi_hard", "cost_soft", "prop_fair", "admission")

DEFAULT_TRACES = 50
SLOTS_PER_DEVICE = 100_000
SEED_STRIDE = 1_000_000

M_GRID = (1, 2, 4, 8, 16)
LAMBDA_GRID = (0.5, 0.7, 0.9, 1.1, 1.3, 1.5)
F_GRID = tuple(float(f) for f in np.linspace(6.0, 24.0, 10))
G_RESOLUTION = 1e-2
G_MAX = 1e4

EX4_DEVICES = 10
EX4_SLOTS = 1
EX4_PROB = 0.8


def default_horizon(n_devices: int) -> int:
    return SLOTS_PER_DEVICE * n_devices


# --------------------------------------------------------------------------
# scenarios
# --------------------------------------------------------------------------

@dataclass
class Scenario:
    """A network, an optimisation problem and a simulation budget.

    ``params`` holds plain JSON values: ``q`` (throughput requirements) for
    the AoI and cost problems, ``e`` (AoI ceilings) for admission, plus
    informational entries such as ``lambda``.
    """

    cfg: NetworkConfig
    problem: str
    params: dict[str, Any] = field(default_factory=dict)
    horizon: int | None = None
    n_traces: int = DEFAULT_TRACES
    base_seed: int = 0

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; expected one of {PROBLEMS}")
        validate_config(self.cfg)
        n = self.cfg.n_devices
        for key in ("q", "e"):
            if key in self.params and len(self.params[key]) != n:
                raise ConfigError(f"params[{key!r}] has {len(self.params[key])} entries, "
                                  f"network has {n} devices")
        if self.problem in ("min_aoi_hard", "cost_soft") and "q" not in self.params:
            raise ConfigError(f"{self.problem} scenarios need params['q']")
        if self.problem == "admission" and "e" not in self.params:
            raise ConfigError("admission scenarios need params['e']")
        if self.horizon is None:
            self.horizon = default_horizon(n)
        if self.horizon < 1 or self.n_traces < 1:
            raise ConfigError("horizon and n_traces must be positive")

    @property
    def q(self) -> np.ndarray:
        return np.asarray(self.params.get("q", np.zeros(self.cfg.n_devices)), dtype=float)

    @property
    def e(self) -> np.ndarray:
        return np.asarray(self.params["e"], dtype=float)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "network": self.cfg.to_dict(),
            "problem": self.problem,
            "params": self.params,
            "horizon": int(self.horizon),
            "n_traces": int(self.n_traces),
            "base_seed": int(self.base_seed),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Scenario":
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported scenario schema_version {version!r}")
        try:
            return cls(
                cfg=NetworkConfig.from_dict(data["network"]),
                problem=data["problem"],
                params=dict(data.get("params", {})),
                horizon=data.get("horizon"),
                n_traces=int(data.get("n_traces", DEFAULT_TRACES)),
                base_seed=int(data.get("base_seed", 0)),
            )
        except KeyError as exc:
            raise ConfigError(f"scenario file is missing {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(data)


def _check_dims(n, m):
    if int(n) != n or int(m) != m or m < 1 or n < m:
        raise ConfigError(f"need integers N >= M >= 1, got N={n}, M={m}")
    return int(n), int(m)


def _floats(values) -> list[float]:
    return [float(v) for v in values]


def build_example1(n: int, m: int, lam: float = 0.9, **budget) -> Scenario:
    """Hard throughput floors ``q_i = lam p_i / N`` with ``p_i = i / N``."""
    n, m = _check_dims(n, m)
    if lam < 0:
        raise ConfigError("lambda must be nonnegative")
    p = np.arange(1, n + 1) / n
    cfg = NetworkConfig(n, m, p)
    return Scenario(cfg, "min_aoi_hard", {"q": _floats(lam * p / n), "lambda": float(lam)},
                    **budget)


def example2_tiers(n: int, m: int, p: float = EX4_PROB) -> np.ndarray:
    """``gamma_i``: ``1.6 p M / N`` for the first half of the devices, ``0.4 p M / N`` after."""
    i = np.arange(1, n + 1)
    return np.where(i <= n / 2, 1.6, 0.4) * p * m / n


def build_example2(n: int, m: int, lam: float = 1.0, variant: str = "lambda_sweep",
                   **budget) -> Scenario:
    """Soft throughput requirements with penalty ``C(x) = x**2`` on shortfalls.

    ``lambda_sweep`` uses ``p_i = 0.8`` and ``q_i = lam gamma_i``;
    ``ratio_sweep`` reuses the first example's ``p`` and ``q``.
    """
    n, m = _check_dims(n, m)
    if lam < 0:
        raise ConfigError("lambda must be nonnegative")
    if variant == "lambda_sweep":
        p = np.full(n, EX4_PROB)
        q = lam * example2_tiers(n, m)
    elif variant == "ratio_sweep":
        p = np.arange(1, n + 1) / n
        q = lam * p / n
    else:
        raise ConfigError(f"unknown example 2 variant {variant!r}")
    cfg = NetworkConfig(n, m, p)
    params = {"q": _floats(q), "lambda": float(lam), "variant": variant, "penalty_scale": 1.0}
    return Scenario(cfg, "cost_soft", params, **budget)


def build_example3(n: int, m: int, **budget) -> Scenario:
    """Proportional fairness in throughput and AoI with ``p_i = i / N``."""
    n, m = _check_dims(n, m)
    cfg = NetworkConfig(n, m, np.arange(1, n + 1) / n)
    return Scenario(cfg, "prop_fair", {}, **budget)


def build_example4(f: float, g: float, **budget) -> Scenario:
    """Admission control: ten devices at ``p = 0.8``, one slot, ceilings ``f`` then ``g``."""
    if not (f >= 1 and g >= 1):
        raise ConfigError(f"AoI ceilings must be at least 1, got f={f}, g={g}")
    cfg = NetworkConfig(EX4_DEVICES, EX4_SLOTS, np.full(EX4_DEVICES, EX4_PROB))
    half = EX4_DEVICES // 2
    e = [float(f)] * half + [float(g)] * (EX4_DEVICES - half)
    return Scenario(cfg, "admission", {"e": e, "f": float(f), "g": float(g)}, **budget)


# --------------------------------------------------------------------------
# theory and simulation for one scenario
# --------------------------------------------------------------------------

def penalty_of(scenario: Scenario) -> QuadraticPenalty:
    return QuadraticPenalty(float(scenario.params.get("penalty_scale", 1.0)))


def solve_scenario(scenario: Scenario, **solver_kw) -> SolverResult | AdmissionResult:
    """Theoretical benchmark; raises :class:`InfeasibleProblemError` when there is none."""
    cfg = scenario.cfg
    if scenario.problem == "min_aoi_hard":
        return solve_min_aoi_hard(cfg, scenario.q, **solver_kw)
    if scenario.problem == "cost_soft":
        return solve_cost_soft(cfg, scenario.q, penalty_of(scenario), **solver_kw)
    if scenario.problem == "prop_fair":
        return solve_prop_fair(cfg, **solver_kw)
    return check_admission(cfg, scenario.e, **solver_kw)


def trace_objective(scenario: Scenario) -> Callable[[TraceMetrics], float]:
    """Empirical counterpart of the scenario's objective, evaluated on one trace.

    Admission scenarios report the worst AoI excess ``max_i (AoI_i - e_i)``,
    which is nonpositive when every ceiling is met.
    """
    if scenario.problem == "min_aoi_hard":
        return lambda tr: float(np.sum(tr.emp_aoi))
    if scenario.problem == "cost_soft":
        pen, q = penalty_of(scenario), scenario.q
        return lambda tr: float(np.sum(pen.value(q - tr.emp_throughput)) + np.sum(tr.emp_aoi))
    if scenario.problem == "prop_fair":
        def utility(tr):
            with np.errstate(divide="ignore"):
                return float(np.sum(np.log(tr.emp_throughput) - np.log(tr.emp_aoi)))
        return utility
    e = scenario.e
    return lambda tr: float(np.max(tr.emp_aoi - e))


def simulate_scenario(scenario: Scenario, policy: str, targets: SecondOrderPoint | None = None,
                      *, seed: int | None = None, **trace_kw) -> EnsembleMetrics:
    """Ensemble of ``scenario.n_traces`` traces under ``policy``.

    VWD needs ``targets``; Max-Weight uses the scenario's ``q`` (zeros when
    the problem has none).
    """
    pol = make_policy(policy, targets=targets, q=scenario.q)
    base = scenario.base_seed if seed is None else seed
    return run_ensemble(scenario.cfg, pol, int(scenario.horizon), scenario.n_traces, base,
                        **trace_kw)


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------

@dataclass
class SweepRow:
    sweep_var: float
    policy: str
    objective_mean: float
    objective_se: float
    status: str = "ok"
    detail: dict[str, Any] = field(default_factory=dict, repr=False)

    def csv_fields(self) -> list[str]:
        return [_fmt(self.sweep_var), self.policy, _fmt(self.objective_mean),
                _fmt(self.objective_se), self.status]


@dataclass
class SweepResult:
    family: str
    sweep_name: str
    rows: list[SweepRow]
    settings: dict[str, Any] = field(default_factory=dict)

    def select(self, policy: str) -> list[SweepRow]:
        return [r for r in self.rows if r.policy == policy]

    def write_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sweep_var", "policy", "objective_mean", "objective_se", "status"])
        for row in self.rows:
            writer.writerow(row.csv_fields())

    def sidecar(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "family": self.family,
            "sweep_name": self.sweep_name,
            "settings": self.settings,
            "rows": [
                {"sweep_var": r.sweep_var, "policy": r.policy, "objective_mean": _json_num(r.objective_mean),
                 "objective_se": _json_num(r.objective_se), "status": r.status, **r.detail}
                for r in self.rows
            ],
        }

    def write_json(self, fh: IO[str]) -> None:
        json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(x: float) -> str:
    return "nan" if x is None or not math.isfinite(x) else f"{x:.10g}"


def _json_num(x):
    return None if x is None or not math.isfinite(x) else float(x)


def _ensemble_detail(ens: EnsembleMetrics) -> dict[str, Any]:
    return {
        "mu_hat": ens.throughput_mean.tolist(),
        "sigma2_hat": ens.variance_mean.tolist(),
        "aoi_hat": ens.aoi_mean.tolist(),
    }


def _theory_detail(point: SecondOrderPoint) -> dict[str, Any]:
    mu, s2 = point.mu, point.sigma2
    aoi = [float(aoi_approx(m, s)) if m > 0 else math.inf for m, s in zip(mu, s2)]
    return {"mu": mu.tolist(), "sigma2": s2.tolist(), "aoi": [_json_num(a) for a in aoi]}


FAMILIES = {
    # family: (sweep variable, default policies)
    "example1": ("m", ("vwd", "maxweight")),
    "example2_lambda": ("lambda", ("vwd", "maxweight")),
    "example2_ratio": ("m", ("vwd", "maxweight")),
    "example3": ("m", ("vwd", "random")),
    "example4": ("f", ("vwd",)),
}


def default_grid(family: str, n: int | None = None) -> list[float]:
    if family in ("example1", "example2_ratio"):
        return list(M_GRID)
    if family == "example2_lambda":
        return list(LAMBDA_GRID)
    if family == "example3":
        n = 10 if n is None else n
        return sorted({m for m in M_GRID if m <= n} | {n})
    if family == "example4":
        return list(F_GRID)
    raise ConfigError(f"unknown sweep family {family!r}; expected one of {sorted(FAMILIES)}")


def scenario_for(family: str, x: float, *, n: int | None = None, ratio: int | None = None,
                 lam: float = 0.9, g: float | None = None, **budget) -> Scenario:
    """Scenario at grid value ``x`` of ``family``."""
    if family in ("example1", "example2_ratio"):
        m = int(x)
        if m != x:
            raise ConfigError(f"M grid values must be integers, got {x}")
        nn = (10 if ratio is None else int(ratio)) * m
        if family == "example1":
            return build_example1(nn, m, lam, **budget)
        return build_example2(nn, m, lam, "ratio_sweep", **budget)
    if family == "example2_lambda":
        return build_example2(6 if n is None else n, 1, float(x), "lambda_sweep", **budget)
    if family == "example3":
        m = int(x)
        if m != x:
            raise ConfigError(f"M grid values must be integers, got {x}")
        return build_example3(10 if n is None else n, m, **budget)
    if family == "example4":
        return build_example4(float(x), float(x) if g is None else g, **budget)
    raise ConfigError(f"unknown sweep family {family!r}; expected one of {sorted(FAMILIES)}")


def admission_boundary(f: float, *, resolution: float = G_RESOLUTION, g_max: float = G_MAX,
                       **solver_kw) -> float:
    """Smallest ``g`` on the lattice ``1 + k * resolution`` admitted alongside ``f``.

    Feasibility is monotone in ``g``, so a bisection over lattice indices
    returns the exact lattice boundary; using a fixed lattice keeps the
    boundary monotone in ``f`` as well.  Returns ``nan`` when even ``g_max``
    is not admitted.
    """
    def ok(k: int) -> bool:
        sc = build_example4(f, 1.0 + k * resolution)
        return check_admission(sc.cfg, sc.e, first_feasible=True, **solver_kw).feasible

    hi = int(math.ceil((g_max - 1.0) / resolution))
    if not ok(hi):
        return math.nan
    if ok(0):
        return 1.0
    lo = 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return round(1.0 + hi * resolution, 12)


def _sweep_point(family, k, x, policies, scenario, solver_kw, trace_kw, resolution):
    rows: list[SweepRow] = []
    seed = scenario.base_seed + k * SEED_STRIDE
    if family == "example4":
        return _admission_point(x, policies, scenario, seed, solver_kw, trace_kw, resolution)
    try:
        result = solve_scenario(scenario, **solver_kw)
    except InfeasibleProblemError as exc:
        rows.append(SweepRow(x, "theoretical", math.nan, math.nan, f"infeasible: {exc}"))
        for pol in policies:
            rows.append(SweepRow(x, pol, math.nan, math.nan, "skipped: no theoretical targets"))
        return rows
    status = "ok" if (result.converged or result.boundary) else "not converged"
    rows.append(SweepRow(x, "theoretical", float(result.objective), 0.0, status,
                         _theory_detail(result.point)))
    objective = trace_objective(scenario)
    for pol in policies:
        ens = simulate_scenario(scenario, pol, result.point, seed=seed, **trace_kw)
        mean, se = ens.statistic(objective)
        rows.append(SweepRow(x, pol, mean, se, "ok", _ensemble_detail(ens)))
    return rows


def _admission_point(f, policies, scenario, seed, solver_kw, trace_kw, resolution):
    """Theoretical ``g`` boundary at ``f``; VWD reports the AoI it attains there.

    The VWD row's objective is the largest empirical AoI among the ``g``
    devices when driven by the boundary witness, i.e. the ``g`` it actually
    achieves; the sidecar also records whether the ``f`` devices met ``f``.
    """
    g_star = admission_boundary(f, resolution=resolution, **solver_kw)
    if not math.isfinite(g_star):
        rows = [SweepRow(f, "theoretical", math.nan, math.nan, f"infeasible for g <= {G_MAX:g}")]
        rows += [SweepRow(f, pol, math.nan, math.nan, "skipped: no witness") for pol in policies]
        return rows
    sc = build_example4(f, g_star, horizon=scenario.horizon, n_traces=scenario.n_traces,
                        base_seed=scenario.base_seed)
    adm = check_admission(sc.cfg, sc.e, **solver_kw)
    rows = [SweepRow(f, "theoretical", g_star, 0.0, "ok",
                     {"margin": adm.margin, **(_theory_detail(adm.witness) if adm.witness else {})})]
    half = EX4_DEVICES // 2
    for pol in policies:
        if adm.witness is None:
            rows.append(SweepRow(f, pol, math.nan, math.nan, "skipped: no witness"))
            continue
        ens = simulate_scenario(sc, pol, adm.witness, seed=seed, **trace_kw)
        mean, se = ens.statistic(lambda tr: float(np.max(tr.emp_aoi[half:])))
        f_ok = bool(np.all(ens.aoi_mean[:half] <= f + 2 * np.asarray(ens.aoi_se)[:half]))
        rows.append(SweepRow(f, pol, mean, se, "ok", {**_ensemble_detail(ens), "f_met": f_ok}))
    return rows


def run_sweep(family: str, grid=None, policies=None, *, n: int | None = None,
              ratio: int | None = None, lam: float = 0.9, horizon: int | None = None,
              n_traces: int = DEFAULT_TRACES, base_seed: int = 0,
              resolution: float = G_RESOLUTION, solver_kw: dict | None = None,
              trace_kw: dict | None = None,
              progress: Callable[[str], None] | None = None) -> SweepResult:
    """Solve and simulate every grid point of one experiment family.

    ``family`` is one of :data:`FAMILIES`.  ``horizon`` defaults to
    ``100000 * N`` at each grid point.  Rows are ordered by grid position,
    theoretical row first, then ``policies`` in the order given.
    """
    if family not in FAMILIES:
        raise ConfigError(f"unknown sweep family {family!r}; expected one of {sorted(FAMILIES)}")
    sweep_name, default_policies = FAMILIES[family]
    grid = default_grid(family, n) if grid is None else list(grid)
    if not grid:
        raise ConfigError("sweep grid is empty")
    policies = list(default_policies if policies is None else policies)
    solver_kw = dict(solver_kw or {})
    trace_kw = dict(trace_kw or {})
    rows: list[SweepRow] = []
    for k, x in enumerate(grid):
        scenario = scenario_for(family, x, n=n, ratio=ratio, lam=lam, n_traces=n_traces,
                                base_seed=base_seed)
        if horizon is not None:
            scenario.horizon = int(horizon)
        if progress is not None:
            progress(f"{family}: {sweep_name}={x:g} (N={scenario.cfg.n_devices}, "
                     f"M={scenario.cfg.n_slots_per_round})")
        rows.extend(_sweep_point(family, k, float(x), policies, scenario, solver_kw, trace_kw,
                                 resolution))
    settings = {"grid": [float(x) for x in grid], "policies": policies, "n": n, "ratio": ratio,
                "lambda": lam, "horizon": horizon, "n_traces": n_traces, "base_seed": base_seed}
    return SweepResult(family, sweep_name, rows, settings)
