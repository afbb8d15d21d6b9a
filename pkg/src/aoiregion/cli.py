"""Command-line entry point: ``aoiregion {solve,simulate,sweep,region,cdf}``.

Machine-readable results go to standard output (or ``--out``); progress and
human-readable summaries go to standard error.

Exit codes: 0 success, 1 usage or input error, 2 infeasible problem.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .analysis import cdf_comparison, write_cdf_csv
from .core import ConfigError, InfeasibleProblemError, NetworkConfig, SecondOrderPoint, TargetPairs
from .experiments import (
    FAMILIES,
    Scenario,
    build_example1,
    build_example2,
    build_example3,
    build_example4,
    run_sweep,
    simulate_scenario,
    solve_scenario,
)
from .policies import POLICY_NAMES, SIGMA2_FLOOR, make_policy
from .region import DEFAULT_EPS, aoi_approx, check_inner, check_outer
from .simulator import metrics_to_csv, metrics_to_json, run_trace
from .solvers import AdmissionResult

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE = 0, 1, 2

log = logging.getLogger("aoiregion")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common(fmt_default: str) -> argparse.ArgumentParser:
    parent = _Parser(add_help=False)
    g = parent.add_argument_group("common options")
    g.add_argument("--seed", type=int, default=None,
                   help="base random seed (default 0, or the scenario file's)")
    g.add_argument("--horizon", type=int, default=None, help="slots per trace (default 100000*N)")
    g.add_argument("--traces", type=int, default=None, help="independent traces (default 50)")
    g.add_argument("--out", type=Path, default=None, help="output file (default stdout)")
    g.add_argument("--format", choices=("csv", "json"), default=fmt_default,
                   help=f"output format (default {fmt_default})")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return parent


def _scenario_args(p: argparse.ArgumentParser, default: str | None = None) -> None:
    g = p.add_argument_group("scenario")
    g.add_argument("--scenario", choices=("ex1", "ex2", "ex3", "ex4"), default=default,
                   help="built-in experiment family")
    g.add_argument("--scenario-file", "--config", dest="scenario_file", type=Path,
                   help="scenario JSON file (overrides --scenario)")
    g.add_argument("--n", type=int, default=10, help="number of devices N (default 10)")
    g.add_argument("--m", type=int, default=1, help="slots per round M (default 1)")
    g.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="requirement scale (default 0.9 for ex1, 1.0 for ex2)")
    g.add_argument("--variant", choices=("lambda_sweep", "ratio_sweep"), default="lambda_sweep",
                   help="example 2 parameterisation")
    g.add_argument("--f", type=float, default=24.0, help="example 4 ceiling of devices 1-5")
    g.add_argument("--g", type=float, default=24.0, help="example 4 ceiling of devices 6-10")
    g.add_argument("--p", type=_floats, default=None, help="override success probabilities")
    g.add_argument("--q", type=_floats, default=None, help="override throughput requirements")
    g.add_argument("--e", type=_floats, default=None, help="override AoI ceilings (admission)")
    g.add_argument("--starts", type=int, default=None, help="solver multi-starts (default 20)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aoiregion",
                     description="Throughput/AoI capacity-region solver and scheduling simulator.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("solve", parents=[_common("json")], help="solve a scenario's optimisation problem",
                       description="Solve the scenario's problem and print the result as JSON.")
    _scenario_args(p, "ex1")

    p = sub.add_parser("simulate", parents=[_common("csv")], help="simulate a policy on a scenario",
                       description="Run an ensemble (or one trace with --traces 1) and write "
                                   "per-device metrics.")
    _scenario_args(p, "ex1")
    p.add_argument("--policy", choices=POLICY_NAMES, default="vwd")
    p.add_argument("--targets", type=Path, default=None,
                   help="VWD targets JSON {mu, sigma2} (default: solve the scenario)")

    p = sub.add_parser("sweep", parents=[_common("csv")], help="run an experiment family sweep",
                       description="Solve and simulate a grid; CSV rows plus a JSON sidecar "
                                   "(OUT.json) with per-device estimates.")
    p.add_argument("--family", choices=sorted(FAMILIES), required=True)
    p.add_argument("--grid", type=_floats, default=None, help="comma-separated sweep values")
    p.add_argument("--policies", default=None, help="comma-separated policies")
    p.add_argument("--n", type=int, default=None, help="devices for fixed-N families")
    p.add_argument("--ratio", type=int, default=None, help="N/M for ratio families (default 10)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.9)
    p.add_argument("--starts", type=int, default=None, help="solver multi-starts (default 20)")
    p.add_argument("--resolution", type=float, default=1e-2, help="example 4 g resolution")

    p = sub.add_parser("region", parents=[_common("json")], help="check a point against the bounds",
                       description="Check a (mu, sigma2) point against target pairs.")
    p.add_argument("--point", type=Path, required=True,
                   help="JSON {mu, sigma2}, or a solve result containing 'point'")
    p.add_argument("--pairs", type=Path, required=True, help="JSON {m, h}")
    p.add_argument("--bound", choices=("inner", "outer"), default="inner")
    p.add_argument("--network", type=Path, default=None, help="network JSON {n_devices, ...}")
    p.add_argument("--p", type=_floats, default=None, help="success probabilities")
    p.add_argument("--m", type=int, default=None, help="slots per round M")
    p.add_argument("--eps", type=float, default=DEFAULT_EPS, help="inner-bound strictness")

    p = sub.add_parser("cdf", parents=[_common("csv")], help="inter-delivery CDF comparison",
                       description="Empirical inter-delivery CDF against the fitted inverse "
                                   "Gaussian for one device under VWD.")
    _scenario_args(p, "ex1")
    p.add_argument("--device", type=int, default=None,
                   help="device index (default: largest AoI approximation error)")
    p.add_argument("--x-max", type=int, default=None, help="largest integer point")
    p.add_argument("--fit", choices=("target", "empirical", "moments"), default="target",
                   help="inverse-Gaussian parameters: solver targets (default), the trace's "
                        "own (mu, sigma2) estimates, or the gaps' sample moments")
    return parser


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _read_json(path: Path):
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: not valid JSON ({exc})") from None


def _scenario(args) -> Scenario:
    budget = {"base_seed": args.seed or 0}
    if args.traces is not None:
        budget["n_traces"] = args.traces
    if args.scenario_file is not None:
        sc = Scenario.load(args.scenario_file)
        if args.seed is not None:
            sc.base_seed = args.seed
        if args.traces is not None:
            sc.n_traces = args.traces
    elif args.scenario == "ex1":
        sc = build_example1(args.n, args.m, 0.9 if args.lam is None else args.lam, **budget)
    elif args.scenario == "ex2":
        sc = build_example2(args.n, args.m, 1.0 if args.lam is None else args.lam, args.variant,
                            **budget)
    elif args.scenario == "ex3":
        sc = build_example3(args.n, args.m, **budget)
    else:
        sc = build_example4(args.f, args.g, **budget)
    if args.p is not None:
        cfg = sc.cfg
        sc = Scenario(NetworkConfig(cfg.n_devices, cfg.n_slots_per_round, args.p), sc.problem,
                      sc.params, None, sc.n_traces, sc.base_seed)
    if args.q is not None:
        sc = Scenario(sc.cfg, sc.problem, {**sc.params, "q": args.q}, None, sc.n_traces,
                      sc.base_seed)
    if args.e is not None:
        sc = Scenario(sc.cfg, sc.problem, {**sc.params, "e": args.e}, None, sc.n_traces,
                      sc.base_seed)
    if args.horizon is not None:
        sc.horizon = args.horizon
    return sc


def _solver_kw(args) -> dict:
    kw = {"seed": args.seed or 0}
    if args.starts is not None:
        kw["n_starts"] = args.starts
    return kw


def _emit(args, text: str) -> None:
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _solve_targets(sc: Scenario, args) -> SecondOrderPoint:
    result = solve_scenario(sc, **_solver_kw(args))
    if isinstance(result, AdmissionResult):
        if not result.feasible:
            raise InfeasibleProblemError("AoI ceilings are not admissible; no VWD targets")
        return result.witness
    return result.point


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_solve(args) -> int:
    sc = _scenario(args)
    result = solve_scenario(sc, **_solver_kw(args))
    out = result.to_dict()
    out["scenario"] = sc.to_dict()
    _emit(args, _json_text(out))
    if isinstance(result, AdmissionResult):
        log.warning("admission %s (margin %.6g)", "feasible" if result.feasible else "infeasible",
                    result.margin)
        return EXIT_OK if result.feasible else EXIT_INFEASIBLE
    log.warning("%s objective %.10g (converged=%s)", result.problem, result.objective,
                result.converged)
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    targets = None
    if args.policy == "vwd":
        targets = (SecondOrderPoint.from_dict(_read_json(args.targets)) if args.targets
                   else _solve_targets(sc, args))
    buf = io.StringIO()
    if sc.n_traces == 1:
        pol = make_policy(args.policy, targets=targets, q=sc.q)
        metrics = run_trace(sc.cfg, pol, int(sc.horizon), sc.base_seed, record_gaps=False)
    else:
        metrics = simulate_scenario(sc, args.policy, targets)
    (metrics_to_json if args.format == "json" else metrics_to_csv)(metrics, buf)
    _emit(args, buf.getvalue())
    return EXIT_OK


def cmd_sweep(args) -> int:
    policies = None if args.policies is None else [s.strip() for s in args.policies.split(",")]
    for pol in policies or []:
        if pol not in POLICY_NAMES:
            raise UsageError(f"unknown policy {pol!r}; expected one of {POLICY_NAMES}")
    solver_kw = {} if args.starts is None else {"n_starts": args.starts}
    result = run_sweep(args.family, args.grid, policies, n=args.n, ratio=args.ratio, lam=args.lam,
                       horizon=args.horizon, n_traces=50 if args.traces is None else args.traces,
                       base_seed=args.seed or 0, resolution=args.resolution, solver_kw=solver_kw,
                       progress=lambda msg: log.info("%s", msg))
    buf = io.StringIO()
    if args.format == "json":
        result.write_json(buf)
        _emit(args, buf.getvalue())
        return EXIT_OK
    result.write_csv(buf)
    _emit(args, buf.getvalue())
    if args.out is not None:
        side = io.StringIO()
        result.write_json(side)
        args.out.with_name(args.out.name + ".json").write_text(side.getvalue())
    return EXIT_OK


def _network_for_region(args, n: int) -> NetworkConfig:
    if args.network is not None:
        return NetworkConfig.from_dict(_read_json(args.network))
    if args.p is None or args.m is None:
        raise UsageError("region needs --network, or both --p and --m")
    if len(args.p) != n:
        raise UsageError(f"--p has {len(args.p)} entries, point has {n}")
    return NetworkConfig(n, args.m, args.p)


def cmd_region(args) -> int:
    raw = _read_json(args.point)
    point = SecondOrderPoint.from_dict(raw.get("point", raw) if isinstance(raw, dict) else raw)
    pairs = TargetPairs.from_dict(_read_json(args.pairs))
    cfg = _network_for_region(args, len(point))
    if len(pairs) != len(point):
        raise UsageError(f"pairs have {len(pairs)} devices, point has {len(point)}")
    if args.bound == "inner":
        report = check_inner(pairs, point, cfg, eps=args.eps)
    else:
        report = check_outer(pairs, point, cfg)
    _emit(args, _json_text(report.to_dict()))
    log.warning("%s bound: %s", args.bound, "feasible" if report.feasible
                else "violated " + ", ".join(c for c, _ in report.violated))
    return EXIT_OK


def cmd_cdf(args) -> int:
    sc = _scenario(args)
    targets = _solve_targets(sc, args)
    pol = make_policy("vwd", targets=targets)
    horizon = int(sc.horizon)
    trace = run_trace(sc.cfg, pol, horizon, sc.base_seed, record_gaps=True)
    if args.device is None:
        with np.errstate(divide="ignore", invalid="ignore"):
            theory = np.array([aoi_approx(m, s) if m > 0 else np.inf
                               for m, s in zip(targets.mu, targets.sigma2)])
        err = np.abs(trace.emp_aoi - theory)
        device = int(np.nanargmax(np.where(np.isfinite(err), err, -1.0)))
    else:
        device = args.device
    if not 0 <= device < sc.cfg.n_devices:
        raise UsageError(f"--device must be in 0..{sc.cfg.n_devices - 1}")
    gaps = trace.interdelivery[device]
    if gaps.size == 0:
        raise UsageError(f"device {device} has fewer than two deliveries; increase --horizon")
    if args.fit == "empirical":
        mu, s2 = float(trace.emp_throughput[device]), float(trace.emp_variance[device])
    else:
        mu, s2 = float(targets.mu[device]), float(targets.sigma2[device])
    fit = "moments" if args.fit == "moments" else "target"
    k, f_emp, f_ig = cdf_comparison(gaps, mu, max(s2, SIGMA2_FLOOR), args.x_max, fit=fit)
    buf = io.StringIO()
    if args.format == "json":
        json.dump({"device": device, "fit": args.fit, "k": k.tolist(), "empirical_cdf": f_emp.tolist(),
                   "inverse_gaussian_cdf": f_ig.tolist()}, buf, indent=2, sort_keys=True)
        buf.write("\n")
    else:
        write_cdf_csv(buf, k, f_emp, f_ig)
    _emit(args, buf.getvalue())
    log.warning("device %d: max CDF gap %.4f over %d gaps", device,
                float(np.max(np.abs(f_emp - f_ig))), gaps.size)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "region": cmd_region,
    "cdf": cmd_cdf,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        return COMMANDS[args.command](args)
    except InfeasibleProblemError as exc:
        print(f"aoiregion {args.command}: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (UsageError, ConfigError, KeyError) as exc:
        print(f"aoiregion {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
