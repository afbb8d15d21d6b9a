"""Slotted transmission model: scheduling, Bernoulli channels, AoI recursion.

Randomness
----------
Each trace owns two independent Philox streams derived from its seed: a
channel stream and a policy stream (used only by the Random policy).  Slot
``t`` consumes exactly N uniforms from each stream, one per device, so the
channel draw of device ``i`` in slot ``t`` depends only on (seed, t, i).
A device succeeds when it is scheduled and its uniform is below ``p_i``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import IO, Callable

import numpy as np

from . import _kernel
from .analysis import DEFAULT_BLOCK_LEN, batch_means
from .core import ConfigError, NetworkConfig, SimState, TraceMetrics, validate_config
from .policies import Policy

CHUNK_SLOTS = 1 << 16


@dataclass(frozen=True)
class SlotResult:
    scheduled: np.ndarray
    successes: np.ndarray


def trace_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Channel and policy generators for one trace."""
    chan, pol = np.random.SeedSequence(int(seed)).spawn(2)
    return np.random.Generator(np.random.Philox(chan)), np.random.Generator(np.random.Philox(pol))


def _check_schedule(schedule, cfg: NetworkConfig) -> np.ndarray:
    idx = np.asarray(schedule, dtype=np.int64).reshape(-1)
    if idx.size != cfg.n_slots_per_round or np.unique(idx).size != idx.size:
        raise ConfigError(f"schedule must hold {cfg.n_slots_per_round} distinct devices, got {idx}")
    if np.any(idx < 0) or np.any(idx >= cfg.n_devices):
        raise ConfigError(f"schedule index out of range 0..{cfg.n_devices - 1}: {idx}")
    return np.sort(idx)


def step(state: SimState, schedule, cfg: NetworkConfig, rng: np.random.Generator):
    """Advance ``state`` by one slot in place; return ``(SlotResult, state)``."""
    idx = _check_schedule(schedule, cfg)
    u = rng.random(cfg.n_devices)
    scheduled = np.zeros(cfg.n_devices, dtype=bool)
    scheduled[idx] = True
    z = scheduled & (u < cfg.success_probs)
    state.aoi = np.where(z, 1, state.aoi + 1)
    state.delivered = state.delivered + z
    state.t += 1
    return SlotResult(idx, z.astype(np.int8)), state


def _effective_block_len(horizon: int, block_len: int) -> int:
    if horizon >= 10 * block_len:
        return block_len
    return max(1, horizon // 10)


def _finish(cfg, horizon, block_len, delivered, aoi_sum, block_counts, proj_sq, gaps, spread):
    thr = delivered / horizon
    k = horizon // block_len
    variance = (batch_means(block_counts[:k], thr, block_len) if k > 0
                else np.full(cfg.n_devices, np.nan))
    return TraceMetrics(
        horizon=horizon,
        emp_throughput=thr,
        emp_aoi=aoi_sum / horizon,
        emp_variance=np.asarray(variance, dtype=float),
        interdelivery=gaps,
        delivered=delivered,
        block_len=block_len,
        block_counts=block_counts[:k],
        proj_sq_sum=float(proj_sq),
        spread=spread,
    )


def run_trace(
    cfg: NetworkConfig,
    policy: Policy,
    horizon: int,
    seed: int,
    *,
    block_len: int = DEFAULT_BLOCK_LEN,
    record_gaps: bool = True,
    record_spread: bool = False,
) -> TraceMetrics:
    """Simulate ``horizon`` slots under ``policy``; deterministic in ``seed``.

    ``block_len`` is shrunk to ``horizon // 10`` for short traces so the
    batch-means estimate always has at least ten blocks.  ``record_spread``
    stores ``max_i |d_i - D|`` per slot (VWD only).
    """
    validate_config(cfg)
    if not isinstance(policy, Policy):
        raise ConfigError(f"unknown policy {policy!r}")
    policy.check(cfg)
    if horizon < 1:
        raise ValueError("horizon must be at least one slot")

    n, m = cfg.n_devices, cfg.n_slots_per_round
    p = np.ascontiguousarray(cfg.success_probs, dtype=float)
    kind, a, b, c, scalar = policy.kernel_args(cfg)
    L = _effective_block_len(horizon, block_len)

    aoi = np.ones(n, dtype=np.int64)
    delivered = np.zeros(n, dtype=np.int64)
    aoi_sum = np.zeros(n, dtype=np.int64)
    block_counts = np.zeros((horizon // L, n), dtype=np.int64)
    cur_block = np.zeros(n, dtype=np.int64)
    cap = m * horizon if record_gaps else 1
    gap_dev = np.zeros(cap, dtype=np.int32)
    gap_val = np.zeros(cap, dtype=np.int64)
    gap_n = np.zeros(1, dtype=np.int64)
    seen = np.zeros(n, dtype=np.bool_)
    proj_sq = np.zeros(1)
    spread = np.zeros(horizon if record_spread else 1)
    no_policy_draws = np.zeros((1, n))

    chan_rng, pol_rng = trace_streams(seed)
    for start in range(0, horizon, CHUNK_SLOTS):
        count = min(CHUNK_SLOTS, horizon - start)
        u_chan = chan_rng.random((count, n))
        u_pol = pol_rng.random((count, n)) if policy.uses_rng else no_policy_draws
        _kernel.advance(kind, count, start, m, p, a, b, c, float(scalar), u_chan, u_pol,
                        aoi, delivered, aoi_sum, L, block_counts, cur_block,
                        record_gaps, gap_dev, gap_val, gap_n, seen,
                        proj_sq, record_spread, spread)

    gaps = None
    if record_gaps:
        used_dev, used_val = gap_dev[: gap_n[0]], gap_val[: gap_n[0]]
        gaps = [used_val[used_dev == i].copy() for i in range(n)]
    return _finish(cfg, horizon, L, delivered, aoi_sum, block_counts, proj_sq[0], gaps,
                   spread if record_spread else None)


def run_trace_reference(cfg: NetworkConfig, policy: Policy, horizon: int, seed: int,
                        *, block_len: int = DEFAULT_BLOCK_LEN) -> TraceMetrics:
    """Slow pure-Python replay of :func:`run_trace` built from :func:`step`."""
    validate_config(cfg)
    policy.check(cfg)
    n, m = cfg.n_devices, cfg.n_slots_per_round
    L = _effective_block_len(horizon, block_len)
    chan_rng, pol_rng = trace_streams(seed)
    state = SimState.initial(n, policy.init_state(cfg))
    aoi_sum = np.zeros(n, dtype=np.int64)
    block_counts = np.zeros((horizon // L, n), dtype=np.int64)
    gaps: list[list[int]] = [[] for _ in range(n)]
    seen = np.zeros(n, dtype=bool)
    proj_sq = 0.0
    for t in range(horizon):
        schedule = policy.select(state, cfg, pol_rng)
        aoi_sum += state.aoi
        before = state.aoi.copy()
        result, state = step(state, schedule, cfg, chan_rng)
        for i in np.flatnonzero(result.successes):
            if seen[i]:
                gaps[i].append(int(before[i]))
            seen[i] = True
        inc = m - float(np.sum(result.successes / cfg.success_probs))
        proj_sq += inc * inc
        kb = t // L
        if kb < block_counts.shape[0]:
            block_counts[kb] += result.successes
    return _finish(cfg, horizon, L, state.delivered.copy(), aoi_sum, block_counts, proj_sq,
                   [np.asarray(g, dtype=np.int64) for g in gaps], None)


@dataclass
class EnsembleMetrics:
    """Across-trace means and standard errors of the per-device statistics."""

    n_traces: int
    throughput_mean: np.ndarray
    throughput_se: np.ndarray
    aoi_mean: np.ndarray
    aoi_se: np.ndarray
    variance_mean: np.ndarray
    variance_se: np.ndarray
    traces: list[TraceMetrics] = field(repr=False, default_factory=list)

    def statistic(self, fn: Callable[[TraceMetrics], float]) -> tuple[float, float]:
        """Mean and standard error of a scalar computed from each trace."""
        values = np.array([fn(tr) for tr in self.traces], dtype=float)
        return float(values.mean()), _stderr(values)


def _stderr(values: np.ndarray, axis=0):
    n = values.shape[axis]
    if n < 2:
        return np.zeros(values.shape[1:]) if values.ndim > 1 else 0.0
    return np.std(values, axis=axis, ddof=1) / np.sqrt(n)


def run_ensemble(cfg: NetworkConfig, policy: Policy, horizon: int, n_traces: int,
                 base_seed: int, **trace_kwargs) -> EnsembleMetrics:
    """Run ``n_traces`` traces; trace ``k`` uses seed ``base_seed + k``."""
    if n_traces < 1:
        raise ValueError("n_traces must be at least 1")
    trace_kwargs.setdefault("record_gaps", False)
    traces = [run_trace(cfg, policy, horizon, base_seed + k, **trace_kwargs)
              for k in range(n_traces)]
    thr = np.array([tr.emp_throughput for tr in traces])
    aoi = np.array([tr.emp_aoi for tr in traces])
    var = np.array([tr.emp_variance for tr in traces])
    return EnsembleMetrics(
        n_traces=n_traces,
        throughput_mean=thr.mean(axis=0),
        throughput_se=_stderr(thr),
        aoi_mean=aoi.mean(axis=0),
        aoi_se=_stderr(aoi),
        variance_mean=var.mean(axis=0),
        variance_se=_stderr(var),
        traces=traces,
    )


def metrics_to_csv(metrics: TraceMetrics | EnsembleMetrics, fh: IO[str]) -> None:
    """One row per device."""
    writer = csv.writer(fh, lineterminator="\n")
    if isinstance(metrics, EnsembleMetrics):
        writer.writerow(["device", "throughput_mean", "throughput_se", "aoi_mean", "aoi_se",
                         "variance_mean", "variance_se"])
        for i in range(metrics.throughput_mean.size):
            writer.writerow([i] + [f"{v:.10g}" for v in (
                metrics.throughput_mean[i], metrics.throughput_se[i], metrics.aoi_mean[i],
                metrics.aoi_se[i], metrics.variance_mean[i], metrics.variance_se[i])])
        return
    writer.writerow(["device", "throughput", "aoi", "variance", "delivered"])
    for i in range(metrics.n_devices):
        writer.writerow([i, f"{metrics.emp_throughput[i]:.10g}", f"{metrics.emp_aoi[i]:.10g}",
                         f"{metrics.emp_variance[i]:.10g}", int(metrics.delivered[i])])


def _histogram(gaps: np.ndarray) -> dict[str, int]:
    values, counts = np.unique(gaps, return_counts=True)
    return {str(int(v)): int(c) for v, c in zip(values, counts)}


def metrics_to_dict(metrics: TraceMetrics | EnsembleMetrics) -> dict:
    if isinstance(metrics, EnsembleMetrics):
        return {
            "n_traces": metrics.n_traces,
            "throughput_mean": metrics.throughput_mean.tolist(),
            "throughput_se": np.asarray(metrics.throughput_se).tolist(),
            "aoi_mean": metrics.aoi_mean.tolist(),
            "aoi_se": np.asarray(metrics.aoi_se).tolist(),
            "variance_mean": metrics.variance_mean.tolist(),
            "variance_se": np.asarray(metrics.variance_se).tolist(),
        }
    out = {
        "horizon": metrics.horizon,
        "emp_throughput": metrics.emp_throughput.tolist(),
        "emp_aoi": metrics.emp_aoi.tolist(),
        "emp_variance": metrics.emp_variance.tolist(),
        "delivered": metrics.delivered.tolist(),
        "block_len": metrics.block_len,
    }
    if metrics.interdelivery is not None:
        out["interdelivery_histograms"] = [_histogram(g) for g in metrics.interdelivery]
    return out


def metrics_to_json(metrics: TraceMetrics | EnsembleMetrics, fh: IO[str]) -> None:
    json.dump(metrics_to_dict(metrics), fh, indent=2, sort_keys=True)
    fh.write("\n")
