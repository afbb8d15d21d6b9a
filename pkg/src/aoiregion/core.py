"""Domain types shared by the simulator, policies, region checks and solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


class ConfigError(ValueError):
    """A network configuration or parameter vector violates an invariant."""


class InfeasibleProblemError(ValueError):
    """The constraint set of an optimization problem is empty."""


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class NetworkConfig:
    """N devices sharing M transmission opportunities per slot.

    ``success_probs[i]`` is the probability that a transmission from device
    ``i`` reaches the base station.
    """

    n_devices: int
    n_slots_per_round: int
    success_probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "success_probs", _frozen_array(self.success_probs))

    @property
    def N(self) -> int:
        return self.n_devices

    @property
    def M(self) -> int:
        return self.n_slots_per_round

    @property
    def p(self) -> np.ndarray:
        return self.success_probs

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_devices": int(self.n_devices),
            "n_slots_per_round": int(self.n_slots_per_round),
            "success_probs": [float(x) for x in self.success_probs],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "NetworkConfig":
        cfg = cls(
            n_devices=int(data["n_devices"]),
            n_slots_per_round=int(data["n_slots_per_round"]),
            success_probs=data["success_probs"],
        )
        validate_config(cfg)
        return cfg

    def __eq__(self, other):
        if not isinstance(other, NetworkConfig):
            return NotImplemented
        return (
            self.n_devices == other.n_devices
            and self.n_slots_per_round == other.n_slots_per_round
            and np.array_equal(self.success_probs, other.success_probs)
        )

    def __hash__(self):
        return hash((self.n_devices, self.n_slots_per_round, self.success_probs.tobytes()))


def validate_config(cfg: NetworkConfig) -> NetworkConfig:
    """Return ``cfg`` unchanged if it is well formed, otherwise raise ConfigError."""
    n, m = cfg.n_devices, cfg.n_slots_per_round
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ConfigError(f"n_devices must be a positive integer, got {n!r}")
    if not isinstance(m, (int, np.integer)) or m < 1 or m > n:
        raise ConfigError(f"n_slots_per_round must satisfy 1 <= M <= N={n}, got {m!r}")
    p = cfg.success_probs
    if p.shape != (n,):
        raise ConfigError(f"success_probs has {p.size} entries, expected {n}")
    for i, pi in enumerate(p):
        if not (0.0 < pi <= 1.0):
            raise ConfigError(f"success_probs[{i}]={pi!r} is outside (0, 1]")
    return cfg


@dataclass(frozen=True)
class SecondOrderPoint:
    """Per-device target mean delivery rate and temporal variance."""

    mu: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        mu = _frozen_array(self.mu)
        sigma2 = _frozen_array(self.sigma2)
        if mu.shape != sigma2.shape:
            raise ConfigError("mu and sigma2 must have the same length")
        if np.any(~np.isfinite(mu)) or np.any(mu < 0):
            raise ConfigError("mu must be finite and nonnegative")
        if np.any(~np.isfinite(sigma2)) or np.any(sigma2 < 0):
            raise ConfigError("sigma2 must be finite and nonnegative")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma2", sigma2)

    def __len__(self):
        return self.mu.size

    def to_dict(self) -> dict[str, Any]:
        return {"mu": self.mu.tolist(), "sigma2": self.sigma2.tolist()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SecondOrderPoint":
        return cls(mu=data["mu"], sigma2=data["sigma2"])


@dataclass(frozen=True)
class TargetPairs:
    """Throughput floors ``m`` and AoI ceilings ``h``, one pair per device."""

    m: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        m = _frozen_array(self.m)
        h = _frozen_array(self.h)
        if m.shape != h.shape:
            raise ConfigError("m and h must have the same length")
        if np.any(m < 0):
            raise ConfigError("throughput floors must be nonnegative")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "h", h)

    def __len__(self):
        return self.m.size

    def to_dict(self) -> dict[str, Any]:
        return {"m": self.m.tolist(), "h": self.h.tolist()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TargetPairs":
        return cls(m=data["m"], h=data["h"])


@dataclass
class SimState:
    """Mutable state of one trace after ``t`` completed slots.

    ``aoi[i]`` is the age device ``i`` has at the start of slot ``t + 1``.
    Every device starts with age 1, as if it had delivered at slot 0.
    """

    t: int
    aoi: np.ndarray
    delivered: np.ndarray
    policy_state: Any = None

    @classmethod
    def initial(cls, n_devices: int, policy_state: Any = None) -> "SimState":
        return cls(
            t=0,
            aoi=np.ones(n_devices, dtype=np.int64),
            delivered=np.zeros(n_devices, dtype=np.int64),
            policy_state=policy_state,
        )

    def copy(self) -> "SimState":
        return SimState(self.t, self.aoi.copy(), self.delivered.copy(), self.policy_state)


@dataclass
class TraceMetrics:
    """Per-device statistics of one simulated trace of ``horizon`` slots.

    ``block_counts`` holds delivery counts per non-overlapping block of
    ``block_len`` slots (shape ``(K, N)``); batch-means estimates are built
    from it. ``proj_sq_sum`` is the sum of squared one-slot increments of
    the projected process ``M t - sum_i Z_i / p_i``.
    """

    horizon: int
    emp_throughput: np.ndarray
    emp_aoi: np.ndarray
    emp_variance: np.ndarray
    interdelivery: list[np.ndarray] | None
    delivered: np.ndarray
    block_len: int
    block_counts: np.ndarray
    proj_sq_sum: float
    spread: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_devices(self) -> int:
        return self.emp_throughput.size
