"""Scheduling policies: Variance-Weighted Deficit (VWD), Max-Weight and Random.

Every selector returns the chosen device indices as a sorted ``int64`` array
of length M.  Ties are broken towards the lowest device index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, NetworkConfig, SecondOrderPoint, SimState

#: Floor substituted for a target variance in the deficit denominator.
SIGMA2_FLOOR = 1e-12

# Codes understood by the compiled slot loop.
KIND_VWD = 0
KIND_MAXWEIGHT = 1
KIND_RANDOM = 2


def _top_m(scores: np.ndarray, m: int) -> np.ndarray:
    order = np.argsort(-scores, kind="stable")
    return np.sort(order[:m])


def guarded_sigma(sigma2) -> np.ndarray:
    return np.sqrt(np.maximum(np.asarray(sigma2, dtype=float), SIGMA2_FLOOR))


def compute_deficits(state: SimState, targets: SecondOrderPoint) -> np.ndarray:
    """Variance-normalised delivery shortfall ``(t mu_i - delivered_i) / sigma_i``."""
    return (state.t * targets.mu - state.delivered) / guarded_sigma(targets.sigma2)


def system_deficit(deficits: np.ndarray, targets: SecondOrderPoint, p) -> float:
    """Average of the deficits weighted by ``sigma_i / p_i``."""
    weights = guarded_sigma(targets.sigma2) / np.asarray(p, dtype=float)
    return float(np.dot(weights, deficits) / weights.sum())


def vwd_select(state: SimState, targets: SecondOrderPoint, m: int) -> np.ndarray:
    return _top_m(compute_deficits(state, targets), m)


def maxweight_weight(aoi, debt, alpha, p, v):
    """``alpha p / 2 * a (a + 2) + V p max(x, 0)``, elementwise."""
    aoi = np.asarray(aoi, dtype=float)
    return alpha * p / 2.0 * aoi * (aoi + 2.0) + v * p * np.maximum(debt, 0.0)


def random_select(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform M-subset: the M smallest of N independent uniform keys."""
    if m > n:
        raise ValueError("cannot select more devices than exist")
    return _top_m(-rng.random(n), m)


@dataclass
class VwdState:
    deficits: np.ndarray
    targets: SecondOrderPoint


@dataclass
class MaxWeightState:
    debts: np.ndarray
    alpha: np.ndarray
    v_param: float
    throughput_reqs: np.ndarray


def maxweight_select(state: SimState, mw: MaxWeightState, p, m: int) -> np.ndarray:
    debts = state.t * mw.throughput_reqs - state.delivered
    weights = maxweight_weight(state.aoi, debts, mw.alpha, np.asarray(p, float), mw.v_param)
    return _top_m(weights, m)


class Policy:
    """Base class; subclasses carry their parameters and build per-trace state."""

    name = "policy"
    uses_rng = False

    def check(self, cfg: NetworkConfig) -> None:
        pass

    def init_state(self, cfg: NetworkConfig):
        return None

    def select(self, state: SimState, cfg: NetworkConfig, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def kernel_args(self, cfg: NetworkConfig):
        """``(kind, a, b, c, scalar)`` arrays consumed by the compiled loop."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"name": self.name}


@dataclass(frozen=True, eq=False)
class VWDPolicy(Policy):
    targets: SecondOrderPoint
    name = "vwd"

    def check(self, cfg):
        if len(self.targets) != cfg.n_devices:
            raise ConfigError(
                f"VWD targets have {len(self.targets)} entries, network has {cfg.n_devices}"
            )

    def init_state(self, cfg):
        return VwdState(np.zeros(cfg.n_devices), self.targets)

    def select(self, state, cfg, rng):
        d = compute_deficits(state, self.targets)
        if isinstance(state.policy_state, VwdState):
            state.policy_state.deficits = d
        return _top_m(d, cfg.n_slots_per_round)

    def kernel_args(self, cfg):
        zeros = np.zeros(cfg.n_devices)
        return KIND_VWD, self.targets.mu.copy(), guarded_sigma(self.targets.sigma2), zeros, 0.0

    def to_dict(self):
        return {"name": self.name, "targets": self.targets.to_dict()}


@dataclass(frozen=True, eq=False)
class MaxWeightPolicy(Policy):
    """Max-Weight with per-device throughput requirements ``q``.

    ``alpha`` defaults to all ones and ``v`` to ``N**2``.
    """

    q: np.ndarray
    alpha: np.ndarray | None = None
    v: float | None = None
    name = "maxweight"

    def _params(self, cfg):
        q = np.asarray(self.q, dtype=float)
        alpha = np.ones(cfg.n_devices) if self.alpha is None else np.asarray(self.alpha, float)
        v = float(cfg.n_devices**2) if self.v is None else float(self.v)
        return q, alpha, v

    def check(self, cfg):
        q, alpha, _ = self._params(cfg)
        if q.shape != (cfg.n_devices,) or alpha.shape != (cfg.n_devices,):
            raise ConfigError("Max-Weight q and alpha must have one entry per device")

    def init_state(self, cfg):
        q, alpha, v = self._params(cfg)
        return MaxWeightState(np.zeros(cfg.n_devices), alpha, v, q)

    def select(self, state, cfg, rng):
        mw = state.policy_state
        if not isinstance(mw, MaxWeightState):
            mw = self.init_state(cfg)
        mw.debts = state.t * mw.throughput_reqs - state.delivered
        return maxweight_select(state, mw, cfg.success_probs, cfg.n_slots_per_round)

    def kernel_args(self, cfg):
        q, alpha, v = self._params(cfg)
        return KIND_MAXWEIGHT, q, alpha, np.zeros(cfg.n_devices), v

    def to_dict(self):
        q, alpha, v = np.asarray(self.q, float), self.alpha, self.v
        return {
            "name": self.name,
            "q": q.tolist(),
            "alpha": None if alpha is None else np.asarray(alpha, float).tolist(),
            "v": v,
        }


@dataclass(frozen=True, eq=False)
class RandomPolicy(Policy):
    name = "random"
    uses_rng = True

    def select(self, state, cfg, rng):
        return random_select(cfg.n_devices, cfg.n_slots_per_round, rng)

    def kernel_args(self, cfg):
        zeros = np.zeros(cfg.n_devices)
        return KIND_RANDOM, zeros, zeros, zeros, 0.0


POLICY_NAMES = ("vwd", "maxweight", "random")


def make_policy(name: str, *, targets: SecondOrderPoint | None = None, q=None, alpha=None,
                v=None) -> Policy:
    """Build a policy from its identifier and parameters."""
    if name == "vwd":
        if targets is None:
            raise ConfigError("the vwd policy needs targets (mu, sigma2)")
        return VWDPolicy(targets)
    if name == "maxweight":
        if q is None:
            raise ConfigError("the maxweight policy needs throughput requirements q")
        return MaxWeightPolicy(np.asarray(q, float), alpha, v)
    if name == "random":
        return RandomPolicy()
    raise ConfigError(f"unknown policy {name!r}; expected one of {POLICY_NAMES}")


def policy_from_dict(data: dict) -> Policy:
    name = data.get("name")
    targets = SecondOrderPoint.from_dict(data["targets"]) if "targets" in data else None
    return make_policy(name, targets=targets, q=data.get("q"), alpha=data.get("alpha"),
                       v=data.get("v"))
