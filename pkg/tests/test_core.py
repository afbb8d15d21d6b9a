import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aoiregion.core import (
    ConfigError,
    NetworkConfig,
    SecondOrderPoint,
    SimState,
    TargetPairs,
    validate_config,
)


def test_validate_accepts_valid_config():
    cfg = NetworkConfig(2, 1, [0.5, 1.0])
    assert validate_config(cfg) is cfg


def test_validate_rejects_m_above_n():
    with pytest.raises(ConfigError, match="n_slots_per_round"):
        validate_config(NetworkConfig(2, 3, [0.5, 1.0]))


def test_validate_rejects_zero_probability():
    with pytest.raises(ConfigError, match="success_probs"):
        validate_config(NetworkConfig(1, 1, [0.0]))


@pytest.mark.parametrize("kwargs", [
    dict(n_devices=0, n_slots_per_round=0, success_probs=[]),
    dict(n_devices=2, n_slots_per_round=0, success_probs=[0.5, 0.5]),
    dict(n_devices=2, n_slots_per_round=1, success_probs=[0.5]),
    dict(n_devices=2, n_slots_per_round=1, success_probs=[0.5, 1.5]),
    dict(n_devices=2, n_slots_per_round=1, success_probs=[0.5, float("nan")]),
])
def test_validate_rejects(kwargs):
    with pytest.raises(ConfigError):
        validate_config(NetworkConfig(**kwargs))


@settings(max_examples=300, deadline=None)
@given(
    n=st.integers(-2, 8),
    m=st.integers(-2, 10),
    p=st.lists(st.one_of(st.floats(-0.5, 1.5), st.just(float("nan"))), min_size=0, max_size=9),
)
def test_validate_fuzz(n, m, p):
    cfg = NetworkConfig(n, m, p)
    ok = n >= 1 and 1 <= m <= n and len(p) == n and all(0.0 < x <= 1.0 for x in p)
    if ok:
        validate_config(cfg)
    else:
        with pytest.raises(ConfigError):
            validate_config(cfg)


def test_config_round_trip_and_hash():
    cfg = NetworkConfig(3, 2, [0.2, 0.5, 1.0])
    back = NetworkConfig.from_dict(cfg.to_dict())
    assert back == cfg and hash(back) == hash(cfg)
    assert cfg.N == 3 and cfg.M == 2
    with pytest.raises(ValueError):
        cfg.success_probs[0] = 0.9


def test_from_dict_validates():
    with pytest.raises(ConfigError):
        NetworkConfig.from_dict({"n_devices": 1, "n_slots_per_round": 2, "success_probs": [0.5]})


def test_second_order_point_invariants():
    pt = SecondOrderPoint([0.1, 0.2], [0.0, 0.3])
    assert len(pt) == 2
    assert SecondOrderPoint.from_dict(pt.to_dict()).to_dict() == pt.to_dict()
    with pytest.raises(ConfigError):
        SecondOrderPoint([-0.1], [0.0])
    with pytest.raises(ConfigError):
        SecondOrderPoint([0.1], [-1e-3])
    with pytest.raises(ConfigError):
        SecondOrderPoint([0.1, 0.2], [0.1])


def test_target_pairs():
    pairs = TargetPairs([0.1, 0.0], [3.0, 10.0])
    assert TargetPairs.from_dict(pairs.to_dict()).to_dict() == pairs.to_dict()
    with pytest.raises(ConfigError):
        TargetPairs([-0.1], [2.0])


def test_sim_state_initial_and_copy():
    s = SimState.initial(3)
    assert s.t == 0
    np.testing.assert_array_equal(s.aoi, [1, 1, 1])
    np.testing.assert_array_equal(s.delivered, [0, 0, 0])
    c = s.copy()
    c.aoi[0] = 7
    assert s.aoi[0] == 1
