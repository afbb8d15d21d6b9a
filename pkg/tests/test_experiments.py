import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aoiregion.core import ConfigError, NetworkConfig
from aoiregion.experiments import (
    FAMILIES,
    Scenario,
    admission_boundary,
    build_example1,
    build_example2,
    build_example3,
    build_example4,
    default_grid,
    run_sweep,
    scenario_for,
    solve_scenario,
)

FAST = dict(n_starts=3)


def test_example1_builder():
    sc = build_example1(3, 1)
    np.testing.assert_allclose(sc.cfg.p, [1 / 3, 2 / 3, 1.0])
    np.testing.assert_allclose(sc.q, [0.1, 0.2, 0.3])
    assert sc.problem == "min_aoi_hard" and sc.horizon == 300_000
    assert build_example1(10, 1).q[-1] == pytest.approx(0.09)


def test_example2_builders():
    sc = build_example2(6, 1, 1.0)
    np.testing.assert_allclose(sc.q, [0.21333333] * 3 + [0.05333333] * 3, rtol=1e-7)
    np.testing.assert_allclose(sc.cfg.p, 0.8)
    ratio = build_example2(10, 1, 0.9, "ratio_sweep")
    np.testing.assert_allclose(ratio.q, build_example1(10, 1).q)
    with pytest.raises(ConfigError):
        build_example2(6, 1, variant="other")


def test_example3_and_4_builders():
    sc = build_example3(5, 2)
    assert sc.problem == "prop_fair" and sc.cfg.n_slots_per_round == 2
    assert not solve_scenario(build_example4(1.0, 1.0)).feasible
    assert solve_scenario(build_example4(24.0, 24.0), **FAST).feasible
    with pytest.raises(ConfigError):
        build_example4(0.5, 2.0)
    with pytest.raises(ConfigError):
        build_example1(2, 3)


def test_scenario_validation():
    cfg = NetworkConfig(2, 1, [0.5, 0.5])
    with pytest.raises(ConfigError):
        Scenario(cfg, "min_aoi_hard", {})
    with pytest.raises(ConfigError):
        Scenario(cfg, "admission", {"e": [2.0]})
    with pytest.raises(ConfigError):
        Scenario(cfg, "maximise_everything", {})
    with pytest.raises(ConfigError, match="schema_version"):
        Scenario.from_dict({"schema_version": 99})


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["ex1", "ex2", "ex3", "ex4"]), st.integers(1, 12), st.data())
def test_scenario_round_trip(kind, n, data):
    m = data.draw(st.integers(1, n))
    if kind == "ex1":
        sc = build_example1(n, m, data.draw(st.floats(0.0, 2.0)))
    elif kind == "ex2":
        sc = build_example2(n, m, data.draw(st.floats(0.0, 2.0)),
                            data.draw(st.sampled_from(["lambda_sweep", "ratio_sweep"])))
    elif kind == "ex3":
        sc = build_example3(n, m)
    else:
        sc = build_example4(data.draw(st.floats(1.0, 30.0)), data.draw(st.floats(1.0, 30.0)))
    sc.base_seed = data.draw(st.integers(0, 2**31))
    back = Scenario.from_dict(json.loads(json.dumps(sc.to_dict())))
    assert back.to_dict() == sc.to_dict()


def test_scenario_file_round_trip(tmp_path):
    sc = build_example2(4, 2, 1.3, n_traces=7)
    sc.save(tmp_path / "s.json")
    assert Scenario.load(tmp_path / "s.json").to_dict() == sc.to_dict()
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        Scenario.load(tmp_path / "bad.json")


def test_default_grids():
    assert default_grid("example1") == [1, 2, 4, 8, 16]
    assert default_grid("example3", 5) == [1, 2, 4, 5]
    assert len(default_grid("example4")) == 10
    assert scenario_for("example2_ratio", 2, ratio=3).cfg.n_devices == 6
    with pytest.raises(ConfigError):
        default_grid("example9")


def _small(family, grid, **kw):
    return run_sweep(family, grid, n_traces=2, horizon=4_000, solver_kw=FAST,
                     trace_kw={"block_len": 100}, **kw)


@pytest.mark.parametrize("family, grid, kw", [
    ("example1", [1, 2], {"ratio": 3}),
    ("example2_lambda", [0.5, 1.5], {"n": 4}),
    ("example2_ratio", [1], {"ratio": 3}),
    ("example3", [1, 3], {"n": 3}),
])
def test_small_sweeps_have_every_row(family, grid, kw):
    res = _small(family, grid, **kw)
    policies = ["theoretical", *FAMILIES[family][1]]
    assert [(r.sweep_var, r.policy) for r in res.rows] == [(float(x), p) for x in grid
                                                           for p in policies]
    assert all(r.status == "ok" and math.isfinite(r.objective_mean) for r in res.rows)
    buf = io.StringIO()
    res.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "sweep_var,policy,objective_mean,objective_se,status"
    assert len(lines) == 1 + len(res.rows)


def test_infeasible_grid_point_is_annotated():
    res = _small("example1", [1], ratio=3, lam=5.0)
    assert [r.status.split(":")[0] for r in res.rows] == ["infeasible", "skipped", "skipped"]
    buf = io.StringIO()
    res.write_json(buf)
    assert json.loads(buf.getvalue())["rows"][0]["objective_mean"] is None


def test_sweep_is_deterministic():
    a = _small("example1", [1], ratio=3, base_seed=5)
    b = _small("example1", [1], ratio=3, base_seed=5)
    assert [r.csv_fields() for r in a.rows] == [r.csv_fields() for r in b.rows]


def test_admission_boundary_and_sweep():
    g = admission_boundary(12.0, resolution=0.5, **FAST)
    assert (g - 1.0) / 0.5 == pytest.approx(round((g - 1.0) / 0.5))
    assert solve_scenario(build_example4(12.0, g), **FAST).feasible
    assert not solve_scenario(build_example4(12.0, g - 0.5), **FAST).feasible
    assert math.isnan(admission_boundary(1.0, resolution=0.5, g_max=5.0, **FAST))
    res = _small("example4", [12.0], resolution=0.5)
    assert [r.policy for r in res.rows] == ["theoretical", "vwd"]
    assert res.rows[0].objective_mean == g and "f_met" in res.rows[1].detail
