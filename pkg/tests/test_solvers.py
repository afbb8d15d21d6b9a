import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aoiregion.core import InfeasibleProblemError, NetworkConfig, TargetPairs
from aoiregion.region import aoi_approx, check_inner
from aoiregion.solvers import (
    QuadraticPenalty,
    admission_problem,
    check_admission,
    cost_soft_problem,
    min_aoi_problem,
    project_box_slice,
    project_mu,
    prop_fair_problem,
    solve_cost_soft,
    solve_min_aoi_hard,
    solve_prop_fair,
)

TWO = NetworkConfig(2, 1, [1.0, 1.0])


# -- projection -----------------------------------------------------------------

def test_projection_examples():
    np.testing.assert_allclose(project_box_slice([0.5, 0.5], 0.0, 1.0, 1.0), [0.5, 0.5])
    np.testing.assert_allclose(project_box_slice([2.0, 0.0], 0.0, 1.0, 1.0), [1.0, 0.0])
    np.testing.assert_allclose(project_box_slice([0.2, 0.2, 0.2], 0.0, 1.0, 1.5), [0.5] * 3)
    np.testing.assert_allclose(project_box_slice([0.9, 0.1], [0.0, 0.3], 1.0, 1.0), [0.7, 0.3])


def test_projection_empty_set():
    with pytest.raises(InfeasibleProblemError):
        project_box_slice([0.5, 0.5], 0.6, 1.0, 1.0)
    with pytest.raises(InfeasibleProblemError):
        project_box_slice([0.5, 0.5], 0.0, 0.4, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8).flatmap(lambda n: st.tuples(
    st.lists(st.floats(-5, 5), min_size=n, max_size=n),
    st.lists(st.floats(0.0, 0.3), min_size=n, max_size=n),
    st.lists(st.floats(0.5, 1.0), min_size=n, max_size=n),
)), st.floats(0.0, 1.0))
def test_projection_is_feasible_and_nearest(args, frac):
    v, lo, hi = map(np.asarray, args)
    total = lo.sum() + frac * (hi.sum() - lo.sum())
    x = project_box_slice(v, lo, hi, total)
    assert abs(x.sum() - total) <= 1e-9 and np.all(x >= lo - 1e-12) and np.all(x <= hi + 1e-12)
    # variational inequality: (v - x) . (z - x) <= 0 for feasible z
    rng = np.random.default_rng(0)
    for _ in range(20):
        z = project_box_slice(rng.uniform(-5, 5, v.size), lo, hi, total)
        assert np.dot(v - x, z - x) <= 1e-8


def test_project_mu_respects_floors():
    cfg = NetworkConfig(3, 1, [0.5, 1.0, 1.0])
    mu = project_mu([1.0, 1.0, 1.0], cfg, lower=[0.25, 0.0, 0.0])
    assert mu[0] >= 0.25 - 1e-12 and np.sum(mu / cfg.p) == pytest.approx(1.0)


# -- spot checks ----------------------------------------------------------------

def test_min_aoi_symmetric_and_floor_active():
    r = solve_min_aoi_hard(TWO, [0.0, 0.0])
    assert r.converged and r.objective == pytest.approx(3.0, abs=1e-9)
    np.testing.assert_allclose(r.point.mu, [0.5, 0.5], atol=1e-6)
    r = solve_min_aoi_hard(TWO, [0.7, 0.0])
    assert r.objective == pytest.approx(1 / 1.4 + 1 / 0.6 + 1.0, abs=1e-9)
    np.testing.assert_allclose(r.point.mu, [0.7, 0.3], atol=1e-6)


def test_full_schedule_boundary():
    r = solve_min_aoi_hard(NetworkConfig(1, 1, [0.25]), [0.0])
    assert r.boundary and r.objective == 4.0 and r.point.sigma2[0] == pytest.approx(0.1875)
    assert solve_prop_fair(NetworkConfig(1, 1, [1.0])).objective == 0.0
    with pytest.raises(InfeasibleProblemError):
        solve_min_aoi_hard(NetworkConfig(1, 1, [0.25]), [0.3])
    r = solve_cost_soft(NetworkConfig(2, 2, [0.5, 1.0]), [1.0, 0.0])
    assert r.objective == pytest.approx(0.25 + 2.0 + 1.0)


def test_min_aoi_infeasible_floors():
    with pytest.raises(InfeasibleProblemError):
        solve_min_aoi_hard(TWO, [0.6, 0.4])


def test_cost_soft_and_prop_fair_examples():
    assert solve_cost_soft(TWO, [0.7, 0.7]).objective == pytest.approx(3.08, abs=1e-9)
    assert solve_cost_soft(TWO, [0.7, 0.7], QuadraticPenalty(0.0)).objective == pytest.approx(3.0)
    assert solve_prop_fair(TWO).objective == pytest.approx(2 * (np.log(0.5) - np.log(1.5)), abs=1e-9)


@pytest.mark.parametrize("e, feasible", [([1.5, 1.5], True), ([2.0, 2.0], True),
                                         ([1.4, 1.5], False), ([0.9, 5.0], False)])
def test_admission_examples(e, feasible):
    assert check_admission(TWO, e).feasible is feasible


def test_admission_full_schedule():
    cfg = NetworkConfig(2, 2, [0.5, 1.0])
    assert check_admission(cfg, [2.0, 1.0]).feasible
    assert not check_admission(cfg, [1.9, 1.0]).feasible


# -- gradients --------------------------------------------------------------------

def _problems():
    cfg = NetworkConfig(4, 2, [0.3, 0.5, 0.8, 1.0])
    return [
        min_aoi_problem(cfg, [0.05, 0.05, 0.1, 0.1]),
        cost_soft_problem(cfg, [0.3, 0.3, 0.4, 0.6], QuadraticPenalty(3.0)),
        prop_fair_problem(cfg),
        admission_problem(cfg, [8.0, 8.0, 8.0, 8.0]),
    ]


@pytest.mark.parametrize("idx", range(4))
def test_gradients_match_finite_differences(idx):
    prob = _problems()[idx]
    rng = np.random.default_rng(idx)
    h = 1e-6
    checked = 0
    while checked < 100:
        x = prob.random_start(rng)
        f, g = prob.fg(x)
        if prob.name == "admission":
            mu = prob.cfg.p * x
            if np.any(mu * mu * 15.0 - mu <= 1e-3):
                continue
        fd = np.empty_like(x)
        for j in range(x.size):
            e = np.zeros_like(x)
            e[j] = h
            fd[j] = (prob.fg(x + e)[0] - prob.fg(x - e)[0]) / (2 * h)
        np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-4 * max(1.0, np.abs(fd).max()))
        checked += 1


# -- structural properties --------------------------------------------------------

def test_min_aoi_nondecreasing_in_floors():
    cfg = NetworkConfig(3, 1, [0.4, 0.7, 1.0])
    values = [solve_min_aoi_hard(cfg, [s * 0.1, s * 0.15, s * 0.2], n_starts=5).objective
              for s in np.linspace(0.0, 1.0, 6)]
    assert np.all(np.diff(values) >= -1e-9)


def test_admission_monotone_in_ceilings():
    cfg = NetworkConfig(3, 1, [0.5, 0.8, 1.0])
    verdicts = [check_admission(cfg, [g, g, g], n_starts=5).feasible
                for g in np.linspace(2.0, 12.0, 21)]
    first = verdicts.index(True)
    assert all(verdicts[first:]) and not any(verdicts[:first])


@pytest.mark.parametrize("solve", [
    lambda cfg: solve_min_aoi_hard(cfg, 0.2 * cfg.p / cfg.n_devices),
    lambda cfg: solve_cost_soft(cfg, np.full(cfg.n_devices, 0.3)),
    solve_prop_fair,
])
def test_converged_points_pass_inner_check(solve):
    cfg = NetworkConfig(4, 2, [0.3, 0.5, 0.8, 1.0])
    r = solve(cfg)
    assert r.converged
    pairs = TargetPairs(r.point.mu, aoi_approx(r.point.mu, r.point.sigma2))
    assert check_inner(pairs, r.point, cfg).feasible


def test_admission_witness_passes_inner_check():
    cfg = NetworkConfig(4, 2, [0.3, 0.5, 0.8, 1.0])
    e = np.full(4, 6.0)
    res = check_admission(cfg, e)
    assert res.feasible
    assert check_inner(TargetPairs(np.zeros(4), e), res.witness, cfg).feasible


def test_two_device_grid_oracle():
    cfg = NetworkConfig(2, 1, [0.4, 0.9])
    q = np.array([0.05, 0.1])
    y1 = np.linspace(q[0] / 0.4, 1 - q[1] / 0.9, 200_001)
    y = np.stack([y1, 1 - y1], axis=1)
    c = 1 / cfg.p - 1
    s2 = y @ c
    grid = 0.5 * s2 / np.sum(y * y, axis=1) + np.sum(1 / (2 * cfg.p * y), axis=1) + 1.0
    r = solve_min_aoi_hard(cfg, q)
    assert r.objective <= grid.min() + 1e-9
    assert r.objective == pytest.approx(grid.min(), rel=1e-6)


def test_solver_is_deterministic():
    cfg = NetworkConfig(3, 1, [0.4, 0.7, 1.0])
    a, b = solve_prop_fair(cfg, seed=3), solve_prop_fair(cfg, seed=3)
    assert a.objective == b.objective
    np.testing.assert_array_equal(a.point.mu, b.point.mu)
    assert a.to_dict()["problem"] == "prop_fair"


def test_admission_does_not_stall_where_a_cap_vanishes():
    # Starts that reach y_i = 1 / (k_i p_i) see an unbounded gradient; the
    # maximum (from a 1e-3 grid) is well inside.
    cfg = NetworkConfig(3, 1, [0.3, 0.6, 1.0])
    res = check_admission(cfg, [5.0, 5.0, 5.0])
    assert res.feasible and res.margin == pytest.approx(0.566207, abs=1e-5)
    assert res.witness.mu[2] > 0.2
