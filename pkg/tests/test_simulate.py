import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxvrp.instance import take_first, truncated_mixture_mean
from ctxvrp.simulate import ScenarioSet, SimulationContext, evaluate, normalize_costs, sample_scenarios, \
    simulate_route
from helpers import euclid


def context(travel, capacity, windows=None, service=None, depot_dwell=0.0):
    t = np.asarray(travel, dtype=float)
    n = len(t) - 1
    open_, close = np.zeros(n + 1), np.full(n + 1, 1e9)
    if windows is not None:
        for i, (a, b) in enumerate(windows, start=1):
            open_[i], close[i] = a, b
    svc = np.zeros(n + 1) if service is None else np.concatenate([[0.0], service])
    return SimulationContext(t, float(capacity), open_, close, svc, depot_dwell)


DETOUR_T = [[0, 4, 6], [4, 0, 3], [6, 3, 0]]


def test_detour_example():
    ctx = context(DETOUR_T, 10)
    rep = simulate_route([1, 2], [6, 6], ctx)
    assert rep.detours == 1 and rep.recourse == 7
    assert rep.sequence == (1, 0, 2)
    report = evaluate([[1, 2]], ScenarioSet.fixed([6, 6], 3), ctx)
    assert report.initial_cost == 13 and report.mean_total_cost == 20 and report.std_total_cost == 0


def test_no_detour_at_exact_capacity():
    rep = simulate_route([1, 2], [4, 6], context(DETOUR_T, 10))
    assert rep.detours == 0 and rep.recourse == 0


def test_detour_delays_service_and_waiting_rule():
    ctx = context(DETOUR_T, 10, windows=[(10, 20), (0, 18)], service=[1, 1], depot_dwell=2)
    rep = simulate_route([1, 2], [6, 6], ctx)
    # arrive at 1 at time 4, wait until 10, leave at 11, depot at 15, dwell to 17, reach 2 at 23
    assert rep.starts == {1: 10.0, 2: 23.0}
    assert rep.violated == (2,)
    calm = simulate_route([1, 2], [1, 1], ctx)
    assert calm.starts == {1: 10.0, 2: 14.0} and calm.violated == ()


def test_demand_above_capacity_is_clamped():
    ctx = context(DETOUR_T, 10)
    rep = simulate_route([1, 2], [3, 25], ctx)
    assert rep.clamped and rep.detours == 1
    report = evaluate([[1, 2]], ScenarioSet(np.array([[3.0, 25.0], [3.0, 3.0]]), 0), ctx)
    assert report.clamped_scenarios == 1


def test_zero_recourse_when_plan_is_respected():
    g = np.random.default_rng(0)
    xy = g.uniform(0, 50, (9, 2))
    d = g.uniform(1, 5, 8)
    routes = [[1, 2, 3], [4, 5], [6, 7, 8]]
    cap = max(d[np.array(r) - 1].sum() for r in routes)
    report = evaluate(routes, ScenarioSet.fixed(d, 4), context(euclid(xy), cap))
    assert report.mean_recourse == 0 and report.mean_detours == 0
    assert report.mean_total_cost == pytest.approx(report.initial_cost)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 9), st.floats(5, 30))
def test_vectorised_matches_scalar(seed, n, cap):
    g = np.random.default_rng(seed)
    xy = g.uniform(0, 40, (n + 1, 2))
    opens = g.uniform(0, 60, n)
    ctx = context(euclid(xy), cap, windows=list(zip(opens, opens + g.uniform(0, 40, n))),
                  service=g.uniform(0, 5, n), depot_dwell=float(g.uniform(0, 3)))
    perm = list(g.permutation(np.arange(1, n + 1)))
    cut = int(g.integers(1, n + 1))
    routes = [perm[:cut], perm[cut:]] if cut < n else [perm]
    D = g.uniform(0, cap * 0.8, (20, n))
    D[0, 0] = cap + 1
    report = evaluate(routes, ScenarioSet(D, seed), ctx)
    for k in range(len(D)):
        reps = [simulate_route(r, D[k], ctx) for r in routes]
        assert report.per_scenario["recourse"][k] == pytest.approx(sum(r.recourse for r in reps), abs=1e-9)
        assert report.per_scenario["detours"][k] == sum(r.detours for r in reps)
        assert report.per_scenario["violation"][k] == pytest.approx(sum(len(r.violated) for r in reps) / n)
    assert report.clamped_scenarios == 1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_violations_monotone_in_depot_dwell(seed):
    g = np.random.default_rng(seed)
    n = 6
    t = euclid(g.uniform(0, 30, (n + 1, 2)))
    opens = g.uniform(0, 50, n)
    windows = list(zip(opens, opens + 15))
    D = g.uniform(0, 8, n)
    route = list(g.permutation(np.arange(1, n + 1)))
    a = simulate_route(route, D, context(t, 10, windows, depot_dwell=0.0))
    b = simulate_route(route, D, context(t, 10, windows, depot_dwell=5.0))
    assert set(a.violated) <= set(b.violated)
    assert all(b.starts[j] >= a.starts[j] for j in route)


def test_scenarios_match_mixture_mean(c101_aug):
    sub = take_first(c101_aug, 5)
    sc = sample_scenarios(sub, 20_000, seed=1)
    for c in sub.base.customers:
        col = sc.demands[:, c - 1]
        assert col.min() >= 0
        assert col.mean() == pytest.approx(truncated_mixture_mean(sub, c), abs=4 * col.std() / np.sqrt(len(col)))


def test_scenarios_reproducible_and_prefix_stable(c101_aug):
    a = sample_scenarios(c101_aug, 50, seed=3)
    b = sample_scenarios(take_first(c101_aug, 10), 50, seed=3)
    assert np.array_equal(a.demands[:, :10], b.demands)
    assert not np.array_equal(a.demands, sample_scenarios(c101_aug, 50, seed=4).demands)
    with pytest.raises(ValueError):
        sample_scenarios(c101_aug, 0)


def test_scenario_dimension_checked():
    with pytest.raises(ValueError):
        evaluate([[1]], ScenarioSet(np.zeros((2, 3)), 0), context(DETOUR_T, 10))
    with pytest.raises(ValueError):
        ScenarioSet(np.array([[-1.0, 0.0]]), 0)


def test_report_serialisation():
    report = evaluate([[1, 2]], ScenarioSet.fixed([6, 6], 2), context(DETOUR_T, 10))
    assert '"mean_total_cost": 20.0' in report.to_json()
    lines = report.scenario_csv().splitlines()
    assert lines[0] == "scenario,total_cost,recourse,detours,violation_fraction"
    assert lines[1] == "0,20.0,7.0,1,0.0" and len(lines) == 3


def test_normalize_costs():
    out = normalize_costs({"a": 1027.7, "b": 990.0, "c": 1000.0}, 1000.0)
    assert out["a"] == pytest.approx(2.77) and out["b"] == pytest.approx(-1.0) and out["c"] == 0
    with pytest.raises(ValueError):
        normalize_costs({"a": 1.0}, 0.0)
