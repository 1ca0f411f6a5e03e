import pytest

from ctxvrp import experiment as ex
from ctxvrp.instance import OBS_COUNTS, SETTINGS, augment, generate_history, read_solomon, take_first
from ctxvrp.predict import ModelUnavailable, TrainerConfig, predict_targets
from helpers import C101


@pytest.mark.parametrize("text", ["D-N-60", "R-L-M-95-G1", "D-I-M", "R-N-55-90-G2"])
def test_name_round_trip(text):
    assert str(ex.parse_model_name(text)) == text


def test_greek_budget_accepted():
    name = ex.parse_model_name("R-L-55-90-Γ1")
    assert name.gamma == 1 and str(name) == "R-L-55-90-G1"
    assert name.mode == "robust" and [t.label for t in name.spec().targets] == ["55", "90"]


@pytest.mark.parametrize("text, position", [
    ("D-I-42", 4), ("X-L-50", 0), ("D-Q-50", 2), ("R-L-60-90-G1", 4), ("R-L-M-80-G1", 6),
    ("R-L-M-90-G3", 9), ("D-L-50-G1", 6), ("R-L-M-90", 8),
])
def test_bad_names_report_position(text, position):
    with pytest.raises(ex.ModelNameError, match=f"position {position}"):
        ex.parse_model_name(text)


def test_model_enumeration():
    names = ex.all_model_names()
    assert len(names) == 69 and len(set(names)) == 69
    assert sum(n.family == "D" for n in names) == 33
    assert sum(n.delta != "I" for n in names) == 46


def test_grid_cardinality():
    """Available cells over 17 instances and 5 replications of the full small-instance grid."""
    full = augment(read_solomon(C101), 0)
    aug = take_first(full, 25)
    quick = TrainerConfig(max_iter=1)
    per_instance_rep = 0
    for setting in SETTINGS:
        for n in OBS_COUNTS:
            hist = generate_history(full, setting, n, 0)
            models = {}
            for name in ex.all_model_names():
                try:
                    predict_targets(name.spec(), aug, hist, quick, models)
                except ModelUnavailable:
                    assert name.delta == "I"
                    continue
                per_instance_rep += 1
    assert per_instance_rep == 2 * 69 + 7 * 46
    assert 17 * 5 * per_instance_rep == 39_100


def tiny_config(tmp_path=None, **kw):
    base = dict(instances=(str(C101),), customers=6, settings=("all", "half"), obs_counts=(1, 10),
                replications=2, models=("D-I-50", "D-L-M", "R-L-55-90-G1", "D-L-95"), time_limit=None,
                max_iterations=60, scenarios=300, seed=11, record_times=False)
    base.update(kw)
    return ex.GridConfig(**base)


def test_config_validation_and_json():
    cfg = tiny_config()
    assert ex.GridConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ValueError):
        tiny_config(solver="cplex")
    with pytest.raises(ValueError):
        tiny_config(solver="exact-export")
    with pytest.raises(ex.ModelNameError):
        tiny_config(models=("D-L-42",))
    with pytest.raises(ValueError):
        ex.GridConfig.from_json('{"instances": [], "bogus": 1}')


@pytest.fixture(scope="module")
def grid_rows():
    return ex.run_grid(tiny_config())


def test_grid_statuses(grid_rows):
    assert len(grid_rows) == 2 * 2 * 2 * 4
    for r in grid_rows:
        if r.model == "D-I-50" and (r.setting != "all" or r.n_obs == 1):
            assert r.status == "unavailable" and r.mean_total_cost is None
        else:
            assert r.status == "ok"
            assert r.mean_total_cost >= r.initial_cost - 1e-9 and r.initial_cost > 0
            assert 0 <= r.mean_tw_violation_frac <= 1
    assert [r.sort_key() for r in grid_rows] == sorted(r.sort_key() for r in grid_rows)


def test_grid_deterministic(grid_rows):
    again = ex.run_grid(tiny_config())
    assert ex.rows_to_csv(again) == ex.rows_to_csv(grid_rows)


def test_csv_round_trip(grid_rows):
    text = ex.rows_to_csv(grid_rows)
    assert text.splitlines()[0] == ex.CSV_HEADER
    assert ex.rows_to_csv(ex.rows_from_csv(text)) == text
    with pytest.raises(ValueError):
        ex.rows_from_csv("a,b\n1,2\n")


def test_normalization():
    rows = [ex.ResultRow("c101", "all", 30, 0, "D-L-M", mean_total_cost=200.0),
            ex.ResultRow("c101", "all", 30, 0, "D-L-50", mean_total_cost=210.0),
            ex.ResultRow("c101", "half", 10, 0, "D-L-M", mean_total_cost=190.0),
            ex.ResultRow("c101", "half", 10, 1, "D-L-M", mean_total_cost=190.0),
            ex.ResultRow("c101", "all", 30, 0, "D-I-M", status="unavailable")]
    ex.normalize_rows(rows)
    assert [r.normalized_score for r in rows] == [0.0, 5.0, -5.0, None, None]


def test_normalization_in_grid():
    rows = ex.run_grid(tiny_config(obs_counts=(30,), settings=("all",), replications=1))
    scores = [r.normalized_score for r in rows if r.status == "ok"]
    assert min(scores) == 0.0 and all(s >= 0 for s in scores)


def test_summary(grid_rows):
    summary = ex.summarize(grid_rows)
    groups = {(s.setting, s.n_obs) for s in summary}
    assert groups == {(s, n) for s in ("all", "half") for n in (1, 10)}
    for g in groups:
        ranked = [s for s in summary if (s.setting, s.n_obs) == g]
        assert [s.rank for s in ranked] == list(range(1, len(ranked) + 1))
        assert [s.mean for s in ranked] == sorted(s.mean for s in ranked)
        assert all(s.metric == "mean_total_cost" and s.count == 2 for s in ranked)
        base = next(s for s in ranked if s.model == "D-L-95")
        assert base.mean_violation_increase == 0
        assert all(s.mean_violation_increase is None for s in ranked if s.model == "D-I-50")
    top = ex.summarize(grid_rows, top_k=1)
    assert len(top) == 4
    assert ex.summary_to_csv(top).splitlines()[0].startswith("setting,n_obs,rank,model")
    with pytest.raises(ValueError):
        ex.summarize([])


def test_conservative_baseline():
    assert ex.conservative_baseline("R-N-M-90-G2") == "D-N-95"


def test_exact_export(tmp_path):
    cfg = tiny_config(settings=("all",), obs_counts=(10,), replications=1, models=("D-L-M",), customers=4,
                      solver="exact-export", export_dir=str(tmp_path))
    (row,) = ex.run_grid(cfg)
    assert row.status == "exported"
    lp = tmp_path / "c101_all_n10_r0_D-L-M.lp"
    assert lp.read_text().startswith("\\ deterministic CVRPTW, 4 customers")
    # a solution file written by an external solver is picked up on the next run
    (tmp_path / "c101_all_n10_r0_D-L-M.sol").write_text(
        "objective 100\nx_0_1 1\nx_1_2 1\nx_2_5 1\nx_0_3 1\nx_3_4 1\nx_4_5 1\n")
    (row,) = ex.run_grid(cfg)
    assert row.status == "ok" and row.initial_cost > 0


def test_cell_seeds_differ():
    cfg = tiny_config()
    a = ex.cell_seed(cfg, C101, "all", 10, 0, "D-L-M", "alns")
    assert a != ex.cell_seed(cfg, C101, "all", 10, 1, "D-L-M", "alns")
    assert a == ex.cell_seed(cfg, C101, "all", 10, 0, "D-L-M", "alns")
