import csv

import pytest

from sinkscale.bench import (
    DEFAULTS, EXPERIMENTS, ExperimentConfig, load_grids, run_experiment, structural_stability_audit,
    write_result,
)
from sinkscale.core import Marginals, ScalingInstance, iterate_states
from sinkscale.diagnostics import density
from sinkscale.instances import gen_random_dense, gen_thm61


def test_config_merges_defaults():
    cfg = ExperimentConfig("critical_boundary", {"eps": [0.1]})
    assert cfg.grids["eps"] == [0.1] and cfg.grids["p"] == DEFAULTS["critical_boundary"]["p"]
    with pytest.raises(ValueError):
        ExperimentConfig("nope")
    with pytest.raises(ValueError):
        ExperimentConfig("critical_boundary", {"eps": []})


def test_load_grids():
    assert load_grids(None, "nu_dependence") == {}
    assert load_grids({"nu_dependence": {"eps": [1e-3]}}, "nu_dependence") == {"eps": [1e-3]}


def test_critical_rows_match_recurrence():
    res = run_experiment(ExperimentConfig("critical_boundary"))
    assert not res.failures
    for row in res.rows:
        assert row["iterations"] == row["recurrence_iterations"] <= row["bound"]


def test_threads_do_not_change_rows():
    a = run_experiment(ExperimentConfig("phase_transition", threads=1)).rows
    b = run_experiment(ExperimentConfig("phase_transition", threads=3)).rows
    assert a == b


def test_cell_errors_are_recorded():
    # n=15 is not a valid size for the dense block family
    res = run_experiment(ExperimentConfig("prescale_acceleration", {"n": [15, 20]}))
    bad = [r for r in res.rows if r["status"] != "ok"]
    assert len(bad) == 2 and all(r["status"].startswith("error") for r in bad)
    assert len(res.failures) == 2


def test_budget_marks_cells():
    res = run_experiment(ExperimentConfig("nu_dependence", {"delta": [1e-8], "eps": [1e-14]}, max_iter=50))
    assert res.rows[0]["status"] == "max_iter"


def test_write_result(tmp_path):
    res = run_experiment(ExperimentConfig("nu_dependence"))
    paths = write_result(res, tmp_path, plot="svg")
    assert [p.name for p in paths] == ["nu_dependence.csv", "nu_dependence.svg"]
    with open(paths[0]) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(res.rows) and rows[0]["status"] == "ok"
    assert (tmp_path / "nu_dependence_timing.csv").exists()
    assert paths[1].read_text().lstrip().startswith("<?xml")


def test_csv_is_deterministic(tmp_path):
    for sub in ("a", "b"):
        write_result(run_experiment(ExperimentConfig("outlier_independence")), tmp_path / sub, plot="none")
    assert (tmp_path / "a" / "outlier_independence.csv").read_bytes() == \
        (tmp_path / "b" / "outlier_independence.csv").read_bytes()


def test_all_experiments_listed():
    assert set(EXPERIMENTS) == set(DEFAULTS)


def test_stability_audit_dense_instance():
    inst = gen_random_dense(16, 16, 0.7, 0.7, 0.5, seed=2)
    inst = ScalingInstance(inst.matrix, Marginals.ones(16))
    rep = density(inst.matrix, inst.targets, 0.5)
    audit = structural_stability_audit(iterate_states(inst, 40), rep)
    assert audit.status == "ok" and audit.audited_steps > 0
    assert audit.violations == []


def test_stability_audit_precondition():
    inst = gen_thm61(12, 5, 7, 1e-4)
    rep = density(inst.matrix, inst.targets, 0.5)
    audit = structural_stability_audit(iterate_states(inst, 5), rep)
    assert audit.status == "precondition unmet" and audit.rows == []
