import json
from fractions import Fraction

import pytest

from pmpir.errors import ParameterError
from pmpir.harness import (
    ExperimentConfig,
    run_example_1,
    run_example_2,
    run_experiment,
    verify_parameters,
)
from pmpir.mpir import SchemeConstraintError, SchemeId

REPORT_KEYS = {"report_v", "config", "params", "measured", "metrics", "identity", "checks", "passed"}


def test_example_1_report():
    rep = run_example_1(trials=10)
    assert rep.passed, rep.checks
    assert rep.metrics.cpop == Fraction(5, 3)
    assert rep.metrics.so == Fraction(10, 3)
    assert rep.measured["downloaded_symbols"] == 200
    assert rep.measured["repair_symbols"] is None
    assert rep.checks["storage_table"] and rep.checks["repair_capable_is_false"]


def test_example_2_report():
    rep = run_example_2()
    assert rep.passed, rep.checks
    assert rep.metrics.cpop == 2
    assert rep.measured["downloaded_symbols"] == 24


@pytest.mark.parametrize("k", [3, 4])
@pytest.mark.parametrize("p", [1, 2, 3])
def test_msr_a_sweep_identity(k, p):
    rep = run_experiment(ExperimentConfig(SchemeId.MSR_A, k, p, m=p + 1, trials=2, seed=k * 10 + p))
    assert rep.identity == 1
    assert rep.passed, rep.checks
    assert rep.measured_cpop == rep.metrics.cpop


def test_mbr_repair_ratio_one():
    rep = run_experiment(ExperimentConfig("mbr", 2, 2, m=3, trials=3, seed=4))
    assert rep.measured["repair_ratio"] == 1
    assert rep.measured["repair_symbols"] == 3 * 2
    assert rep.passed


def test_oracle_option():
    rep = run_experiment(ExperimentConfig("msr-b", 3, 2, m=3, trials=3, oracle=True))
    assert rep.passed


def test_zero_trials_reports_metrics_only():
    rep = run_experiment(ExperimentConfig("msr-a", 3, 2, m=3, trials=0))
    assert rep.measured is None
    doc = rep.to_dict()
    assert doc["measured"] is None
    assert doc["metrics"] == {"so": "10/3", "cpop": "5/3", "rr": "2"}


def test_report_is_deterministic_and_versioned():
    cfg = dict(scheme="mbr", k=2, p=2, m=4, trials=5, seed=11)
    a = run_experiment(ExperimentConfig(**cfg)).to_json()
    b = run_experiment(ExperimentConfig(**cfg)).to_json()
    assert a == b
    doc = json.loads(a)
    assert set(doc) == REPORT_KEYS
    assert doc["report_v"] == 1
    assert "wall_clock_s" in run_experiment(ExperimentConfig(**cfg)).to_dict(include_timing=True)
    c = run_experiment(ExperimentConfig(**{**cfg, "seed": 12})).to_json()
    assert c != a


def test_config_validation():
    with pytest.raises(ParameterError):
        ExperimentConfig("msr-a", 3, 4, m=3)
    with pytest.raises(ParameterError):
        ExperimentConfig("msr-a", 3, 2, m=3, desired=(0, 0))
    with pytest.raises(ParameterError):
        ExperimentConfig("msr-a", 3, 2, m=3, desired=(0, 3))
    with pytest.raises(ValueError):
        ExperimentConfig("raid", 3, 2, m=3)
    with pytest.raises(SchemeConstraintError, match="p <= 2k-2"):
        run_experiment(ExperimentConfig("msr-b", 3, 5, m=5))


def test_config_to_dict_is_one_based():
    cfg = ExperimentConfig("msr-a", 3, 2, m=3, desired=(2, 0))
    assert cfg.to_dict()["desired"] == [1, 3]


@pytest.mark.parametrize("scheme,k,p,r", [("msr-a", 3, 2, None), ("msr-b", 3, 2, None), ("mbr", 2, 2, None), ("mbr", 2, 1, 3)])
def test_verify_parameters(scheme, k, p, r):
    params, checks = verify_parameters(scheme, k, p, r=r)
    assert all(checks.values()), checks
    assert "repair" in checks


def test_verify_flags_non_repairable_field():
    # over GF(13) the default points give colliding Lambda values: no repair, some 3-subsets ambiguous
    params, checks = verify_parameters("msr-a", 3, 2, q=13)
    assert "repair" not in checks
    assert checks["recovery"] is False
    assert checks["decode"] and checks["oracle_agrees"]
