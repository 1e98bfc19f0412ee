import copy
from fractions import Fraction

import pandas as pd
import pytest

from backend.sim.engine import run_scenario
from backend.sim.metrics import Metrics
from backend.sim.scenario import DelayModel, Partition
from backend.sim.theorems import TheoremChecker, assert_theorems, exit_code


def _by_name(report):
    return {c["name"]: c for c in report["checks"]}


@pytest.fixture
def honest_metrics(small_scenario):
    return run_scenario(small_scenario(rounds=20))


def test_honest_run_passes_every_asserted_check(honest_metrics):
    report = assert_theorems(honest_metrics)
    assert report["safety_passed"]
    assert report["passed"], [c for c in report["checks"] if c["status"] == "fail"]
    assert exit_code(report) == 0
    checks = _by_name(report)
    for name in (
        "entry_spread",
        "round_skew",
        "beacon_latency",
        "minimal_progress",
        "honest_top_rank_single_notarization",
        "timely_publication",
        "signature_timing",
        "finality_latency",
        "consistency",
        "append_only",
        "liveness",
    ):
        assert checks[name]["status"] == "pass", checks[name]
    assert checks["progress_top_rank"]["status"] == "info"
    assert checks["beacon_stalls"]["status"] == "info"


def test_report_counts_add_up(honest_metrics):
    report = assert_theorems(honest_metrics)
    assert sum(report["counts"].values()) == len(report["checks"])
    assert report["scenario"] == "small"


def test_conflicting_finalization_fails_consistency(honest_metrics):
    metrics = copy.deepcopy(honest_metrics)
    row = metrics.finality.iloc[0].to_dict()
    row["observer"] = "watcher"
    row["digest"] = "00" * 32
    metrics.finality = pd.concat([metrics.finality, pd.DataFrame([row], dtype=object)], ignore_index=True)

    report = assert_theorems(metrics)
    consistency = _by_name(report)["consistency"]
    assert consistency["status"] == "fail"
    assert consistency["witness"]["round"] == row["round"]
    assert "consistency" in report["safety_failures"]
    assert exit_code(report) == 1


def test_recorded_violation_fails_append_only(honest_metrics):
    metrics = copy.deepcopy(honest_metrics)
    metrics.summary["observers"]["watcher"]["violations"] = [
        {"h": 3, "time": Fraction(9), "previous_head": "aa", "previous_height": 2, "new_head": "bb", "new_height": 1}
    ]
    report = assert_theorems(metrics)
    check = _by_name(report)["append_only"]
    assert check["status"] == "fail"
    assert check["witness"]["observer"] == "watcher"
    assert not report["safety_passed"]


def test_violations_outside_the_hypothesis_are_not_safety_failures(honest_metrics):
    metrics = copy.deepcopy(honest_metrics)
    metrics.summary["observers"]["watcher"]["hypothesis"] = False
    metrics.summary["observers"]["watcher"]["violations"] = [
        {"h": 3, "time": Fraction(9), "previous_head": "aa", "previous_height": 2, "new_head": "bb", "new_height": 1}
    ]
    report = assert_theorems(metrics)
    assert _by_name(report)["append_only_unguarded"]["status"] == "fail"
    assert report["safety_passed"]


def test_early_signature_is_reported(honest_metrics):
    metrics = copy.deepcopy(honest_metrics)
    metrics.summary["early_signatures"] = [{"replica": 1, "round": 2, "time": Fraction(1), "entered": Fraction(0)}]
    assert TheoremChecker(metrics).signature_timing()["status"] == "fail"


def test_timing_checks_skip_asynchronous_runs(small_scenario):
    metrics = run_scenario(small_scenario(delay=DelayModel(kind="exponential", mean=Fraction(1, 4)), rounds=8))
    checks = _by_name(assert_theorems(metrics))
    for name in ("entry_spread", "round_skew", "beacon_latency", "minimal_progress", "finality_latency"):
        assert checks[name]["status"] == "skipped"


def test_short_block_time_skips_three_delta_checks(small_scenario):
    metrics = run_scenario(small_scenario(block_time=Fraction(2), rounds=8))
    checks = _by_name(assert_theorems(metrics))
    assert checks["minimal_progress"]["status"] == "skipped"
    assert checks["growth"]["status"] == "skipped"
    assert checks["liveness"]["status"] == "skipped"


def test_partitioned_run_reports_one_check_per_partition(small_scenario):
    part = Partition(start=Fraction(10), end=Fraction(20), components=((1, 2), (3, 4)))
    metrics = run_scenario(small_scenario(partitions=(part,), rounds=14))
    checks = _by_name(assert_theorems(metrics))
    assert "partition_0" in checks
    assert checks["entry_spread"]["status"] == "skipped"


def test_report_survives_a_reload(honest_metrics, tmp_path):
    honest_metrics.write(tmp_path)
    reloaded = Metrics.from_dir(tmp_path)
    before = [(c["name"], c["status"]) for c in assert_theorems(honest_metrics)["checks"]]
    after = [(c["name"], c["status"]) for c in assert_theorems(reloaded)["checks"]]
    assert before == after
