"""End-to-end runs of the shipped scenarios through the theorem checker."""
import hashlib
from fractions import Fraction

import pytest

from backend.services.simulation_service import run_matrix, scenario_matrix
from backend.sim.engine import run_scenario
from backend.sim.theorems import assert_theorems, exit_code


def _checks(report):
    return {c["name"]: c for c in report["checks"]}


def _run(scenario_file, name, **overrides):
    metrics = run_scenario(scenario_file(name, **overrides))
    return metrics, assert_theorems(metrics)


def test_all_honest_normal_operation(scenario_file):
    metrics, report = _run(scenario_file, "all_honest")
    assert report["safety_passed"]
    assert exit_code(report) == 0
    rounds = metrics.rounds[metrics.rounds["round"] <= 200]
    assert all(rounds["normal_operation"])
    checks = _checks(report)
    for name in ("finality_latency", "consistency", "append_only", "minimal_progress", "liveness", "growth"):
        assert checks[name]["status"] == "pass", checks[name]


@pytest.mark.parametrize("name", ["equivocators", "delayed_notarization", "delayed_notarization_short"])
def test_adversaries_cannot_break_safety(scenario_file, name):
    _, report = _run(scenario_file, name)
    assert report["safety_passed"], report["safety_failures"]
    assert _checks(report)["consistency"]["status"] == "pass"


def test_hasty_observer_does_not_count_against_safety(scenario_file):
    metrics, report = _run(scenario_file, "hasty_observer")
    assert not metrics.summary["observers"]["hasty"]["hypothesis"]
    assert metrics.summary["observers"]["patient"]["hypothesis"]
    assert report["safety_passed"]
    assert _checks(report)["append_only"]["status"] == "pass"


@pytest.mark.parametrize("name", ["split_even", "split_majority"])
def test_partitions_heal(scenario_file, name):
    metrics, report = _run(scenario_file, name)
    partition = _checks(report)["partition_0"]
    assert partition["status"] == "pass", partition
    assert report["safety_passed"]
    assert metrics.summary["min_honest_round"] > metrics.summary["rounds_target"]


def test_stalled_split_produces_no_beacon_while_cut(scenario_file):
    _, report = _run(scenario_file, "split_even")
    partition = _checks(report)["partition_0"]
    assert partition["beacons_during"] == 0
    assert partition["resumed_at"] >= Fraction(67)


def test_same_seed_same_bytes(scenario_file, tmp_path):
    for label in ("a", "b"):
        run_scenario(scenario_file("equivocators", rounds=30)).write(tmp_path / label)
    for path in sorted((tmp_path / "a").rglob("*")):
        if path.is_file():
            twin = tmp_path / "b" / path.relative_to(tmp_path / "a")
            assert hashlib.sha256(path.read_bytes()).digest() == hashlib.sha256(twin.read_bytes()).digest(), path.name


def test_registry_scenario_stays_safe(scenario_file):
    _, report = _run(scenario_file, "registry")
    assert report["safety_passed"]


@pytest.mark.slow
def test_long_run_growth_and_quality(scenario_file):
    _, report = _run(scenario_file, "quality")
    checks = _checks(report)
    assert checks["growth"]["status"] == "pass", checks["growth"]
    quality = checks["quality"]
    assert quality["status"] == "pass", quality
    assert quality["lowest"] >= Fraction(8, 15)
    assert report["safety_passed"]


@pytest.mark.slow
def test_chain_growth_over_5000_rounds(scenario_file):
    metrics, report = _run(scenario_file, "growth")
    checks = _checks(report)
    assert checks["growth"]["status"] == "pass", checks["growth"]
    assert report["safety_passed"]
    rounds = metrics.rounds[(metrics.rounds["round"] >= 1) & (metrics.rounds["round"] <= 5000)]
    assert len(rounds) == 5000
    adversary_first = (rounds["best_honest_rank"] > 0).mean()
    assert 0.28 < adversary_first < 0.38


def test_largest_coalitions_in_the_matrix_stay_safe():
    cells = [c for c in scenario_matrix(rounds=20) if c.universe_size == 7 and len(c.byzantine) == 3]
    assert len(cells) == 2 * 8
    for cell in cells:
        report = assert_theorems(run_scenario(cell))
        assert report["safety_passed"], (cell.name, report["safety_failures"])


@pytest.mark.slow
def test_matrix_is_safe(tmp_path):
    frame = run_matrix(tmp_path, rounds=1000, jobs=-1)
    assert len(frame) == 86
    assert (tmp_path / "matrix.csv").exists()
    assert frame["safety_passed"].all(), frame[~frame["safety_passed"]]
