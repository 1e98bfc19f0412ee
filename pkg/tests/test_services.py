import pytest

from backend.services import dkg_service, groupsize_service
from backend.services.report_service import (
    checks_frame,
    latency_frame,
    list_runs,
    load_run,
    notarization_frame,
    resolve_run,
    timing_frame,
)
from backend.services.simulation_service import (
    REPORT_FILE,
    check_run,
    load_report,
    run_and_store,
    run_id_for,
    scenario_matrix,
)


# -----------------------------
# Group size
# -----------------------------
def test_solve_returns_size_threshold_and_growth():
    result = groupsize_service.solve(3, 40, 10_000)
    assert result["group_size"] == 405
    assert result["threshold"] == 203
    assert result["distribution"] == "hypergeometric"
    assert result["beta"] == "3"


def test_solve_binomial_when_population_is_missing():
    result = groupsize_service.solve("4", 40)
    assert result["group_size"] == 173
    assert result["distribution"] == "binomial"


def test_solve_rejects_bad_input():
    with pytest.raises(ValueError):
        groupsize_service.solve(3, 0)
    with pytest.raises(ValueError):
        groupsize_service.solve("three", 40)


@pytest.mark.slow
def test_tables_match_reference_values(vectors):
    for kind, population in (("hypergeometric", 10_000), ("binomial", None)):
        df = groupsize_service.table(population)
        for rho_log2, row in vectors[f"groupsize_{kind}"]["rows"].items():
            expected = [row[str(beta)] for beta in groupsize_service.TABLE_BETAS]
            assert [int(v) for v in df.loc[int(rho_log2)]] == expected, (kind, rho_log2)


# -----------------------------
# DKG demo
# -----------------------------
def test_dkg_demo_unique_signature():
    result = dkg_service.demo(5)
    assert result["t"] == 3
    assert result["qualified"] == [1, 2, 3, 4, 5]
    assert result["valid_shares"] == 5
    assert result["subsets"] == 10
    assert result["unique_signature"]
    assert result["verified"]


def test_dkg_demo_disqualifies_cheater():
    result = dkg_service.demo(5, cheater=2)
    assert result["disqualified"] == [2]
    assert 2 not in result["qualified"]
    assert result["unique_signature"] and result["verified"]


def test_dkg_demo_rejects_unknown_cheater():
    with pytest.raises(ValueError):
        dkg_service.demo(3, cheater=7)


# -----------------------------
# Simulation runs
# -----------------------------
def test_matrix_covers_every_cell():
    cells = scenario_matrix(rounds=10)
    assert len(cells) == 86
    assert len({c.name for c in cells}) == 86
    waived = [c for c in cells if c.allow_assumption_violation]
    assert all(len(c.byzantine) * 3 >= c.universe_size for c in waived)


def test_run_id_is_stable(small_scenario):
    assert run_id_for(small_scenario()) == run_id_for(small_scenario())
    assert run_id_for(small_scenario()) != run_id_for(small_scenario(seed=2))
    assert run_id_for(small_scenario()).startswith("small-s1-")


def test_run_and_store_then_check(small_scenario, runs_dir):
    result = run_and_store(small_scenario())
    run_dir = runs_dir / result["run_id"]
    assert (run_dir / REPORT_FILE).exists()
    assert (run_dir / "summary.json").exists()
    assert result["report"]["safety_passed"]

    stored = load_report(run_dir)
    rechecked = check_run(run_dir)
    assert [c["status"] for c in rechecked["checks"]] == [c["status"] for c in stored["checks"]]
    assert list_runs() == [result["run_id"]]


def test_load_report_without_a_report(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_report(tmp_path)


# -----------------------------
# Report frames
# -----------------------------
def test_report_frames(small_scenario, runs_dir):
    run_id = run_and_store(small_scenario())["run_id"]
    loaded = load_run(resolve_run(run_id))
    metrics = loaded["metrics"]

    timing = timing_frame(metrics)
    assert list(timing.columns) == ["entered_first", "entered_last", "beacon_first", "duration"]
    assert timing.loc[1, "entered_first"] == 0.0

    assert (notarization_frame(metrics).loc[1:12, "notarized_blocks"] == 1).all()

    latency = latency_frame(metrics)
    assert not latency.empty
    assert (latency["latency"] >= 0).all()

    checks = checks_frame(loaded["report"])
    assert list(checks.columns) == ["name", "status", "safety", "detail"]
    assert checks_frame(None).empty


def test_resolve_run_refuses_escapes(runs_dir):
    with pytest.raises(FileNotFoundError):
        resolve_run("../x")
    with pytest.raises(FileNotFoundError):
        resolve_run("missing")
