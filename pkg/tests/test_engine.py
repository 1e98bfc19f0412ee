import hashlib
from fractions import Fraction

from backend.config import Config
from backend.consensus.committee import group_derive
from backend.consensus.finalizer import FinalizationMode
from backend.sim.engine import Simulation, dealer_seed, run_scenario
from backend.sim.scenario import AdversaryBehavior, DelayModel, ObserverSpec


def _digests(directory):
    return {
        str(path.relative_to(directory)): hashlib.sha256(path.read_bytes()).hexdigest()
        for path in sorted(directory.rglob("*"))
        if path.is_file()
    }


def test_honest_run_reaches_the_horizon(small_scenario):
    metrics = run_scenario(small_scenario())
    summary = metrics.summary
    assert summary["min_honest_round"] > 12
    assert not summary["truncated"]
    assert summary["invalid"] == {}
    rounds = metrics.rounds[metrics.rounds["round"] <= 12]
    assert list(rounds["notarized_blocks"]) == [1] * 12
    assert all(rounds["normal_operation"])


def test_genesis_group_covers_the_universe(small_scenario):
    summary = run_scenario(small_scenario()).summary
    assert len(summary["groups"]) == 1
    group = summary["groups"][0]
    assert sorted(group["members"]) == [1, 2, 3, 4]
    assert group["threshold"] == 3


def test_observers_follow_the_chain(small_scenario):
    metrics = run_scenario(small_scenario())
    observers = metrics.summary["observers"]
    assert set(observers) == {"replica-1", "replica-2", "replica-3", "replica-4", "watcher"}
    watcher = observers["watcher"]
    assert watcher["kind"] == "external"
    assert watcher["rejected"] == 0
    assert watcher["hypothesis"]
    assert watcher["length"] > 5
    assert watcher["violations"] == []
    assert len(metrics.finalized_logs["watcher"]) == watcher["length"]


def test_same_seed_gives_identical_files(small_scenario, tmp_path):
    scenario = small_scenario(delay=DelayModel(kind="uniform", grid=16))
    run_scenario(scenario).write(tmp_path / "a")
    run_scenario(scenario).write(tmp_path / "b")
    assert _digests(tmp_path / "a") == _digests(tmp_path / "b")


def test_seed_changes_group_keys(small_scenario):
    a = run_scenario(small_scenario(seed=1)).summary
    b = run_scenario(small_scenario(seed=2)).summary
    assert a["groups"][0]["public_key"] != b["groups"][0]["public_key"]


def test_dealer_seeds_are_distinct():
    seeds = {dealer_seed(0, (-1, 1), d) for d in range(1, 8)}
    seeds |= {dealer_seed(0, (0, 1), d) for d in range(1, 8)}
    seeds |= {dealer_seed(1, (-1, 1), d) for d in range(1, 8)}
    assert len(seeds) == 21


def test_crashed_minority_does_not_stop_progress(small_scenario):
    crash = AdversaryBehavior(replica=4, kind="crash", params=(("at", 0),))
    metrics = run_scenario(small_scenario(byzantine=(crash,)))
    summary = metrics.summary
    assert summary["byzantine"] == [4]
    assert summary["final_rounds"]["4"] == 0
    assert summary["min_honest_round"] > 12


def test_two_round_observer(small_scenario):
    observers = (ObserverSpec(name="fast", mode=FinalizationMode.TWO_ROUND),)
    summary = run_scenario(small_scenario(observers=observers)).summary
    fast = summary["observers"]["fast"]
    assert fast["mode"] == "two-round"
    assert fast["hypothesis"]
    assert fast["length"] > 5


def test_hasty_observer_is_outside_the_hypothesis(small_scenario):
    observers = (ObserverSpec(name="hasty", T=Fraction(0)),)
    summary = run_scenario(small_scenario(observers=observers)).summary
    assert summary["observers"]["hasty"]["hypothesis"] is False


def test_event_cap_truncates(small_scenario, monkeypatch):
    monkeypatch.setattr(Config, "MAX_EVENTS", 50)
    sim = Simulation(small_scenario())
    metrics = sim.run()
    assert metrics.summary["truncated"]
    assert metrics.summary["events"] == 50


def test_time_cap_truncates(small_scenario):
    metrics = run_scenario(small_scenario(max_time=Fraction(10)))
    assert metrics.summary["truncated"]
    assert metrics.summary["end_time"] <= 10


def test_registry_scenario_registers_groups(scenario_file):
    metrics = run_scenario(scenario_file("registry"))
    log = metrics.summary["registrations"]
    assert [(r["epoch"], r["group"], r["status"]) for r in log] == [(1, 2, "submitted"), (2, 3, "submitted")]
    assert metrics.summary["min_honest_round"] > 40


def test_registered_groups_derive_from_the_epoch_start_beacon(scenario_file):
    scenario = scenario_file("registry")
    sim = Simulation(scenario)
    log = sim.run().summary["registrations"]
    replica = sim.replicas[1]
    for entry in log:
        start = entry["epoch"] * scenario.epoch_length
        universe = replica.universe_at(start)
        derived = group_derive(replica.state.beacon[start], entry["group"], universe, scenario.group_size)
        assert entry["status"] == "submitted"
        assert entry["members"] == list(derived.members)
