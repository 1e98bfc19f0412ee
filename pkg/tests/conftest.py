import json
from fractions import Fraction
from pathlib import Path

import pytest

from backend.config import Config
from backend.sim.scenario import ObserverSpec, Scenario, load_scenario

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def vectors():
    return json.loads((FIXTURES / "vectors.json").read_text(encoding="utf-8"))


@pytest.fixture
def scenario_file():
    def _load(name: str, **overrides) -> Scenario:
        scenario = load_scenario(Config.SCENARIOS_DIR / f"{name}.json")
        return Scenario.from_dict({**scenario.to_dict(), **overrides}) if overrides else scenario

    return _load


@pytest.fixture
def small_scenario():
    """Four honest replicas, fixed half-delta delays: fast enough for unit-level runs."""

    def _make(**overrides) -> Scenario:
        base = dict(
            name="small",
            universe_size=4,
            group_size=4,
            delta=Fraction(1),
            block_time=Fraction(3),
            finalization_t=Fraction(2),
            rounds=12,
            observers=(ObserverSpec(name="watcher"),),
            seed=1,
        )
        base.update(overrides)
        return Scenario(**base).validate()

    return _make


@pytest.fixture
def runs_dir(tmp_path, monkeypatch):
    monkeypatch.setattr(Config, "OUTPUT_DIR", tmp_path)
    return tmp_path
