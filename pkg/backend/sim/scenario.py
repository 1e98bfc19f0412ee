"""
Versioned JSON scenario schema.

A scenario fully determines a run: together with its master seed it fixes
every delay draw, every key and every beacon output. All times are exact
fractions; JSON may give them as integers or "a/b" strings.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from backend.config import Config
from backend.consensus.committee import growth_parameter
from backend.consensus.finalizer import FinalizationMode
from backend.consensus.threshold import PRESETS, default_threshold
from backend.errors import ScenarioError
from backend.utils.helpers import parse_fraction

SCHEMA_VERSION = 1

DELAY_KINDS = ("fixed", "uniform", "exponential")
ADVERSARY_KINDS = (
    "equivocate",
    "withhold-signatures",
    "withhold-notarization",
    "selfish-chain",
    "crash",
    "beacon-abstain",
    "passive",
)
REGISTRATION_KINDS = ("group-join", "replica-join", "replica-leave")


@dataclass(frozen=True)
class DelayModel:
    kind: str = "fixed"
    value: Fraction = Fraction(1, 2)  # fixed delay
    grid: int = 64  # uniform draws are multiples of delta/grid in [0, delta)
    mean: Fraction = Fraction(1, 2)  # exponential mean

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == "fixed":
            return {"kind": "fixed", "value": str(self.value)}
        if self.kind == "uniform":
            return {"kind": "uniform", "grid": self.grid}
        return {"kind": "exponential", "mean": str(self.mean)}


@dataclass(frozen=True)
class Partition:
    start: Fraction
    end: Fraction
    components: Tuple[Tuple[int, ...], ...]

    def component_of(self, label: int) -> int:
        for idx, comp in enumerate(self.components):
            if label in comp:
                return idx
        return -1

    def separates(self, a: int, b: int) -> bool:
        """Only labels listed in some component are cut off; observers are never partitioned."""
        ca, cb = self.component_of(a), self.component_of(b)
        return ca != -1 and cb != -1 and ca != cb

    def to_dict(self) -> Dict[str, Any]:
        return {"start": str(self.start), "end": str(self.end), "components": [list(c) for c in self.components]}


@dataclass(frozen=True)
class AdversaryBehavior:
    replica: int
    kind: str
    params: Tuple[Tuple[str, Any], ...] = ()

    def param(self, name: str, default: Any = None) -> Any:
        return dict(self.params).get(name, default)

    def to_dict(self) -> Dict[str, Any]:
        return {"replica": self.replica, "kind": self.kind, "params": dict(self.params)}


@dataclass(frozen=True)
class ObserverSpec:
    name: str
    mode: FinalizationMode = FinalizationMode.TIMER
    T: Fraction = Fraction(2)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "mode": self.mode.value, "T": str(self.T)}


@dataclass(frozen=True)
class Registration:
    kind: str
    epoch: int
    subject: int

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "epoch": self.epoch, "subject": self.subject}


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    universe_size: int = 7
    inactive: Tuple[int, ...] = ()
    group_size: int = 7
    threshold: Optional[int] = None
    groups: int = 1
    m_max: int = Config.M_MAX
    epoch_length: int = Config.EPOCH_LENGTH
    group_lifetime: int = Config.GROUP_LIFETIME
    beta: Fraction = Fraction(3)
    delta: Fraction = Config.DELTA
    delay: DelayModel = field(default_factory=DelayModel)
    block_time: Fraction = Config.BLOCK_TIME
    finalization_t: Fraction = Config.FINALIZATION_T
    finalization_mode: FinalizationMode = FinalizationMode.TIMER
    rounds: int = 50
    max_time: Optional[Fraction] = None
    partitions: Tuple[Partition, ...] = ()
    byzantine: Tuple[AdversaryBehavior, ...] = ()
    observers: Tuple[ObserverSpec, ...] = ()
    registrations: Tuple[Registration, ...] = ()
    seed: int = 0
    param_preset: str = Config.PARAM_PRESET
    quality_eta: int = 100
    quality_epsilon: Fraction = Fraction(1, 5)
    growth_rho_log2: int = 10
    allow_assumption_violation: bool = False

    # -----------------------------
    # Derived views
    # -----------------------------
    @property
    def labels(self) -> Tuple[int, ...]:
        return tuple(range(1, self.universe_size + 1))

    @property
    def genesis_labels(self) -> Tuple[int, ...]:
        return tuple(i for i in self.labels if i not in self.inactive)

    @property
    def t(self) -> int:
        return default_threshold(self.group_size) if self.threshold is None else self.threshold

    @property
    def byzantine_labels(self) -> Tuple[int, ...]:
        return tuple(sorted(b.replica for b in self.byzantine))

    @property
    def payload_predicate(self) -> str:
        return "registry" if self.registrations else "always"

    @property
    def synchronous(self) -> bool:
        return self.delay.kind != "exponential"

    def behavior_of(self, label: int) -> Optional[AdversaryBehavior]:
        for b in self.byzantine:
            if b.replica == label:
                return b
        return None

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)

    # -----------------------------
    # Validation
    # -----------------------------
    def validate(self) -> "Scenario":
        problems: List[str] = []
        if self.universe_size < 1:
            problems.append("universe_size must be >= 1")
        if not 1 <= self.group_size <= len(self.genesis_labels):
            problems.append(f"group_size {self.group_size} must lie in 1..{len(self.genesis_labels)}")
        elif not 1 <= self.t <= self.group_size:
            problems.append(f"threshold {self.t} must lie in 1..{self.group_size}")
        if self.groups < 1 or self.groups > self.m_max:
            problems.append(f"groups must lie in 1..m_max={self.m_max}")
        for name in ("delta", "block_time", "finalization_t"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be > 0")
        if self.rounds < 1:
            problems.append("rounds must be >= 1")
        if self.beta <= 2:
            problems.append("beta must be > 2")
        if self.epoch_length < 1 or self.group_lifetime < 1:
            problems.append("epoch_length and group_lifetime must be >= 1")
        if self.growth_rho_log2 < 1:
            problems.append("growth_rho_log2 must be >= 1")
        elif self.registrations and self.beta > 2:
            k = growth_parameter(self.beta, Fraction(1, 2 ** self.growth_rho_log2))
            if self.epoch_length < k + 2:
                problems.append(f"epoch_length {self.epoch_length} must be >= k+2 = {k + 2} when registrations are scheduled")
        if self.param_preset not in PRESETS:
            problems.append(f"unknown param_preset {self.param_preset!r}")
        if self.delay.kind not in DELAY_KINDS:
            problems.append(f"unknown delay kind {self.delay.kind!r}")
        elif self.delay.kind == "fixed" and not 0 <= self.delay.value < self.delta:
            problems.append("fixed delay must lie in [0, delta)")
        elif self.delay.kind == "uniform" and self.delay.grid < 1:
            problems.append("uniform grid must be >= 1")
        elif self.delay.kind == "exponential" and self.delay.mean <= 0:
            problems.append("exponential mean must be > 0")

        labels = set(self.labels)
        if not set(self.inactive) <= labels:
            problems.append("inactive labels must belong to the universe")
        roster = self.byzantine_labels
        if len(set(roster)) != len(roster):
            problems.append("a replica may carry only one adversary behaviour")
        if not set(roster) <= labels:
            problems.append("byzantine roster must be a subset of the universe")
        for b in self.byzantine:
            if b.kind not in ADVERSARY_KINDS:
                problems.append(f"unknown adversary kind {b.kind!r}")
        honest_enough = len(roster) * self.beta < self.universe_size
        if not honest_enough and not self.allow_assumption_violation:
            problems.append(
                f"{len(roster)} byzantine replicas violate |byzantine| < |U|/beta with beta={self.beta}; "
                "set allow_assumption_violation to run anyway"
            )

        for p in self.partitions:
            if p.end <= p.start or p.start < 0:
                problems.append(f"partition [{p.start}, {p.end}) must have 0 <= start < end")
            flat = [x for c in p.components for x in c]
            if len(flat) != len(set(flat)) or not set(flat) <= labels:
                problems.append("partition components must be disjoint subsets of the universe")

        names = [o.name for o in self.observers]
        if len(names) != len(set(names)):
            problems.append("observer names must be distinct")
        for o in self.observers:
            if o.T < 0:
                problems.append(f"observer {o.name}: T must be >= 0")

        for reg in self.registrations:
            if reg.kind not in REGISTRATION_KINDS:
                problems.append(f"unknown registration kind {reg.kind!r}")
            elif reg.epoch < 0:
                problems.append("registration epoch must be >= 0")
            elif reg.kind == "group-join" and not 1 <= reg.subject <= self.m_max:
                problems.append(f"group index {reg.subject} outside 1..m_max")
            elif reg.kind != "group-join" and reg.subject not in labels:
                problems.append(f"registration subject {reg.subject} not in the universe")

        if problems:
            raise ScenarioError("Invalid scenario: " + "; ".join(problems))
        return self

    # -----------------------------
    # JSON
    # -----------------------------
    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "universe_size": self.universe_size,
            "inactive": list(self.inactive),
            "group_size": self.group_size,
            "threshold": self.t,
            "groups": self.groups,
            "m_max": self.m_max,
            "epoch_length": self.epoch_length,
            "group_lifetime": self.group_lifetime,
            "beta": str(self.beta),
            "delta": str(self.delta),
            "delay": self.delay.to_dict(),
            "block_time": str(self.block_time),
            "finalization_t": str(self.finalization_t),
            "finalization_mode": self.finalization_mode.value,
            "rounds": self.rounds,
            "max_time": None if self.max_time is None else str(self.max_time),
            "partitions": [p.to_dict() for p in self.partitions],
            "byzantine": [b.to_dict() for b in self.byzantine],
            "observers": [o.to_dict() for o in self.observers],
            "registrations": [r.to_dict() for r in self.registrations],
            "seed": self.seed,
            "param_preset": self.param_preset,
            "quality": {"eta": self.quality_eta, "epsilon": str(self.quality_epsilon)},
            "growth_rho_log2": self.growth_rho_log2,
            "allow_assumption_violation": self.allow_assumption_violation,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Scenario":
        if not isinstance(data, dict):
            raise ScenarioError("scenario must be a JSON object")
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ScenarioError(f"unsupported schema_version {version}; expected {SCHEMA_VERSION}")
        try:
            return cls._parse(data).validate()
        except ScenarioError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ScenarioError(f"Invalid scenario: {e}") from e

    @classmethod
    def _parse(cls, data: Dict[str, Any]) -> "Scenario":
        frac = parse_fraction
        delay_raw = data.get("delay", {"kind": "fixed", "value": "1/2"})
        delay = DelayModel(
            kind=delay_raw.get("kind", "fixed"),
            value=frac(delay_raw.get("value", "1/2"), "delay.value"),
            grid=int(delay_raw.get("grid", 64)),
            mean=frac(delay_raw.get("mean", "1/2"), "delay.mean"),
        )
        default_t = frac(data.get("finalization_t", Config.FINALIZATION_T), "finalization_t")
        default_mode = FinalizationMode(data.get("finalization_mode", FinalizationMode.TIMER.value))
        quality = data.get("quality", {})
        size = int(data.get("group_size", data.get("universe_size", 7)))
        threshold = data.get("threshold")
        max_time = data.get("max_time")
        return cls(
            name=str(data.get("name", "scenario")),
            universe_size=int(data.get("universe_size", 7)),
            inactive=tuple(int(x) for x in data.get("inactive", ())),
            group_size=size,
            threshold=None if threshold is None else int(threshold),
            groups=int(data.get("groups", 1)),
            m_max=int(data.get("m_max", Config.M_MAX)),
            epoch_length=int(data.get("epoch_length", Config.EPOCH_LENGTH)),
            group_lifetime=int(data.get("group_lifetime", Config.GROUP_LIFETIME)),
            beta=frac(data.get("beta", 3), "beta"),
            delta=frac(data.get("delta", Config.DELTA), "delta"),
            delay=delay,
            block_time=frac(data.get("block_time", Config.BLOCK_TIME), "block_time"),
            finalization_t=default_t,
            finalization_mode=default_mode,
            rounds=int(data.get("rounds", 50)),
            max_time=None if max_time is None else frac(max_time, "max_time"),
            partitions=tuple(
                Partition(
                    start=frac(p["start"], "partition.start"),
                    end=frac(p["end"], "partition.end"),
                    components=tuple(tuple(int(x) for x in c) for c in p["components"]),
                )
                for p in data.get("partitions", ())
            ),
            byzantine=tuple(
                AdversaryBehavior(
                    replica=int(b["replica"]),
                    kind=str(b.get("behavior", b.get("kind"))),
                    params=tuple(sorted((b.get("params") or {}).items())),
                )
                for b in data.get("byzantine", ())
            ),
            observers=tuple(
                ObserverSpec(
                    name=str(o["name"]),
                    mode=FinalizationMode(o.get("mode", default_mode.value)),
                    T=frac(o.get("T", default_t), "observer.T"),
                )
                for o in data.get("observers", ())
            ),
            registrations=tuple(
                Registration(kind=str(r["kind"]), epoch=int(r["epoch"]), subject=int(r.get("subject", r.get("group", 0))))
                for r in data.get("registrations", ())
            ),
            seed=int(data.get("seed", 0)),
            param_preset=str(data.get("param_preset", Config.PARAM_PRESET)),
            quality_eta=int(quality.get("eta", 100)),
            quality_epsilon=frac(quality.get("epsilon", "1/5"), "quality.epsilon"),
            growth_rho_log2=int(data.get("growth_rho_log2", 10)),
            allow_assumption_violation=bool(data.get("allow_assumption_violation", False)),
        )


def load_scenario(path: Path, seed: Optional[int] = None) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ScenarioError(f"scenario file {path} is not valid JSON: {e}") from e
    scenario = Scenario.from_dict(data)
    return scenario if seed is None else scenario.with_seed(seed)
