"""
Discrete-event simulation of a full replica population.

run_scenario builds keys and replicas from the scenario, drives the event
queue until every honest replica has passed the round horizon (or a time
or event cap is hit), and condenses the ground truth into Metrics.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Dict, Hashable, List, Optional, Tuple

import pandas as pd

from backend.config import Config
from backend.consensus.chain import NotarizedBlock, notary_message, ranking
from backend.consensus.committee import Group, group_derive, growth_parameter
from backend.consensus.finalizer import FINALIZE_TAG, FinalizationMode, Observer
from backend.consensus.messages import Broadcast, Effect, MessageKind, ProtocolMessage, SendTo, SetTimer, Trace
from backend.consensus.primitives import encode_counter, hash_digest
from backend.consensus.registry import (
    EntryKind,
    GenesisRegistry,
    RegistryConfig,
    RegistryEntry,
    epoch_start,
    register_group,
    registration_message,
)
from backend.consensus.replica import ProtocolConfig, Replica
from backend.consensus.threshold import DKGResult, SchemeParams, SecretKeyShare, dkg, sign_share
from backend.errors import DKGError, DependencyMissing, RegistrationRejected
from backend.sim.adversary import ByzantineReplica, Coalition, signs_registrations
from backend.sim.metrics import FINALITY_COLUMNS, GroundTruth, Metrics, finality_rows
from backend.sim.network import Delivery, EventQueue, Heal, Network, TimerFire
from backend.sim.scenario import Registration, Scenario
from backend.utils.helpers import get_logger

logger = get_logger("engine")

OBSERVER_PREFIX = "obs:"


def dealer_seed(master: int, group: Tuple[int, int], dealer: int) -> bytes:
    """Per-dealer DKG randomness derived from the scenario seed."""
    epoch, j = group
    return hash_digest(
        b"dkg" + encode_counter(master) + encode_counter(epoch + 1) + encode_counter(j) + encode_counter(dealer)
    )


def genesis_seed(master: int) -> bytes:
    return hash_digest(b"genesis-groups" + encode_counter(master))


def run_group_dkg(group: Group, base: SchemeParams, master: int) -> Tuple[Group, Dict[Hashable, SecretKeyShare], DKGResult]:
    params = base.with_threshold(group.threshold, group.size)
    result = dkg(params, [dealer_seed(master, group.key, i) for i in range(1, group.size + 1)])
    keys = {label: result.share_for(idx) for idx, label in enumerate(group.members, start=1)}
    return group.with_verification(result.verification), keys, result


class Simulation:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario.validate()
        s = self.scenario
        self.base = SchemeParams.preset(s.param_preset, n=s.group_size, t=s.t)
        self.delta = s.delta

        seed = genesis_seed(s.seed)
        groups: List[Group] = []
        keys: Dict[Hashable, Dict[Tuple[int, int], SecretKeyShare]] = {label: {} for label in s.labels}
        for j in range(1, s.groups + 1):
            derived = group_derive(seed, j, s.genesis_labels, s.group_size)
            derived = Group(id=j, members=derived.members, threshold=s.t)
            group, shares, _ = run_group_dkg(derived, self.base, s.seed)
            groups.append(group)
            for label, share in shares.items():
                keys[label][group.key] = share
        self.genesis = GenesisRegistry(replicas=s.genesis_labels, groups=tuple(groups))
        self.registry = (
            RegistryConfig(s.epoch_length, s.m_max, s.group_lifetime, self.base) if s.registrations else None
        )

        self.config = ProtocolConfig(
            block_time=s.block_time,
            n=s.group_size,
            t=s.t,
            m=s.groups,
            beta=s.beta,
            epoch_length=s.epoch_length,
            payload_predicate=s.payload_predicate,
            m_max=s.m_max,
            group_lifetime=s.group_lifetime,
            finalization_t=s.finalization_t,
            finalization_mode=s.finalization_mode,
        )

        self.coalition = Coalition(members=s.byzantine_labels)
        self.replicas: Dict[Hashable, Replica] = {}
        for label in s.labels:
            behavior = s.behavior_of(label)
            kwargs = dict(config=self.config, genesis=self.genesis, keys=keys[label], registry=self.registry)
            if behavior is None:
                self.replicas[label] = Replica(label, **kwargs)
            else:
                self.replicas[label] = ByzantineReplica(label, behavior=behavior, coalition=self.coalition, **kwargs)
        self.honest = frozenset(label for label in s.labels if s.behavior_of(label) is None)

        self.observers: Dict[str, Observer] = {
            OBSERVER_PREFIX + o.name: Observer(o.name, mode=o.mode, T=o.T, verify=self._verify_external)
            for o in s.observers
        }
        self.recipients: Tuple[Hashable, ...] = (*s.labels, *self.observers)

        self.network = Network(s.delta, s.delay, s.partitions, s.seed)
        self.queue = EventQueue()
        self.truth = GroundTruth(honest=self.honest, block_time=s.block_time)
        self.partition_log: List[Dict] = []
        self._pending_registrations: Dict[int, List[Registration]] = {}
        for reg in s.registrations:
            self._pending_registrations.setdefault(reg.epoch, []).append(reg)
        self.registration_log: List[Dict] = []
        self.events = 0
        self.truncated = False

    # -----------------------------
    # Ground-truth helpers
    # -----------------------------
    def _reference(self, r: int) -> Optional[Replica]:
        """An honest replica that knows the round-r beacon."""
        for label in sorted(self.honest):
            replica = self.replicas[label]
            if r in replica.state.beacon:
                return replica
        return None

    def _verify_external(self, nb: NotarizedBlock) -> bool:
        ref = self._reference(nb.round - 1)
        if ref is None:
            return False
        try:
            return ref.verify_notarization(nb.round, notary_message(nb.digest), nb.notarization)
        except DependencyMissing:
            return False

    def best_honest_rank(self, r: int) -> Optional[int]:
        ref = self._reference(r)
        if ref is None:
            return None
        try:
            universe = ref.universe_at(r)
        except DependencyMissing:
            return None
        perm = ranking(universe, ref.state.beacon[r])
        ranks = [perm.rank_of(label) for label in universe if label in self.honest]
        return min(ranks) if ranks else None

    def _min_honest_round(self) -> int:
        return min((self.replicas[label].round for label in self.honest), default=0)

    def _time_cap(self) -> Fraction:
        s = self.scenario
        if s.max_time is not None:
            return s.max_time
        slack = s.delta if s.synchronous else 8 * s.delay.mean
        per_round = s.block_time + (len(s.byzantine) + 4) * slack
        outages = sum((p.end - p.start for p in s.partitions), Fraction(0))
        return (s.rounds + 10) * per_round * 2 + outages

    # -----------------------------
    # Effects
    # -----------------------------
    def _apply(self, actor: Hashable, at: Fraction, effects: List[Effect]) -> None:
        for effect in effects:
            if isinstance(effect, Broadcast):
                self._send(actor, effect.message, at + effect.delay, self.recipients)
            elif isinstance(effect, SendTo):
                self._send(actor, effect.message, at, (effect.recipient,))
            elif isinstance(effect, SetTimer):
                self.queue.push(effect.at, TimerFire(actor, effect.tag, effect.round))
            elif isinstance(effect, Trace):
                self.truth.on_trace(at, actor, effect)
                if effect.event == "enter":
                    self._on_round_entered(effect.round)
                elif effect.event == "beacon" and actor in self.honest:
                    self._on_beacon(effect.round)

    def _send(self, sender: Hashable, message: ProtocolMessage, at: Fraction, recipients) -> None:
        self.truth.on_send(at, message)
        for recipient, arrive in self.network.deliver(message, sender, at, recipients):
            self.queue.push(arrive, Delivery(recipient, message))

    # -----------------------------
    # Registrations
    # -----------------------------
    def _on_round_entered(self, r: int) -> None:
        # epoch 0 starts from the genesis seed, already known on entering round 1
        if self.registry is not None and r == 1:
            self._open_epoch(0)

    def _on_beacon(self, r: int) -> None:
        l = self.registry.epoch_length if self.registry is not None else 0
        if l and r > 0 and r % l == 0:
            self._open_epoch(r // l)

    def _open_epoch(self, e: int) -> None:
        for reg in self._pending_registrations.pop(e, []):
            self._register(reg, e)

    def _register(self, reg: Registration, e: int) -> None:
        """Submit a registration once xi of the epoch's first round is known."""
        if reg.kind != EntryKind.GROUP_JOIN.value:
            entry = RegistryEntry(kind=EntryKind(reg.kind), subject=reg.subject, epoch_submitted=e)
            self._submit(entry)
            return
        start = epoch_start(e, self.registry.epoch_length)
        ref = self._reference(start)
        if ref is None:
            self.registration_log.append({"epoch": e, "group": reg.subject, "status": "rejected", "reason": "no beacon"})
            return
        s = self.scenario
        try:
            universe = ref.universe_at(start)
        except DependencyMissing:
            self.registration_log.append({"epoch": e, "group": reg.subject, "status": "rejected", "reason": "registry not final"})
            return
        candidate = group_derive(ref.state.beacon[start], reg.subject, universe, s.group_size)
        candidate = Group(id=reg.subject, members=candidate.members, threshold=s.t, epoch=e)
        try:
            group, shares, result = run_group_dkg(candidate, self.base, s.seed)
            V = group.verification
            x = registration_message(e, reg.subject, V.elements[0], self.base)
            signatures = [
                sign_share(x, shares[label], V)
                for label in group.members
                if signs_registrations(s.behavior_of(label))
            ]
            entry = register_group(group, e, result, signatures, self.registry)
        except (DKGError, RegistrationRejected) as e_:
            reason = getattr(e_, "reason", str(e_))
            self.registration_log.append({"epoch": e, "group": reg.subject, "status": "rejected", "reason": reason})
            logger.info(f"⚠️ group {reg.subject} registration for epoch {e} rejected: {reason}")
            return
        for label, share in shares.items():
            self.replicas[label].install_key((e, reg.subject), share)
        self.registration_log.append(
            {"epoch": e, "group": reg.subject, "status": "submitted", "members": list(group.members)}
        )
        self._submit(entry)

    def _submit(self, entry: RegistryEntry) -> None:
        for replica in self.replicas.values():
            replica.submit(entry)

    # -----------------------------
    # Event loop
    # -----------------------------
    def run(self) -> Metrics:
        s = self.scenario
        logger.info(f"🚀 Running scenario '{s.name}' (seed={s.seed}, rounds={s.rounds})")
        for label in s.labels:
            self._apply(label, Fraction(0), self.replicas[label].start(Fraction(0)))
        for idx, p in enumerate(s.partitions):
            self.queue.push(p.end, Heal(idx))
            self.partition_log.append(
                {"start": p.start, "end": p.end, "components": [list(c) for c in p.components], "snapshots": {}}
            )

        cap = self._time_cap()
        snapshots_taken = set()
        while len(self.queue):
            if self.events >= Config.MAX_EVENTS:
                self.truncated = True
                logger.warning(f"⚠️ event cap {Config.MAX_EVENTS} reached; stopping")
                break
            at = self.queue.peek_time()
            if at > cap:
                self.truncated = True
                break
            for idx, p in enumerate(s.partitions):
                if idx not in snapshots_taken and at >= p.start:
                    snapshots_taken.add(idx)
                    self.partition_log[idx]["snapshots"]["start"] = self._rounds_snapshot()
            at, event = self.queue.pop()
            self.events += 1
            self._handle(at, event)
            if self._min_honest_round() > s.rounds and self.queue.peek_time() != at:
                break

        end = self.queue.now
        logger.info(f"✅ Scenario '{s.name}' finished at t={end} after {self.events} events")
        return self._collect(end)

    def _handle(self, at: Fraction, event) -> None:
        if isinstance(event, Delivery):
            target = event.recipient
            if target in self.observers:
                if event.message.kind is MessageKind.NOTARIZED_BLOCK:
                    for timer in self.observers[target].ingest(event.message.body, at):
                        self.queue.push(timer.at, TimerFire(target, timer.tag, timer.round))
                return
            self._apply(target, at, self.replicas[target].receive(event.message, at))
        elif isinstance(event, TimerFire):
            target = event.recipient
            if target in self.observers:
                if event.tag == FINALIZE_TAG:
                    self.observers[target].finalize(event.round, at)
                return
            self._apply(target, at, self.replicas[target].on_timer(event.tag, event.round, at))
        elif isinstance(event, Heal):
            self.partition_log[event.partition]["snapshots"]["end"] = self._rounds_snapshot()
            logger.info(f"🔁 Partition {event.partition} healed at t={at}")
            for label in self.scenario.labels:
                self._apply(label, at, self.replicas[label].on_heal(at))

    def _rounds_snapshot(self) -> Dict[str, int]:
        return {str(label): replica.round for label, replica in sorted(self.replicas.items())}

    # -----------------------------
    # Condensing
    # -----------------------------
    def _observer_views(self) -> Dict[str, Tuple[str, Observer, bool]]:
        """name -> (kind, observer, satisfies the finality hypothesis)."""
        s = self.scenario
        views = {}
        for label in sorted(self.honest):
            obs = self.replicas[label].observer
            views[f"replica-{label}"] = ("replica", obs, self._hypothesis(obs))
        for name, obs in self.observers.items():
            views[name[len(OBSERVER_PREFIX):]] = ("external", obs, self._hypothesis(obs))
        return views

    def _hypothesis(self, obs: Observer) -> bool:
        return obs.mode is FinalizationMode.TWO_ROUND or obs.T >= 2 * self.delta

    def _collect(self, end: Fraction) -> Metrics:
        s = self.scenario
        truth = self.truth
        last_round = max([0, *truth.enter.keys()])
        best = {r: self.best_honest_rank(r) for r in range(1, last_round + 1)}

        finality: List[Dict] = []
        observers = {}
        logs = {}
        for name, (kind, obs, hypothesis) in sorted(self._observer_views().items()):
            finality.extend(finality_rows(name, obs, self.honest, self.delta))
            observers[name] = {
                "kind": kind,
                "mode": obs.mode.value,
                "T": obs.T,
                "hypothesis": hypothesis,
                "length": len(obs.finalized),
                "head": obs.finalized[-1].digest.hex(),
                "rejected": obs.rejected,
                "violations": [
                    {
                        "h": v.h,
                        "time": v.time,
                        "previous_head": v.previous_head.hex(),
                        "previous_height": v.previous_height,
                        "new_head": v.new_head.hex(),
                        "new_height": v.new_height,
                    }
                    for v in obs.violations
                ],
            }
            ref = self.replicas[sorted(self.honest)[0]] if self.honest else None
            logs[name] = obs.export_lines(self._safe_rank(ref))

        final_rounds = {str(label): self.replicas[label].round for label in sorted(self.replicas)}
        summary = {
            "name": s.name,
            "seed": s.seed,
            "rounds_target": s.rounds,
            "max_round": last_round,
            "min_honest_round": self._min_honest_round() if self.honest else 0,
            "end_time": end,
            "events": self.events,
            "truncated": self.truncated,
            "messages": {
                "sent": self.network.sent,
                "dropped": self.network.dropped,
                "suppressed": self.network.suppressed,
            },
            "honest": sorted(self.honest),
            "byzantine": list(s.byzantine_labels),
            "final_rounds": final_rounds,
            "growth_k": growth_parameter(s.beta, Fraction(1, 2 ** s.growth_rho_log2)),
            "early_signatures": truth.early_signatures,
            "invalid": dict(sorted(truth.invalid.items())),
            "observers": observers,
            "partitions": self.partition_log,
            "registrations": self.registration_log,
            "groups": [
                {"id": g.id, "members": list(g.members), "threshold": g.threshold, "public_key": format(g.verification.elements[0], "x")}
                for g in self.genesis.groups
            ],
        }
        finality.sort(key=lambda row: (row["observer"], row["round"], row["finalized_at"], row["digest"]))
        return Metrics(
            scenario=s,
            rounds=truth.rounds_table(best),
            blocks=truth.blocks_table(),
            finality=pd.DataFrame(finality, columns=FINALITY_COLUMNS, dtype=object),
            growth=truth.growth_table(),
            summary=summary,
            finalized_logs=logs,
        )

    @staticmethod
    def _safe_rank(ref: Optional[Replica]):
        if ref is None:
            return None

        def rank(block):
            try:
                return ref.rank_of(block)
            except (DependencyMissing, ValueError):
                return "?"

        return rank


def run_scenario(scenario: Scenario) -> Metrics:
    return Simulation(scenario).run()
