"""
Per-replica protocol state machine.

Every handler runs in zero simulated time and returns the effects
(broadcasts, direct sends, timers, traces) for the simulator to execute.
Artifacts whose dependencies are not yet available are parked in a pending
queue keyed by the missing dependency and replayed when it arrives.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from typing import Callable, Dict, Hashable, List, Optional, Sequence, Set, Tuple

from backend.consensus.chain import (
    GENESIS_NOTARIZATION,
    GENESIS_SEED,
    Block,
    BlockPool,
    NotarizedBlock,
    heaviest_head,
    notary_message,
    ranking,
    validate_block,
)
from backend.consensus.committee import Group, committee_select
from backend.consensus.finalizer import FINALIZE_TAG, FinalizationMode, Observer
from backend.consensus.messages import (
    Broadcast,
    Effect,
    MessageKind,
    ProtocolMessage,
    SendTo,
    SetTimer,
    Trace,
    beacon_message,
    beacon_output_msg,
    beacon_share_msg,
    notarized_block_msg,
    proposal_msg,
    signature_msg,
    sync_request_msg,
)
from backend.consensus.primitives import Digest, Seed
from backend.consensus.registry import (
    BlockPayload,
    GenesisRegistry,
    RegistryConfig,
    RegistryEntry,
    active_set,
    build_key_frame,
    epoch_of,
    epoch_start,
    validate_registry_payload,
)
from backend.consensus.threshold import (
    GroupSignature,
    SecretKeyShare,
    SignatureShare,
    derive_randomness,
    recover,
    sign_share,
    verify_group,
    verify_share,
)
from backend.errors import DependencyMissing
from backend.utils.helpers import get_logger

logger = get_logger("replica")

BLOCK_TIME_TAG = "block-time"

# Kinds whose sender is asked for a missing dependency instead of waiting for gossip.
_SYNC_KINDS = (MessageKind.NOTARIZED_BLOCK, MessageKind.NOTARIZATION, MessageKind.BEACON_OUTPUT)

Task = Callable[[Fraction], None]


@dataclass(frozen=True)
class ProtocolConfig:
    block_time: Fraction
    n: int
    t: int
    m: int
    beta: Fraction = Fraction(3)
    epoch_length: int = 20
    payload_predicate: str = "always"
    m_max: int = 4
    group_lifetime: int = 4
    finalization_t: Fraction = Fraction(2)
    finalization_mode: FinalizationMode = FinalizationMode.TIMER

    def __post_init__(self) -> None:
        if Fraction(self.block_time) <= 0:
            raise ValueError("block_time must be > 0")
        if not 1 <= self.t <= self.n:
            raise ValueError(f"threshold must satisfy 1 <= t <= n, got t={self.t}, n={self.n}")
        if self.m < 1:
            raise ValueError("at least one group is required")
        if self.payload_predicate not in ("always", "registry"):
            raise ValueError(f"unknown payload predicate {self.payload_predicate!r}")


@dataclass
class ReplicaState:
    id: Hashable
    config: ProtocolConfig
    round: int = 0
    entered_at: Fraction = Fraction(0)
    pool: BlockPool = field(default_factory=BlockPool)
    signed: Set[Digest] = field(default_factory=set)
    beacon_shares: Dict[int, Dict[int, SignatureShare]] = field(default_factory=dict)
    beacon: Dict[int, Seed] = field(default_factory=lambda: {0: GENESIS_SEED})
    beacon_signatures: Dict[int, GroupSignature] = field(default_factory=dict)
    block_signatures: Dict[Digest, Dict[int, SignatureShare]] = field(default_factory=dict)
    proposed: Set[int] = field(default_factory=set)
    signing_round: int = 0
    entry_times: Dict[int, Fraction] = field(default_factory=dict)
    invalid: Dict[str, int] = field(default_factory=dict)


class Replica:
    """Honest replica. Byzantine behaviours subclass it and override the hooks at the bottom."""

    def __init__(
        self,
        label: Hashable,
        config: ProtocolConfig,
        genesis: GenesisRegistry,
        keys: Optional[Dict[Tuple[int, int], SecretKeyShare]] = None,
        registry: Optional[RegistryConfig] = None,
    ):
        self.id = label
        self.config = config
        self.genesis = genesis
        self.keys: Dict[Tuple[int, int], SecretKeyShare] = dict(keys or {})
        self.registry = registry if config.payload_predicate == "registry" else None
        self.state = ReplicaState(id=label, config=config)
        self.observer = Observer(
            name=str(label),
            mode=config.finalization_mode,
            T=config.finalization_t,
            pool=self.state.pool,
        )
        self.mempool: List[RegistryEntry] = []

        self._seen: Set[Tuple] = set()
        self._pending: Dict[Tuple, List[Task]] = {}
        self._requested: Set[Tuple] = set()
        self._verified_notas: Dict[Tuple[bytes, int], bool] = {}
        self._active_cache: Dict[int, Tuple[Tuple[Hashable, ...], Tuple[Group, ...]]] = {}
        self._effects: List[Effect] = []

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.id!r}, round={self.state.round})"

    @property
    def round(self) -> int:
        return self.state.round

    @property
    def pool(self) -> BlockPool:
        return self.state.pool

    # -----------------------------
    # Public driver interface
    # -----------------------------
    def start(self, now: Fraction) -> List[Effect]:
        self._effects = []
        if not self.is_alive(now):
            return []
        self._enter_round(1, now)
        return self._flush()

    def receive(self, msg: ProtocolMessage, now: Fraction) -> List[Effect]:
        self._effects = []
        if not self.is_alive(now):
            return []
        aid = msg.artifact_id
        if aid is not None:
            if aid in self._seen:
                return []
            self._seen.add(aid)
        self._dispatch(msg, now)
        return self._flush()

    def on_timer(self, tag: str, r: int, now: Fraction) -> List[Effect]:
        self._effects = []
        if not self.is_alive(now):
            return []
        if tag == BLOCK_TIME_TAG:
            if r == self.state.round:
                self.state.signing_round = r
                self._guard(self.notarization_step, now)
        elif tag == FINALIZE_TAG:
            before = len(self.observer.finalized)
            self.observer.finalize(r, now)
            if len(self.observer.finalized) != before:
                self._emit(Trace("finalized", r, self.observer.finalized[-1].digest, len(self.observer.finalized)))
            self._release_final(now)
        else:
            logger.warning(f"[{self.id}] unknown timer tag {tag!r}")
        return self._flush()

    def on_heal(self, now: Fraction) -> List[Effect]:
        """Re-announce the artifacts a reconnected peer needs to rejoin the current round."""
        self._effects = []
        if not self.is_alive(now):
            return []
        self._requested.clear()
        st = self.state
        for r in (st.round - 1, st.round):
            if r in st.beacon_signatures:
                self._emit(Broadcast(beacon_output_msg(self.id, r, st.beacon_signatures[r])))
        for nb in st.pool.notarized_heads(st.round - 1):
            if not nb.block.is_genesis:
                self._emit(Broadcast(notarized_block_msg(self.id, nb)))
        for share in st.beacon_shares.get(st.round, {}).values():
            self._emit(Broadcast(beacon_share_msg(self.id, st.round, share)))
        for block in st.pool.proposals(st.round):
            self._emit(Broadcast(proposal_msg(self.id, block)))
            for share in st.block_signatures.get(block.digest, {}).values():
                self._emit(Broadcast(signature_msg(self.id, st.round, block.digest, share)))
        return self._flush()

    def submit(self, entry: RegistryEntry) -> None:
        if all(e.entry_id != entry.entry_id for e in self.mempool):
            self.mempool.append(entry)

    def install_key(self, group_key: Tuple[int, int], share: SecretKeyShare) -> None:
        self.keys[group_key] = share

    # -----------------------------
    # Effects and pending queue
    # -----------------------------
    def _emit(self, effect: Effect) -> None:
        self._effects.append(effect)

    def _flush(self) -> List[Effect]:
        out, self._effects = self._effects, []
        return out

    def _guard(self, task: Task, now: Fraction, sender: Optional[Hashable] = None, sync: bool = False) -> None:
        try:
            task(now)
        except DependencyMissing as e:
            self._pending.setdefault(e.key, []).append(task)
            if sync and sender is not None and sender != self.id:
                self._request(e.key, sender)

    def _request(self, key: Tuple, peer: Hashable) -> None:
        if key[0] not in ("block", "beacon") or (key, peer) in self._requested:
            return
        self._requested.add((key, peer))
        self._emit(SendTo(peer, sync_request_msg(self.id, key)))

    def _release(self, key: Tuple, now: Fraction) -> None:
        for task in self._pending.pop(key, []):
            self._guard(task, now)

    def _release_final(self, now: Fraction) -> None:
        height = self.observer.height
        for key in sorted(k for k in self._pending if k[0] == "final" and k[1] <= height):
            self._release(key, now)

    def _dispatch(self, msg: ProtocolMessage, now: Fraction) -> None:
        handler = {
            MessageKind.BEACON_SHARE: self._handle_share,
            MessageKind.BLOCK_PROPOSAL: self._handle_proposal,
            MessageKind.BLOCK_SIGNATURE: self._handle_signature,
            MessageKind.NOTARIZATION: self._handle_notarization,
            MessageKind.NOTARIZED_BLOCK: self._handle_notarized_block,
            MessageKind.BEACON_OUTPUT: self._handle_beacon_output,
            MessageKind.SYNC_REQUEST: self._handle_sync_request,
        }[msg.kind]
        self._guard(partial(handler, msg), now, sender=msg.sender, sync=msg.kind in _SYNC_KINDS)

    def _invalid(self, kind: str, r: int) -> None:
        self.state.invalid[kind] = self.state.invalid.get(kind, 0) + 1
        self._emit(Trace("invalid", r, data=kind))

    # -----------------------------
    # Directory: active replicas, groups, committees, ranks
    # -----------------------------
    def _active(self, r: int) -> Tuple[Tuple[Hashable, ...], Tuple[Group, ...]]:
        if self.registry is None:
            return self.genesis.replicas, self.genesis.groups
        e = epoch_of(r, self.registry.epoch_length)
        if e not in self._active_cache:
            snapshot = active_set(self.observer.finalized, r, self.genesis, self.registry)
            self._active_cache[e] = (snapshot.replicas, snapshot.groups)
        return self._active_cache[e]

    def universe_at(self, r: int) -> Tuple[Hashable, ...]:
        return self._active(r)[0]

    def committee_for(self, r: int) -> Group:
        """Group signing the round-r beacon and notarizing round-r blocks, chosen by xi_{r-1}."""
        if r - 1 not in self.state.beacon:
            raise DependencyMissing(("beacon", r - 1))
        groups = self._active(r)[1]
        return groups[committee_select(self.state.beacon[r - 1], len(groups))]

    def rank_of(self, block: Block) -> int:
        if block.round not in self.state.beacon:
            raise DependencyMissing(("beacon", block.round))
        return ranking(self.universe_at(block.round), self.state.beacon[block.round]).rank_of(block.owner)

    def verify_notarization(self, r: int, message: bytes, sigma: GroupSignature) -> bool:
        if r == 0:
            return sigma == GENESIS_NOTARIZATION
        cache_key = (message, sigma.value)
        if cache_key not in self._verified_notas:
            V = self.committee_for(r).verification
            self._verified_notas[cache_key] = verify_group(message, V.public_key, V, sigma)
        return self._verified_notas[cache_key]

    def _payload_valid(self, block: Block) -> bool:
        if block.owner not in self.universe_at(block.round):
            return False
        if self.registry is None:
            return True
        start = epoch_start(epoch_of(block.round, self.registry.epoch_length), self.registry.epoch_length)
        if start not in self.state.beacon:
            raise DependencyMissing(("beacon", start))
        return validate_registry_payload(
            block,
            self.pool.chain_of(block.prev).blocks,
            self.registry,
            self.state.beacon[start],
            self.universe_at(start),
        )

    def _validate(self, block: Block) -> bool:
        if block.round not in self.state.beacon:
            raise DependencyMissing(("beacon", block.round))
        return validate_block(block, self.pool, self.verify_notarization, self._payload_valid)

    # -----------------------------
    # Rounds and the beacon
    # -----------------------------
    def _enter_round(self, r: int, now: Fraction) -> None:
        st = self.state
        if r <= st.round:
            return
        st.round = r
        st.entered_at = now
        st.entry_times[r] = now
        self._emit(Trace("enter", r, data=len(self.observer.finalized)))
        self._emit(SetTimer(at=now + Fraction(self.config.block_time), tag=BLOCK_TIME_TAG, round=r))
        self._guard(partial(self.on_enter_round, r), now)
        for share in st.beacon_shares.get(r, {}).values():
            self._emit(Broadcast(beacon_share_msg(self.id, r, share)))
        for key in sorted(k for k in self._pending if k[0] == "round" and k[1] <= r):
            self._release(key, now)
        if r in st.beacon:
            self._guard(partial(self.on_beacon_output, r), now)

    def on_enter_round(self, r: int, now: Fraction) -> None:
        """Emit this replica's beacon share when it sits in the round-r committee."""
        st = self.state
        group = self.committee_for(r)
        index = group.index_of(self.id)
        key = self.keys.get(group.key)
        if index is None or key is None or r in st.beacon:
            return
        share = sign_share(beacon_message(r, st.beacon[r - 1]), key, group.verification)
        if not self.emit_beacon_share(r, now):
            return
        self._emit(Broadcast(beacon_share_msg(self.id, r, share)))
        self._accept_share(r, group, share, now, relay=False)

    def _handle_share(self, msg: ProtocolMessage, now: Fraction) -> None:
        r = msg.body.round
        if r < 1 or r in self.state.beacon:
            return
        group = self.committee_for(r)
        share = msg.body.share
        if not verify_share(beacon_message(r, self.state.beacon[r - 1]), group.verification, share.index, share):
            self._invalid("beacon-share", r)
            return
        self._accept_share(r, group, share, now, relay=r == self.state.round)

    def _accept_share(self, r: int, group: Group, share: SignatureShare, now: Fraction, relay: bool) -> None:
        shares = self.state.beacon_shares.setdefault(r, {})
        if share.index in shares:
            return
        shares[share.index] = share
        if relay:
            self._emit(Broadcast(beacon_share_msg(self.id, r, share)))
        params = group.verification.params
        if len(shares) >= params.t:
            self._set_beacon(r, recover(shares.values(), params), now)

    def _handle_beacon_output(self, msg: ProtocolMessage, now: Fraction) -> None:
        r, sigma = msg.body.round, msg.body.signature
        if r < 1 or r in self.state.beacon:
            return
        V = self.committee_for(r).verification
        if not verify_group(beacon_message(r, self.state.beacon[r - 1]), V.public_key, V, sigma):
            self._invalid("beacon-output", r)
            return
        self._set_beacon(r, sigma, now)

    def _set_beacon(self, r: int, sigma: GroupSignature, now: Fraction) -> None:
        st = self.state
        if r in st.beacon:
            return
        st.beacon[r] = derive_randomness(sigma, self.committee_for(r).verification.params)
        st.beacon_signatures[r] = sigma
        self._emit(Trace("beacon", r, data=st.beacon[r].hex()))
        self._release(("beacon", r), now)
        if r == st.round:
            self._guard(partial(self.on_beacon_output, r), now)

    # -----------------------------
    # Proposing
    # -----------------------------
    def on_beacon_output(self, r: int, now: Fraction) -> None:
        st = self.state
        if r != st.round or r in st.proposed or self.id not in self.universe_at(r):
            return
        head = heaviest_head(st.pool, r, self.rank_of)
        st.proposed.add(r)
        for block in self.make_proposals(r, head, now):
            self._emit(Trace("propose", r, block.digest, data=self.rank_of(block)))
            self._emit(Broadcast(proposal_msg(self.id, block)))
            self._store_block(block, now)
        if st.signing_round == r:
            self.notarization_step(now)

    def build_block(self, r: int, head: NotarizedBlock, note: str = "") -> Block:
        nota = GENESIS_NOTARIZATION if head.block.is_genesis else head.notarization
        return Block(prev=head.digest, round=r, nota=nota, payload=self._payload_for(r, head, note), owner=self.id)

    def _payload_for(self, r: int, head: NotarizedBlock, note: str) -> bytes:
        if self.registry is None:
            return BlockPayload(note=note).encode()
        l = self.registry.epoch_length
        e = epoch_of(r, l)
        chain = self.pool.chain_of(head.digest).blocks
        included = {
            entry.entry_id
            for b in chain
            if not b.is_genesis and epoch_of(b.round, l) == e
            for entry in BlockPayload.decode(b.payload).entries
        }
        entries = tuple(x for x in self.mempool if x.epoch_submitted == e and x.entry_id not in included)
        frame = build_key_frame(chain, e, l) if r % l == 0 else None
        return BlockPayload(entries=entries, key_frame=frame, note=note).encode()

    def _store_block(self, block: Block, now: Fraction) -> None:
        if self.pool.add_block(block):
            self._release(("block", bytes(block.digest)), now)

    # -----------------------------
    # Receiving blocks
    # -----------------------------
    def _absorb_reference(self, block: Block, now: Fraction) -> None:
        """Treat the nota carried by `block` as a notarization of its predecessor."""
        prev = self.pool.get(block.prev)
        if self.pool.is_notarized(prev.digest):
            return
        if not self.verify_notarization(prev.round, notary_message(prev.digest), block.nota):
            return
        self._accept_notarization(prev, block.nota, now)

    def _handle_proposal(self, msg: ProtocolMessage, now: Fraction) -> None:
        block: Block = msg.body
        st = self.state
        if block.digest in st.pool or block.round < st.round:
            return
        self._absorb_reference(block, now)
        if block.round > st.round:
            raise DependencyMissing(("round", block.round))
        if block.round < st.round:
            return
        if not self._validate(block):
            self._invalid("proposal", block.round)
            return
        self._store_block(block, now)
        if self.relay_filter(msg):
            self._emit(Broadcast(proposal_msg(self.id, block)))
            prev = st.pool.notarized.get(block.prev)
            if prev is not None and not prev.block.is_genesis:
                self._emit(Broadcast(notarized_block_msg(self.id, prev)))
        if st.signing_round == st.round:
            self.notarization_step(now)

    def _handle_notarized_block(self, msg: ProtocolMessage, now: Fraction) -> None:
        nb: NotarizedBlock = msg.body
        block = nb.block
        if self.pool.is_notarized(block.digest):
            return
        if block.digest not in self.pool:
            self._absorb_reference(block, now)
            if not self._validate(block):
                self._invalid("notarized-block", block.round)
                return
            self._store_block(block, now)
        if not self.verify_notarization(block.round, notary_message(block.digest), nb.notarization):
            self._invalid("notarization", block.round)
            return
        self._accept_notarization(block, nb.notarization, now)

    # -----------------------------
    # Signing and notarizing
    # -----------------------------
    def notarization_step(self, now: Fraction) -> None:
        """Sign every valid current-round proposal of minimal rank not yet signed."""
        st = self.state
        r = st.round
        if st.signing_round != r:
            return
        group = self.committee_for(r)
        key = self.keys.get(group.key)
        if group.index_of(self.id) is None or key is None:
            return
        candidates = st.pool.proposals(r)
        if not candidates:
            return
        for block in self.select_for_signing(r, candidates):
            if block.digest in st.signed:
                continue
            st.signed.add(block.digest)
            share = sign_share(notary_message(block.digest), key, group.verification)
            self._emit(Trace("sign", r, block.digest))
            self.publish_signature(r, block, share, now)
            if st.round != r:
                break

    def _handle_signature(self, msg: ProtocolMessage, now: Fraction) -> None:
        body = msg.body
        r, d = body.round, body.block_digest
        if r < self.state.round or self.pool.is_notarized(d):
            return
        if r > self.state.round:
            raise DependencyMissing(("round", r))
        block = self.pool.get(d)
        if block.round != r:
            self._invalid("signature", r)
            return
        self.on_signature(block, body.share, now, relay=self.relay_filter(msg))

    def on_signature(self, block: Block, share: SignatureShare, now: Fraction, relay: bool = True) -> None:
        r, d = block.round, block.digest
        group = self.committee_for(r)
        if not verify_share(notary_message(d), group.verification, share.index, share):
            self._invalid("signature", r)
            return
        sigs = self.state.block_signatures.setdefault(d, {})
        if share.index in sigs:
            return
        sigs[share.index] = share
        if relay:
            self._emit(Broadcast(signature_msg(self.id, r, d, share)))
        params = group.verification.params
        if len(sigs) >= params.t and not self.pool.is_notarized(d):
            z = recover(sigs.values(), params)
            self._emit(Trace("notarize-constructed", r, d))
            self._accept_notarization(block, z, now, constructed=True)

    def _handle_notarization(self, msg: ProtocolMessage, now: Fraction) -> None:
        body = msg.body
        d = body.block_digest
        if self.pool.is_notarized(d):
            return
        block = self.pool.get(d)
        if block.round != body.round or not self.verify_notarization(
            block.round, notary_message(d), body.notarization
        ):
            self._invalid("notarization", body.round)
            return
        self.on_notarization(block, body.notarization, now)

    def on_notarization(self, block: Block, z: GroupSignature, now: Fraction) -> None:
        self._accept_notarization(block, z, now)

    def _accept_notarization(self, block: Block, z: GroupSignature, now: Fraction, constructed: bool = False) -> None:
        pool = self.pool
        if pool.is_notarized(block.digest):
            return
        prev = pool.get(block.prev)
        if not pool.is_notarized(prev.digest):
            self._accept_notarization(prev, block.nota, now)
        nb = NotarizedBlock(block, z)
        pool.add_notarized(nb)
        self._emit(Trace("notarized", block.round, block.digest, data=block.owner))
        for timer in self.observer.ingest(nb, now):
            self._emit(timer)
        for effect in self.publish_notarized(nb, now, constructed):
            self._emit(effect)
        if block.round >= self.state.round:
            self._enter_round(block.round + 1, now)

    # -----------------------------
    # Relay and sync
    # -----------------------------
    def relay_filter(self, msg: ProtocolMessage) -> bool:
        if msg.kind in (MessageKind.NOTARIZATION, MessageKind.NOTARIZED_BLOCK):
            return True
        if msg.kind in (MessageKind.BLOCK_PROPOSAL, MessageKind.BLOCK_SIGNATURE, MessageKind.BEACON_SHARE):
            return msg.round == self.state.round
        return False

    def _handle_sync_request(self, msg: ProtocolMessage, now: Fraction) -> None:
        kind, value = msg.body.key
        st = self.state
        if kind == "block":
            d = Digest(value)
            if st.pool.is_notarized(d):
                self._emit(SendTo(msg.sender, notarized_block_msg(self.id, st.pool.notarized[d])))
            elif d in st.pool:
                self._emit(SendTo(msg.sender, proposal_msg(self.id, st.pool.get(d))))
        elif kind == "beacon" and value in st.beacon_signatures:
            self._emit(SendTo(msg.sender, beacon_output_msg(self.id, value, st.beacon_signatures[value])))

    # -----------------------------
    # Behaviour hooks
    # -----------------------------
    def is_alive(self, now: Fraction) -> bool:
        return True

    def emit_beacon_share(self, r: int, now: Fraction) -> bool:
        return True

    def make_proposals(self, r: int, head: NotarizedBlock, now: Fraction) -> List[Block]:
        return [self.build_block(r, head)]

    def select_for_signing(self, r: int, candidates: Sequence[Block]) -> List[Block]:
        ranks = [(self.rank_of(b), b) for b in candidates]
        best = min(rank for rank, _ in ranks)
        return [b for rank, b in ranks if rank == best]

    def publish_signature(self, r: int, block: Block, share: SignatureShare, now: Fraction) -> None:
        self._emit(Broadcast(signature_msg(self.id, r, block.digest, share)))
        self.on_signature(block, share, now, relay=False)

    def publish_notarized(self, nb: NotarizedBlock, now: Fraction, constructed: bool) -> List[Effect]:
        return [Broadcast(notarized_block_msg(self.id, nb))]
