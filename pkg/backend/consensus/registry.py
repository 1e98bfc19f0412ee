"""
Epochs, registrations and key frames.

Rounds are cut into epochs of l rounds. Registrations (replica joins and
leaves, new groups) travel in block payloads and must be included in the
epoch they were submitted for. The first block of epoch e carries a key
frame summarising the registrations of epoch e-1; an entity registered in
epoch e becomes active in epoch e+2, and groups expire after a fixed
number of epochs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Hashable, Iterable, List, Optional, Sequence, Tuple

from backend.consensus.chain import Block
from backend.consensus.committee import Group, group_derive
from backend.consensus.primitives import Digest, hash_digest
from backend.consensus.threshold import (
    DKGResult,
    DLEQProof,
    SchemeParams,
    SignatureShare,
    VerificationVector,
    verify_share,
)
from backend.errors import RegistrationRejected, RegistryNotFinal
from backend.utils.helpers import dumps_canonical


class EntryKind(str, Enum):
    REPLICA_JOIN = "replica-join"
    REPLICA_LEAVE = "replica-leave"
    GROUP_JOIN = "group-join"


@dataclass(frozen=True)
class RegistryConfig:
    epoch_length: int
    m_max: int
    group_lifetime: int
    base: SchemeParams

    def __post_init__(self) -> None:
        if self.epoch_length < 1 or self.m_max < 1 or self.group_lifetime < 1:
            raise ValueError("epoch_length, m_max and group_lifetime must be >= 1")


@dataclass(frozen=True)
class GenesisRegistry:
    replicas: Tuple[Hashable, ...]
    groups: Tuple[Group, ...]


@dataclass(frozen=True)
class ActiveSet:
    replicas: Tuple[Hashable, ...]
    groups: Tuple[Group, ...]


def epoch_of(r: int, l: int) -> int:
    return r // l


def epoch_start(e: int, l: int) -> int:
    return e * l


def supermajority(n: int) -> int:
    """ceil(2n/3)."""
    return (2 * n + 2) // 3


# =========================================================
# Entries
# =========================================================
@dataclass(frozen=True)
class RegistryEntry:
    kind: EntryKind
    subject: Hashable
    epoch_submitted: int
    members: Tuple[Hashable, ...] = ()
    threshold: int = 0
    verification: Tuple[int, ...] = ()
    public_key: int = 0
    endorsement: str = "stub"
    signatures: Tuple[SignatureShare, ...] = field(default=(), compare=False)

    @property
    def entry_id(self) -> Tuple[str, str, int]:
        return (self.kind.value, str(self.subject), self.epoch_submitted)

    @property
    def activation_epoch(self) -> int:
        return self.epoch_submitted + 2

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "kind": self.kind.value,
            "subject": self.subject,
            "epoch": self.epoch_submitted,
            "endorsement": self.endorsement,
        }
        if self.kind is EntryKind.GROUP_JOIN:
            data["members"] = list(self.members)
            data["threshold"] = self.threshold
            data["verification"] = [format(v, "x") for v in self.verification]
            data["signatures"] = [
                {
                    "index": s.index,
                    "value": format(s.value, "x"),
                    "c": format(s.proof.challenge, "x"),
                    "s": format(s.proof.response, "x"),
                }
                for s in self.signatures
            ]
        elif self.kind is EntryKind.REPLICA_JOIN:
            data["public_key"] = format(self.public_key, "x")
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RegistryEntry":
        kind = EntryKind(data["kind"])
        sigs = tuple(
            SignatureShare(
                index=int(s["index"]),
                value=int(s["value"], 16),
                proof=DLEQProof(challenge=int(s["c"], 16), response=int(s["s"], 16)),
            )
            for s in data.get("signatures", [])
        )
        return cls(
            kind=kind,
            subject=data["subject"],
            epoch_submitted=int(data["epoch"]),
            members=tuple(data.get("members", ())),
            threshold=int(data.get("threshold", 0)),
            verification=tuple(int(v, 16) for v in data.get("verification", ())),
            public_key=int(data.get("public_key", "0"), 16),
            endorsement=data.get("endorsement", "stub"),
            signatures=sigs,
        )

    def as_group(self, base: SchemeParams) -> Group:
        params = base.with_threshold(self.threshold, len(self.members))
        return Group(
            id=int(self.subject),
            members=self.members,
            threshold=self.threshold,
            verification=VerificationVector(params, self.verification),
            epoch=self.epoch_submitted,
        )


def registration_message(e: int, j: int, pk: int, params: SchemeParams) -> bytes:
    """Canonical bytes of the registration tuple x = (e, j, pk_G)."""
    return b"REGISTER" + e.to_bytes(8, "big") + j.to_bytes(8, "big") + params.encode_element(pk)


def endorsement_valid(entry: RegistryEntry) -> bool:
    """Sybil-resistance endorsements are opaque stubs in this system."""
    return True


def _quorum(entry: RegistryEntry, base: SchemeParams) -> int:
    group = entry.as_group(base)
    V = group.verification
    x = registration_message(entry.epoch_submitted, group.id, V.elements[0], base)
    seen = set()
    for s in entry.signatures:
        if s.index in seen or not 1 <= s.index <= group.size:
            continue
        if verify_share(x, V, s.index, s):
            seen.add(s.index)
    return len(seen)


def register_group(
    candidate: Group,
    epoch: int,
    dkg_result: Optional[DKGResult],
    signatures: Sequence[SignatureShare],
    config: RegistryConfig,
) -> RegistryEntry:
    """Build a group-join entry for a derived candidate, or reject it with a reason."""
    if candidate.id < 1 or candidate.id > config.m_max:
        raise RegistrationRejected(f"group index {candidate.id} outside 1..{config.m_max}")
    if dkg_result is None:
        raise RegistrationRejected("DKG failed")

    V = dkg_result.verification
    entry = RegistryEntry(
        kind=EntryKind.GROUP_JOIN,
        subject=candidate.id,
        epoch_submitted=epoch,
        members=candidate.members,
        threshold=V.params.t,
        verification=V.elements,
        signatures=tuple(sorted(signatures, key=lambda s: s.index)),
    )
    need = supermajority(candidate.size)
    got = _quorum(entry, config.base)
    if got < need:
        raise RegistrationRejected(f"signature quorum missed ({got} of {need})")
    return entry


def entry_valid(
    entry: RegistryEntry,
    config: RegistryConfig,
    epoch_seed: bytes,
    universe: Sequence[Hashable],
) -> bool:
    """
    `epoch_seed` is the beacon output of the first round of the entry's epoch
    and `universe` the replica set active then; a group must list exactly
    the members derived from them.
    """
    if not endorsement_valid(entry):
        return False
    if entry.kind is EntryKind.GROUP_JOIN:
        if not entry.verification or not 1 <= int(entry.subject) <= config.m_max:
            return False
        try:
            derived = group_derive(epoch_seed, int(entry.subject), universe, config.base.n)
        except ValueError:
            return False
        if tuple(entry.members) != derived.members:
            return False
        try:
            return _quorum(entry, config.base) >= supermajority(len(entry.members))
        except ValueError:
            return False
    return True


def check_inclusion(entry: RegistryEntry, block_round: int, l: int) -> None:
    if epoch_of(block_round, l) != entry.epoch_submitted:
        raise RegistrationRejected(
            f"inclusion deadline passed: submitted for epoch {entry.epoch_submitted}, "
            f"block in epoch {epoch_of(block_round, l)}"
        )


# =========================================================
# Key frames and payloads
# =========================================================
@dataclass(frozen=True)
class KeyFrame:
    epoch: int
    entries: Tuple[RegistryEntry, ...]

    @property
    def digest(self) -> Digest:
        body = {"epoch": self.epoch, "entries": [e.to_dict() for e in self.entries]}
        return hash_digest(dumps_canonical(body).encode())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epoch": self.epoch,
            "entries": [e.to_dict() for e in self.entries],
            "digest": self.digest.hex(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "KeyFrame":
        return cls(epoch=int(data["epoch"]), entries=tuple(RegistryEntry.from_dict(e) for e in data["entries"]))

    def describe(self) -> str:
        lines = [f"key frame epoch={self.epoch} digest={self.digest.hex()}"]
        for e in self.entries:
            lines.append(f"  {e.kind.value} subject={e.subject} epoch={e.epoch_submitted}")
        return "\n".join(lines)


@dataclass(frozen=True)
class BlockPayload:
    entries: Tuple[RegistryEntry, ...] = ()
    key_frame: Optional[KeyFrame] = None
    note: str = ""

    def encode(self) -> bytes:
        if not self.entries and self.key_frame is None and not self.note:
            return b""
        data: Dict[str, Any] = {"entries": [e.to_dict() for e in self.entries]}
        if self.key_frame is not None:
            data["key_frame"] = self.key_frame.to_dict()
        if self.note:
            data["note"] = self.note
        return dumps_canonical(data).encode()

    @classmethod
    def decode(cls, raw: bytes) -> "BlockPayload":
        if not raw:
            return cls()
        try:
            data = json.loads(raw.decode())
            frame = data.get("key_frame")
            return cls(
                entries=tuple(RegistryEntry.from_dict(e) for e in data.get("entries", [])),
                key_frame=KeyFrame.from_dict(frame) if frame is not None else None,
                note=str(data.get("note", "")),
            )
        except (ValueError, KeyError, TypeError, AttributeError) as e:
            raise ValueError(f"malformed registry payload: {e}") from e


def _entries_of(blocks: Iterable[Block]) -> List[RegistryEntry]:
    out: List[RegistryEntry] = []
    seen = set()
    for block in blocks:
        if block.is_genesis or not block.payload:
            continue
        for entry in BlockPayload.decode(block.payload).entries:
            if entry.entry_id not in seen:
                seen.add(entry.entry_id)
                out.append(entry)
    return out


def build_key_frame(chain: Sequence[Block], e: int, l: int) -> KeyFrame:
    """Summary of every registration included in the blocks of epoch e-1, in chain order."""
    if e <= 0:
        return KeyFrame(epoch=e, entries=())
    lo, hi = epoch_start(e - 1, l), epoch_start(e, l)
    return KeyFrame(epoch=e, entries=tuple(_entries_of(b for b in chain if lo <= b.round < hi)))


def active_set(chain: Sequence[Block], r: int, genesis: GenesisRegistry, config: RegistryConfig) -> ActiveSet:
    """
    Replicas and groups active at round r, read from the key frames of
    `chain` (a finalized chain, index = round).
    """
    l = config.epoch_length
    E = epoch_of(r, l)
    if E <= 1:
        return ActiveSet(genesis.replicas, genesis.groups)

    needed = epoch_start(E - 1, l)
    height = len(chain) - 1
    if height < needed:
        raise RegistryNotFinal(needed, height)

    replicas = list(genesis.replicas)
    groups = list(genesis.groups)
    for e in range(1, E):
        frame = BlockPayload.decode(chain[epoch_start(e, l)].payload).key_frame
        if frame is None:
            continue
        for entry in frame.entries:
            if entry.activation_epoch > E:
                continue
            if entry.kind is EntryKind.REPLICA_JOIN and entry.subject not in replicas:
                replicas.append(entry.subject)
            elif entry.kind is EntryKind.REPLICA_LEAVE and entry.subject in replicas:
                replicas.remove(entry.subject)
            elif entry.kind is EntryKind.GROUP_JOIN and E < entry.activation_epoch + config.group_lifetime:
                groups.append(entry.as_group(config.base))
    return ActiveSet(tuple(replicas), tuple(groups))


def validate_registry_payload(
    block: Block,
    epoch_blocks: Sequence[Block],
    config: RegistryConfig,
    epoch_seed: bytes,
    universe: Sequence[Hashable],
) -> bool:
    """
    Payload predicate for registry-carrying chains. `epoch_blocks` are the
    ancestors of `block` from the start of the previous epoch onwards;
    `epoch_seed` and `universe` belong to the first round of the block's epoch.
    """
    try:
        payload = BlockPayload.decode(block.payload)
    except ValueError:
        return False

    l = config.epoch_length
    e = epoch_of(block.round, l)
    already = {x.entry_id for x in _entries_of(b for b in epoch_blocks if epoch_of(b.round, l) == e)}
    for entry in payload.entries:
        if entry.epoch_submitted != e or entry.entry_id in already:
            return False
        if not entry_valid(entry, config, epoch_seed, universe):
            return False
        already.add(entry.entry_id)

    if block.round % l == 0:
        if payload.key_frame is None:
            return False
        return payload.key_frame.digest == build_key_frame(epoch_blocks, e, l).digest
    return payload.key_frame is None
