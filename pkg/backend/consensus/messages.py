"""Protocol messages exchanged between replicas and the effects handlers return."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Any, Hashable, Optional, Tuple, Union

from backend.consensus.chain import Block, NotarizedBlock
from backend.consensus.primitives import Digest
from backend.consensus.threshold import GroupSignature, SignatureShare


def beacon_message(r: int, prev_seed: bytes) -> bytes:
    """Message signed by the round-r beacon committee: r (8 octets) || xi_{r-1}."""
    return b"BEACON" + r.to_bytes(8, "big") + bytes(prev_seed)


class MessageKind(str, Enum):
    BEACON_SHARE = "beacon-share"
    BLOCK_PROPOSAL = "block-proposal"
    BLOCK_SIGNATURE = "block-signature"
    NOTARIZATION = "notarization"
    NOTARIZED_BLOCK = "notarized-block"
    # artifact synchronisation
    BEACON_OUTPUT = "beacon-output"
    SYNC_REQUEST = "sync-request"


@dataclass(frozen=True)
class BeaconShareBody:
    round: int
    share: SignatureShare


@dataclass(frozen=True)
class BlockSignatureBody:
    round: int
    block_digest: Digest
    share: SignatureShare


@dataclass(frozen=True)
class NotarizationBody:
    round: int
    block_digest: Digest
    notarization: GroupSignature


@dataclass(frozen=True)
class BeaconOutputBody:
    round: int
    signature: GroupSignature


@dataclass(frozen=True)
class SyncRequestBody:
    key: Tuple[str, Any]


Body = Union[
    BeaconShareBody, Block, BlockSignatureBody, NotarizationBody, NotarizedBlock, BeaconOutputBody, SyncRequestBody
]


@dataclass(frozen=True)
class ProtocolMessage:
    kind: MessageKind
    body: Body
    sender: Hashable

    @property
    def round(self) -> int:
        body = self.body
        if isinstance(body, SyncRequestBody):
            return -1
        return body.round

    @property
    def artifact_id(self) -> Optional[Tuple[Any, ...]]:
        """Identity used for duplicate suppression; None for messages never deduplicated."""
        body = self.body
        kind = self.kind
        if kind is MessageKind.BEACON_SHARE:
            return ("share", body.round, body.share.index)
        if kind is MessageKind.BLOCK_PROPOSAL:
            return ("block", bytes(body.digest))
        if kind is MessageKind.BLOCK_SIGNATURE:
            return ("sig", bytes(body.block_digest), body.share.index)
        if kind is MessageKind.NOTARIZATION:
            return ("nota", bytes(body.block_digest))
        if kind is MessageKind.NOTARIZED_BLOCK:
            return ("nblock", bytes(body.digest))
        if kind is MessageKind.BEACON_OUTPUT:
            return ("beacon", body.round)
        return None


def beacon_share_msg(sender: Hashable, r: int, share: SignatureShare) -> ProtocolMessage:
    return ProtocolMessage(MessageKind.BEACON_SHARE, BeaconShareBody(r, share), sender)


def proposal_msg(sender: Hashable, block: Block) -> ProtocolMessage:
    return ProtocolMessage(MessageKind.BLOCK_PROPOSAL, block, sender)


def signature_msg(sender: Hashable, r: int, digest: Digest, share: SignatureShare) -> ProtocolMessage:
    return ProtocolMessage(MessageKind.BLOCK_SIGNATURE, BlockSignatureBody(r, digest, share), sender)


def notarization_msg(sender: Hashable, r: int, digest: Digest, z: GroupSignature) -> ProtocolMessage:
    return ProtocolMessage(MessageKind.NOTARIZATION, NotarizationBody(r, digest, z), sender)


def notarized_block_msg(sender: Hashable, nb: NotarizedBlock) -> ProtocolMessage:
    return ProtocolMessage(MessageKind.NOTARIZED_BLOCK, nb, sender)


def beacon_output_msg(sender: Hashable, r: int, sigma: GroupSignature) -> ProtocolMessage:
    return ProtocolMessage(MessageKind.BEACON_OUTPUT, BeaconOutputBody(r, sigma), sender)


def sync_request_msg(sender: Hashable, key: Tuple[str, Any]) -> ProtocolMessage:
    return ProtocolMessage(MessageKind.SYNC_REQUEST, SyncRequestBody(key), sender)


# =========================================================
# Effects returned by handlers; the simulator executes them
# =========================================================
@dataclass(frozen=True)
class Broadcast:
    message: ProtocolMessage
    delay: Fraction = Fraction(0)


@dataclass(frozen=True)
class SendTo:
    recipient: Hashable
    message: ProtocolMessage


@dataclass(frozen=True)
class SetTimer:
    at: Fraction
    tag: str
    round: int


@dataclass(frozen=True)
class Trace:
    """Instrumentation only; never read back by protocol code."""

    event: str
    round: int
    digest: Optional[Digest] = None
    data: Any = None


Effect = Union[Broadcast, SendTo, SetTimer, Trace]
