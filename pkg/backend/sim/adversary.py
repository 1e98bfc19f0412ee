"""
Byzantine replicas.

Each Byzantine replica runs the honest state machine with some hooks
overridden. Members of one coalition know each other and may pass
signatures privately.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, List, Optional, Sequence, Tuple

from backend.consensus.chain import Block, NotarizedBlock
from backend.consensus.messages import (
    Broadcast,
    Effect,
    MessageKind,
    ProtocolMessage,
    SendTo,
    notarized_block_msg,
    signature_msg,
)
from backend.consensus.replica import Replica
from backend.consensus.threshold import SignatureShare
from backend.sim.scenario import AdversaryBehavior
from backend.utils.helpers import get_logger

logger = get_logger("adversary")

# Behaviours that refuse to sign anything that helps honest progress, including registrations.
SIGNATURE_DENIERS = ("withhold-signatures", "withhold-notarization")


@dataclass
class Coalition:
    members: Tuple[Hashable, ...] = ()

    def __contains__(self, label: object) -> bool:
        return label in self.members


def adversary_step(
    behavior: AdversaryBehavior,
    replica: "ByzantineReplica",
    r: int,
    head: NotarizedBlock,
    now: Fraction,
) -> List[Block]:
    """Proposals a Byzantine replica emits for round r."""
    kind = behavior.kind
    if kind == "equivocate":
        block = replica.build_block(r, head, note="equivocation-a")
        twin = replica.build_block(r, head, note="equivocation-b")
        ranked_first = replica.rank_of(block) == 0
        if ranked_first or behavior.param("always", False):
            logger.debug(f"[{replica.id}] equivocating in round {r}")
            return [block, twin]
        return [block]
    if kind == "selfish-chain":
        own = [nb for nb in replica.pool.notarized_heads(r - 1) if nb.block.owner in replica.coalition]
        if own:
            best = min(own, key=lambda nb: (-replica.pool.weight(nb.digest, replica.rank_of), bytes(nb.digest)))
            return [replica.build_block(r, best, note="selfish")]
    return [replica.build_block(r, head)]


class ByzantineReplica(Replica):
    def __init__(self, *args, behavior: AdversaryBehavior, coalition: Coalition, **kwargs):
        super().__init__(*args, **kwargs)
        self.behavior = behavior
        self.coalition = coalition

    @property
    def kind(self) -> str:
        return self.behavior.kind

    def is_alive(self, now: Fraction) -> bool:
        if self.kind == "crash":
            return now < Fraction(str(self.behavior.param("at", 0)))
        return True

    def emit_beacon_share(self, r: int, now: Fraction) -> bool:
        return self.kind != "beacon-abstain"

    def make_proposals(self, r: int, head: NotarizedBlock, now: Fraction) -> List[Block]:
        return adversary_step(self.behavior, self, r, head, now)

    def select_for_signing(self, r: int, candidates: Sequence[Block]) -> List[Block]:
        if self.kind == "selfish-chain":
            candidates = [b for b in candidates if b.owner in self.coalition]
            if not candidates:
                return []
        return super().select_for_signing(r, candidates)

    def publish_signature(self, r: int, block: Block, share: SignatureShare, now: Fraction) -> None:
        if self.kind == "withhold-signatures":
            return
        if self.kind == "withhold-notarization":
            for peer in self.coalition.members:
                if peer != self.id:
                    self._emit(SendTo(peer, signature_msg(self.id, r, block.digest, share)))
            self.on_signature(block, share, now, relay=False)
            return
        super().publish_signature(r, block, share, now)

    def publish_notarized(self, nb: NotarizedBlock, now: Fraction, constructed: bool) -> List[Effect]:
        if self.kind == "withhold-notarization" and constructed:
            delay = Fraction(str(self.behavior.param("delay", 0)))
            return [Broadcast(notarized_block_msg(self.id, nb), delay=delay)]
        return super().publish_notarized(nb, now, constructed)

    def relay_filter(self, msg: ProtocolMessage) -> bool:
        if self.kind == "withhold-notarization" and msg.kind is MessageKind.BLOCK_SIGNATURE:
            return False
        return super().relay_filter(msg)


def signs_registrations(behavior: Optional[AdversaryBehavior]) -> bool:
    return behavior is None or behavior.kind not in SIGNATURE_DENIERS
