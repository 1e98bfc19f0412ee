"""
Observer-side finalization.

An observer only needs notarized blocks. It keeps one bucket per round;
when bucket r first becomes non-empty it either schedules finalize(r-1)
T time units later (timer mode) or finalizes r-2 immediately (two-round
mode). finalize(h) sets the finalized chain to the common prefix of all
notarized round-h blocks seen so far.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Set

from backend.consensus.chain import GENESIS, GENESIS_NOTARIZED, Block, BlockPool, Chain, NotarizedBlock
from backend.consensus.messages import SetTimer
from backend.consensus.primitives import Digest
from backend.utils.helpers import get_logger

logger = get_logger("finalizer")

FINALIZE_TAG = "finalize"


class FinalizationMode(str, Enum):
    TIMER = "timer"
    TWO_ROUND = "two-round"


@dataclass(frozen=True)
class AppendOnlyViolation:
    h: int
    time: Fraction
    previous_head: Digest
    previous_height: int
    new_head: Digest
    new_height: int


@dataclass(frozen=True)
class FinalizationEvent:
    round: int
    digest: Digest
    owner: object
    time: Fraction


class Observer:
    """
    ObserverState plus ingest/finalize. When `pool` is shared with a
    replica, the replica stores blocks and the observer only indexes them.
    """

    def __init__(
        self,
        name: str,
        mode: FinalizationMode = FinalizationMode.TIMER,
        T: Fraction = Fraction(2),
        pool: Optional[BlockPool] = None,
        verify: Optional[Callable[[NotarizedBlock], bool]] = None,
    ):
        self.name = name
        self.mode = FinalizationMode(mode)
        self.T = Fraction(T)
        self._shared_pool = pool is not None
        self.pool = pool if pool is not None else BlockPool()
        self.verify = verify

        self.buckets: Dict[int, Dict[Digest, NotarizedBlock]] = {0: {GENESIS.digest: GENESIS_NOTARIZED}}
        self.current = 1
        self.finalized: List[Block] = [GENESIS]
        self.bucket_first_fill: Dict[int, Fraction] = {0: Fraction(0)}
        self.finalized_at: Dict[Digest, Fraction] = {GENESIS.digest: Fraction(0)}
        self.events: List[FinalizationEvent] = []
        self.violations: List[AppendOnlyViolation] = []
        self.rejected = 0

        self._known: Set[Digest] = {GENESIS.digest}
        self._waiting: Dict[Digest, List[NotarizedBlock]] = {}
        self._waiting_ids: Set[Digest] = set()

    @property
    def chain(self) -> Chain:
        return Chain(tuple(self.finalized))

    @property
    def height(self) -> int:
        return self.finalized[-1].round

    def knows(self, digest: bytes) -> bool:
        return digest in self._known

    # -----------------------------
    # ingest
    # -----------------------------
    def ingest(self, nb: NotarizedBlock, now: Fraction) -> List[SetTimer]:
        """Store a notarized block; returns the finalize timers to schedule."""
        d = nb.digest
        if d in self._known or d in self._waiting_ids:
            return []
        if self.verify is not None and not self.verify(nb):
            self.rejected += 1
            logger.debug(f"[{self.name}] rejected unverifiable notarization for round {nb.round}")
            return []
        if nb.block.prev not in self._known:
            self._waiting.setdefault(nb.block.prev, []).append(nb)
            self._waiting_ids.add(d)
            return []

        timers = self._store(nb, now)
        for child in self._waiting.pop(d, []):
            self._waiting_ids.discard(child.digest)
            timers.extend(self.ingest(child, now))
        return timers

    def _store(self, nb: NotarizedBlock, now: Fraction) -> List[SetTimer]:
        if not self._shared_pool:
            self.pool.add_notarized(nb)
        self._known.add(nb.digest)
        self.buckets.setdefault(nb.round, {})[nb.digest] = nb

        timers: List[SetTimer] = []
        while self.buckets.get(self.current):
            r = self.current
            self.bucket_first_fill[r] = now
            self.current += 1
            if self.mode is FinalizationMode.TIMER:
                timers.append(SetTimer(at=now + self.T, tag=FINALIZE_TAG, round=r - 1))
            else:
                self.finalize(r - 2, now)
        # predecessors are always ingested first, so buckets fill in round order
        assert nb.round < self.current, f"bucket {nb.round} filled before bucket {self.current}"
        return timers

    # -----------------------------
    # finalize
    # -----------------------------
    def finalize(self, h: int, now: Fraction) -> Chain:
        if h <= 0:
            return self.chain
        bucket = self.buckets.get(h)
        assert bucket, f"finalize({h}) with an empty bucket"

        meet = self.pool.meet(list(bucket))
        head = self.finalized[-1]
        extension = self.pool.path(head.digest, meet.digest) if meet.round >= head.round else None

        if extension is not None:
            self.finalized.extend(extension)
            newly = extension
        else:
            self.violations.append(
                AppendOnlyViolation(
                    h=h,
                    time=now,
                    previous_head=head.digest,
                    previous_height=head.round,
                    new_head=meet.digest,
                    new_height=meet.round,
                )
            )
            logger.warning(f"[{self.name}] finalize({h}) at {now} does not extend the round-{head.round} head")
            self.finalized = list(self.pool.chain_of(meet.digest).blocks)
            newly = self.finalized

        for block in newly:
            if block.digest not in self.finalized_at:
                self.finalized_at[block.digest] = now
                self.events.append(FinalizationEvent(block.round, block.digest, block.owner, now))
        return self.chain

    # -----------------------------
    # Export
    # -----------------------------
    def export_lines(self, rank_of: Optional[Callable[[Block], int]] = None) -> List[str]:
        lines = []
        for block in self.finalized:
            owner = "-" if block.owner is None else str(block.owner)
            rank = "-" if block.is_genesis or rank_of is None else str(rank_of(block))
            lines.append(f"{block.round} {block.digest.hex()} {owner} {rank}")
        return lines
