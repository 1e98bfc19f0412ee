"""
Blocks, chains and the per-replica block pool.

A block (prev, round, nota, payload, owner) references its predecessor by
digest and carries the predecessor's notarization. Chains are compared by
summed proposer weight 2^-rank; weights are exact dyadic fractions so every
replica orders forks identically.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Callable, Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple

from backend.consensus.primitives import Digest, Permutation, Seed, hash_digest, permutation
from backend.consensus.threshold import GroupSignature
from backend.errors import DependencyMissing

GENESIS_PAYLOAD = b"DFINITY-GENESIS"
GENESIS_SEED = Seed(hash_digest(b"DFINITY"))

# (round, notary message, notarization) -> verifies under that round's committee
NotarizationVerifier = Callable[[int, bytes, GroupSignature], bool]
PayloadPredicate = Callable[["Block"], bool]
RankFn = Callable[["Block"], int]


def _lp(field_bytes: bytes) -> bytes:
    return len(field_bytes).to_bytes(4, "big") + field_bytes


@dataclass(frozen=True)
class Block:
    prev: Optional[Digest]
    round: int
    nota: Optional[GroupSignature]
    payload: bytes
    owner: Optional[Hashable]

    def __post_init__(self) -> None:
        if self.round == 0:
            if self.prev is not None or self.nota is not None:
                raise ValueError("genesis block has no prev or nota")
        elif self.round < 0 or self.prev is None or self.nota is None or self.owner is None:
            raise ValueError("non-genesis blocks carry prev, round, nota, payload and owner")

    @property
    def is_genesis(self) -> bool:
        return self.round == 0

    def encode(self) -> bytes:
        owner = b"" if self.owner is None else str(self.owner).encode()
        return b"".join(
            (
                _lp(bytes(self.prev) if self.prev is not None else b""),
                _lp(self.round.to_bytes(8, "big")),
                _lp(self.nota.encode() if self.nota is not None else b""),
                _lp(self.payload),
                _lp(owner),
            )
        )

    @cached_property
    def digest(self) -> Digest:
        return hash_digest(self.encode())


GENESIS = Block(prev=None, round=0, nota=None, payload=GENESIS_PAYLOAD, owner=None)

# Round-1 blocks reference genesis with this fixed marker in place of a notarization.
GENESIS_NOTARIZATION = GroupSignature(value=0, contributors=())


def notary_message(block_digest: bytes) -> bytes:
    return b"NOTARY" + bytes(block_digest)


@dataclass(frozen=True)
class NotarizedBlock:
    block: Block
    notarization: Optional[GroupSignature]

    @property
    def digest(self) -> Digest:
        return self.block.digest

    @property
    def round(self) -> int:
        return self.block.round


GENESIS_NOTARIZED = NotarizedBlock(GENESIS, None)


@dataclass(frozen=True)
class Chain:
    blocks: Tuple[Block, ...]

    def __len__(self) -> int:
        return len(self.blocks)

    def __getitem__(self, idx: int) -> Block:
        return self.blocks[idx]

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return self.head.round

    def is_prefix_of(self, other: "Chain") -> bool:
        if len(self) > len(other):
            return False
        return all(a.digest == b.digest for a, b in zip(self.blocks, other.blocks))

    def comparable(self, other: "Chain") -> bool:
        return self.is_prefix_of(other) or other.is_prefix_of(self)

    def links_valid(self) -> bool:
        """Rounds are consecutive from genesis and every prev digest matches."""
        if not self.blocks or self.blocks[0] != GENESIS:
            return False
        for i in range(1, len(self.blocks)):
            cur, prev = self.blocks[i], self.blocks[i - 1]
            if cur.round != i or cur.prev != prev.digest:
                return False
        return True


# =========================================================
# Ranking and weights
# =========================================================
@lru_cache(maxsize=4096)
def _ranking(universe: Tuple[Hashable, ...], seed: bytes) -> Permutation:
    return permutation(universe, seed)


def ranking(universe: Sequence[Hashable], seed: bytes) -> Permutation:
    return _ranking(tuple(universe), bytes(seed))


def replica_rank(i: Hashable, seed: bytes, universe: Sequence[Hashable]) -> int:
    return ranking(universe, seed).rank_of(i)


def weight_of_rank(rank: int) -> Fraction:
    return Fraction(1, 1 << rank)


def block_weight(block: Block, seed: bytes, universe: Sequence[Hashable]) -> Fraction:
    if block.is_genesis:
        return Fraction(0)
    return weight_of_rank(replica_rank(block.owner, seed, universe))


def chain_weight(chain: Chain, beacon: Mapping[int, bytes], universe: Sequence[Hashable]) -> Fraction:
    """Sum of block weights; block of round h is ranked by beacon[h]. Genesis weighs 0."""
    return sum((block_weight(b, beacon[b.round], universe) for b in chain.blocks if not b.is_genesis), Fraction(0))


# =========================================================
# Block pool
# =========================================================
@dataclass
class BlockPool:
    """Valid blocks seen by one replica or observer, plus the notarized buckets."""

    blocks: Dict[Digest, Block] = field(default_factory=dict)
    by_round: Dict[int, Dict[Digest, Block]] = field(default_factory=dict)
    notarized: Dict[Digest, NotarizedBlock] = field(default_factory=dict)
    notarized_by_round: Dict[int, Dict[Digest, NotarizedBlock]] = field(default_factory=dict)
    _weights: Dict[Digest, Fraction] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not self.blocks:
            self.blocks[GENESIS.digest] = GENESIS
            self.notarized[GENESIS.digest] = GENESIS_NOTARIZED
            self.notarized_by_round[0] = {GENESIS.digest: GENESIS_NOTARIZED}
            self._weights[GENESIS.digest] = Fraction(0)

    def __contains__(self, digest: object) -> bool:
        return digest in self.blocks

    def get(self, digest: bytes) -> Block:
        try:
            return self.blocks[digest]
        except KeyError:
            raise DependencyMissing(("block", bytes(digest))) from None

    def is_notarized(self, digest: bytes) -> bool:
        return digest in self.notarized

    def proposals(self, r: int) -> List[Block]:
        return list(self.by_round.get(r, {}).values())

    def notarized_heads(self, r: int) -> List[NotarizedBlock]:
        return list(self.notarized_by_round.get(r, {}).values())

    def add_block(self, block: Block) -> bool:
        """Store a validated block; False if it was already known."""
        if block.digest in self.blocks:
            return False
        if block.prev not in self.blocks:
            raise DependencyMissing(("block", bytes(block.prev)))
        self.blocks[block.digest] = block
        self.by_round.setdefault(block.round, {})[block.digest] = block
        return True

    def add_notarized(self, nb: NotarizedBlock) -> bool:
        """Record a notarization for a stored block; False if already notarized."""
        d = nb.digest
        if d in self.notarized:
            return False
        if d not in self.blocks:
            self.add_block(nb.block)
        self.notarized[d] = nb
        self.notarized_by_round.setdefault(nb.round, {})[d] = nb
        return True

    # -----------------------------
    # Ancestry
    # -----------------------------
    def parent(self, block: Block) -> Block:
        return self.get(block.prev)

    def ancestor_at(self, digest: bytes, r: int) -> Block:
        block = self.get(digest)
        if r > block.round:
            raise ValueError(f"round {r} is above block round {block.round}")
        while block.round > r:
            block = self.parent(block)
        return block

    def chain_of(self, digest: bytes) -> Chain:
        blocks = [self.get(digest)]
        while not blocks[-1].is_genesis:
            blocks.append(self.parent(blocks[-1]))
        return Chain(tuple(reversed(blocks)))

    def meet(self, digests: Iterable[bytes]) -> Block:
        """Deepest block that is an ancestor-or-self of every given block."""
        heads = [self.get(d) for d in digests]
        if not heads:
            raise ValueError("common prefix of an empty set")
        low = min(b.round for b in heads)
        current = {self.ancestor_at(b.digest, low).digest for b in heads}
        while len(current) > 1:
            current = {self.blocks[d].prev for d in current}
        return self.blocks[next(iter(current))]

    def path(self, ancestor: bytes, descendant: bytes) -> Optional[List[Block]]:
        """Blocks strictly after `ancestor` up to `descendant`, or None if not an ancestor."""
        anc = self.get(ancestor)
        block = self.get(descendant)
        out: List[Block] = []
        while block.round > anc.round:
            out.append(block)
            block = self.parent(block)
        if block.digest != anc.digest:
            return None
        out.reverse()
        return out

    def weight(self, digest: bytes, rank_of: RankFn) -> Fraction:
        """Memoized chain weight of C(B)."""
        if digest in self._weights:
            return self._weights[digest]
        pending = []
        block = self.get(digest)
        while block.digest not in self._weights:
            pending.append(block)
            block = self.parent(block)
        acc = self._weights[block.digest]
        for b in reversed(pending):
            acc = acc + weight_of_rank(rank_of(b))
            self._weights[b.digest] = acc
        return acc


# =========================================================
# Validity, prefixes, fork choice
# =========================================================
def always_valid(block: Block) -> bool:
    return True


def validate_block(
    block: Block,
    pool: BlockPool,
    verify_notarization: NotarizationVerifier,
    payload_valid: PayloadPredicate = always_valid,
) -> bool:
    """
    A block is valid iff its predecessor is a valid stored block of the
    previous round, nota verifies as that predecessor's notarization, and
    the payload passes the configured predicate. Raises DependencyMissing
    when the predecessor has not been received.
    """
    if block.is_genesis:
        return block == GENESIS
    prev = pool.get(block.prev)
    if prev.round != block.round - 1:
        return False
    if not verify_notarization(prev.round, notary_message(prev.digest), block.nota):
        return False
    return bool(payload_valid(block))


def common_prefix(blocks: Iterable[Block], pool: BlockPool) -> Chain:
    """Longest chain that is a prefix of C(B) for every B in `blocks`."""
    digests = [b.digest for b in blocks]
    if not digests:
        raise ValueError("common prefix of an empty set")
    return pool.chain_of(pool.meet(digests).digest)


def heaviest_head(pool: BlockPool, r: int, rank_of: RankFn) -> NotarizedBlock:
    """Notarized round r-1 block heading the heaviest chain; smaller digest wins ties."""
    candidates = pool.notarized_heads(r - 1)
    if not candidates:
        raise DependencyMissing(("notarized-round", r - 1), "no extendable chain")
    return min(candidates, key=lambda nb: (-pool.weight(nb.digest, rank_of), bytes(nb.digest)))


def heaviest_valid_chain(pool: BlockPool, r: int, rank_of: RankFn) -> Chain:
    return pool.chain_of(heaviest_head(pool, r, rank_of).digest)
