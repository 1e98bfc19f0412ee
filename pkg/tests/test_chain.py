from fractions import Fraction

import pytest

from backend.consensus.chain import (
    GENESIS,
    GENESIS_NOTARIZATION,
    GENESIS_SEED,
    Block,
    BlockPool,
    Chain,
    NotarizedBlock,
    chain_weight,
    common_prefix,
    heaviest_head,
    notary_message,
    validate_block,
    weight_of_rank,
)
from backend.errors import DependencyMissing

UNIVERSE = (1, 2, 3, 4, 5)  # ranks under GENESIS_SEED: 5->0, 1->1, 3->2, 4->3, 2->4


def _block(prev: Block, owner, payload: bytes = b"") -> Block:
    return Block(prev=prev.digest, round=prev.round + 1, nota=GENESIS_NOTARIZATION, payload=payload, owner=owner)


def _chain(owners):
    blocks = [GENESIS]
    for owner in owners:
        blocks.append(_block(blocks[-1], owner))
    return Chain(tuple(blocks))


def _pool_with(*blocks, notarized=True):
    pool = BlockPool()
    for b in blocks:
        if notarized:
            pool.add_notarized(NotarizedBlock(b, GENESIS_NOTARIZATION))
        else:
            pool.add_block(b)
    return pool


def test_genesis_shape():
    assert GENESIS.is_genesis
    assert GENESIS.prev is None and GENESIS.nota is None
    with pytest.raises(ValueError):
        Block(prev=None, round=1, nota=GENESIS_NOTARIZATION, payload=b"", owner=1)
    with pytest.raises(ValueError):
        Block(prev=GENESIS.digest, round=0, nota=None, payload=b"", owner=None)


def test_digest_covers_every_field():
    base = _block(GENESIS, 1)
    assert base.digest == _block(GENESIS, 1).digest
    assert base.digest != _block(GENESIS, 2).digest
    assert base.digest != _block(GENESIS, 1, payload=b"x").digest


def test_weights_are_dyadic():
    assert weight_of_rank(0) == 1
    assert weight_of_rank(3) == Fraction(1, 8)


def test_fork_weights():
    beacon = {r: GENESIS_SEED for r in range(1, 5)}
    # ranks (0, 0, 2, 0) and (0, 1, 0, 1)
    assert chain_weight(_chain([5, 5, 3, 5]), beacon, UNIVERSE) == Fraction(13, 4)
    assert chain_weight(_chain([5, 1, 5, 1]), beacon, UNIVERSE) == 3
    assert chain_weight(_chain([]), beacon, UNIVERSE) == 0


def test_chain_prefix_relations():
    long = _chain([5, 1, 3])
    short = Chain(long.blocks[:2])
    other = _chain([1])
    assert short.is_prefix_of(long)
    assert not long.is_prefix_of(short)
    assert short.comparable(long)
    assert not other.comparable(long)
    assert long.links_valid()
    assert long.height == 3


def test_links_valid_rejects_gaps():
    b1 = _block(GENESIS, 1)
    b3 = Block(prev=b1.digest, round=3, nota=GENESIS_NOTARIZATION, payload=b"", owner=1)
    assert not Chain((GENESIS, b1, b3)).links_valid()
    assert not Chain((b1,)).links_valid()


def test_pool_requires_predecessor():
    b1 = _block(GENESIS, 1)
    b2 = _block(b1, 2)
    pool = BlockPool()
    with pytest.raises(DependencyMissing) as info:
        pool.add_block(b2)
    assert info.value.key == ("block", bytes(b1.digest))
    assert pool.add_block(b1)
    assert not pool.add_block(b1)
    assert pool.add_block(b2)
    assert pool.proposals(2) == [b2]


def test_meet_and_common_prefix():
    a1 = _block(GENESIS, 1)
    a2 = _block(a1, 2)
    b2 = _block(a1, 3)
    c1 = _block(GENESIS, 4)
    pool = _pool_with(a1, a2, b2, c1, notarized=False)
    assert pool.meet([a2.digest, b2.digest]) == a1
    assert pool.meet([a2.digest, c1.digest]) == GENESIS
    assert common_prefix([a2, b2], pool).blocks == (GENESIS, a1)
    assert pool.path(GENESIS.digest, a2.digest) == [a1, a2]
    assert pool.path(c1.digest, a2.digest) is None


def test_heaviest_head_prefers_weight_then_smaller_digest():
    x = _block(GENESIS, 5)  # rank 0
    y = _block(GENESIS, 2)  # rank 4
    pool = _pool_with(x, y)

    def rank_of(block):
        return {5: 0, 1: 1, 3: 2, 4: 3, 2: 4}[block.owner]

    assert heaviest_head(pool, 2, rank_of).block == x

    tied_a = _block(GENESIS, 5, payload=b"a")
    tied_b = _block(GENESIS, 5, payload=b"b")
    pool = _pool_with(tied_a, tied_b)
    expected = min((tied_a, tied_b), key=lambda b: bytes(b.digest))
    assert heaviest_head(pool, 2, rank_of).block == expected


def test_heaviest_head_without_candidates_is_a_dependency():
    with pytest.raises(DependencyMissing):
        heaviest_head(BlockPool(), 3, lambda b: 0)


def test_validate_block():
    b1 = _block(GENESIS, 1)
    pool = BlockPool()
    accept = lambda r, m, z: r == 0 and m == notary_message(GENESIS.digest)  # noqa: E731
    assert validate_block(b1, pool, accept)
    assert not validate_block(b1, pool, lambda r, m, z: False)
    assert not validate_block(b1, pool, accept, payload_valid=lambda b: False)

    skip = Block(prev=GENESIS.digest, round=2, nota=GENESIS_NOTARIZATION, payload=b"", owner=1)
    assert not validate_block(skip, pool, accept)

    orphan = _block(_block(GENESIS, 2), 3)
    with pytest.raises(DependencyMissing):
        validate_block(orphan, pool, accept)


def test_pool_weight_is_memoized_chain_weight():
    chain = _chain([5, 1, 3])
    pool = _pool_with(*chain.blocks[1:])
    rank = {5: 0, 1: 1, 3: 2}
    assert pool.weight(chain.head.digest, lambda b: rank[b.owner]) == Fraction(7, 4)
