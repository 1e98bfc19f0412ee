from fractions import Fraction

from backend.consensus.chain import GENESIS, GENESIS_NOTARIZATION, Block, NotarizedBlock
from backend.consensus.finalizer import FINALIZE_TAG, FinalizationMode, Observer


def _nb(prev: Block, owner, note: bytes = b"") -> NotarizedBlock:
    block = Block(prev=prev.digest, round=prev.round + 1, nota=GENESIS_NOTARIZATION, payload=note, owner=owner)
    return NotarizedBlock(block, GENESIS_NOTARIZATION)


def test_first_bucket_fill_schedules_finalize_of_previous_round():
    obs = Observer("o", T=Fraction(2))
    a1 = _nb(GENESIS, 1)
    timers = obs.ingest(a1, Fraction(5))
    assert len(timers) == 1
    assert timers[0].at == 7 and timers[0].tag == FINALIZE_TAG and timers[0].round == 0
    assert obs.ingest(_nb(GENESIS, 2), Fraction(6)) == []
    assert obs.bucket_first_fill[1] == 5


def test_finalize_single_chain():
    obs = Observer("o")
    a1 = _nb(GENESIS, 1)
    a2 = _nb(a1.block, 2)
    obs.ingest(a1, Fraction(1))
    obs.ingest(a2, Fraction(2))
    chain = obs.finalize(1, Fraction(4))
    assert chain.blocks == (GENESIS, a1.block)
    assert obs.finalized_at[a1.digest] == 4
    assert [e.round for e in obs.events] == [1]


def test_finalize_stops_at_common_prefix_of_fork():
    obs = Observer("o")
    a1 = _nb(GENESIS, 1)
    a2 = _nb(a1.block, 2)
    b2 = _nb(a1.block, 3)
    a3 = _nb(a2.block, 2)
    for nb in (a1, a2, b2, a3):
        obs.ingest(nb, Fraction(1))
    assert obs.finalize(2, Fraction(3)).blocks == (GENESIS, a1.block)
    assert obs.height == 1
    assert obs.violations == []


def test_waits_for_missing_predecessor():
    obs = Observer("o")
    a1 = _nb(GENESIS, 1)
    a2 = _nb(a1.block, 2)
    assert obs.ingest(a2, Fraction(1)) == []
    assert not obs.knows(a2.digest)
    timers = obs.ingest(a1, Fraction(2))
    assert obs.knows(a2.digest)
    assert [t.round for t in timers] == [0, 1]
    assert obs.current == 3


def test_rejects_unverifiable_blocks():
    obs = Observer("o", verify=lambda nb: nb.block.owner != 9)
    assert obs.ingest(_nb(GENESIS, 9), Fraction(0)) == []
    assert obs.rejected == 1
    assert 1 not in obs.buckets


def test_two_round_mode_finalizes_two_rounds_back():
    obs = Observer("o", mode=FinalizationMode.TWO_ROUND)
    a1 = _nb(GENESIS, 1)
    a2 = _nb(a1.block, 2)
    a3 = _nb(a2.block, 3)
    assert obs.ingest(a1, Fraction(1)) == []
    obs.ingest(a2, Fraction(2))
    assert obs.height == 0
    obs.ingest(a3, Fraction(3))
    assert obs.chain.blocks == (GENESIS, a1.block)
    assert obs.finalized_at[a1.digest] == 3


def test_hasty_observer_records_append_only_violation():
    obs = Observer("hasty", T=Fraction(0))
    a1 = _nb(GENESIS, 1)
    a2 = _nb(a1.block, 1)
    obs.ingest(a1, Fraction(0))
    obs.ingest(a2, Fraction(0))
    obs.finalize(1, Fraction(0))
    assert obs.chain.blocks == (GENESIS, a1.block)

    # a sibling chain shows up late and forks below the finalized head
    b1 = _nb(GENESIS, 2)
    b2 = _nb(b1.block, 2)
    obs.ingest(b1, Fraction(1))
    obs.ingest(b2, Fraction(1))
    obs.ingest(_nb(a2.block, 3), Fraction(1))
    obs.finalize(2, Fraction(1))

    assert len(obs.violations) == 1
    v = obs.violations[0]
    assert v.h == 2
    assert v.previous_head == a1.digest and v.previous_height == 1
    assert v.new_head == GENESIS.digest and v.new_height == 0
    assert obs.chain.blocks == (GENESIS,)


def test_export_lines_format():
    obs = Observer("o")
    a1 = _nb(GENESIS, 4)
    obs.ingest(a1, Fraction(0))
    obs.ingest(_nb(a1.block, 2), Fraction(1))
    obs.finalize(1, Fraction(2))
    lines = obs.export_lines(lambda block: 0)
    assert lines[0] == f"0 {GENESIS.digest.hex()} - -"
    assert lines[1] == f"1 {a1.digest.hex()} 4 0"
