from fractions import Fraction

import pytest

from backend.consensus.chain import GENESIS_SEED
from backend.consensus.committee import (
    Group,
    GroupSizeQuery,
    Universe,
    cdf_binomial,
    cdf_hypergeometric,
    committee_select,
    group_derive,
    growth_parameter,
    min_group_size_binom,
    min_group_size_hyper,
)
from backend.consensus.primitives import hash_digest, permutation, prg


def test_group_derive_takes_prefix_of_seeded_permutation():
    universe = list(range(1, 21))
    group = group_derive(GENESIS_SEED, 3, universe, 7)
    assert group.members == permutation(universe, prg(GENESIS_SEED, 3)).first(7)
    assert group.id == 3
    assert group.threshold == 4
    assert len(set(group.members)) == 7


def test_group_derive_bounds():
    with pytest.raises(ValueError):
        group_derive(GENESIS_SEED, 1, [1, 2, 3], 4)
    with pytest.raises(ValueError):
        group_derive(GENESIS_SEED, 1, [1, 2, 3], 0)


def test_group_indexing_is_one_based():
    group = Group(id=1, members=(7, 3, 9), threshold=2)
    assert group.index_of(7) == 1
    assert group.index_of(9) == 3
    assert group.index_of(4) is None
    assert group.key == (-1, 1)


def test_committee_select_is_seed_mod_m():
    seed = hash_digest(b"beacon")
    assert committee_select(seed, 5) == int.from_bytes(seed, "big") % 5
    assert committee_select(seed, 1) == 0
    with pytest.raises(ValueError):
        committee_select(seed, 0)


def test_universe_honesty_assumption():
    u = Universe(labels=tuple(range(1, 10)), byzantine=frozenset({1, 2}))
    assert u.satisfies_beta(3)
    assert not Universe(labels=tuple(range(1, 10)), byzantine=frozenset({1, 2, 3})).satisfies_beta(3)
    assert u.honest == (3, 4, 5, 6, 7, 8, 9)
    with pytest.raises(ValueError):
        Universe(labels=(1, 2), byzantine=frozenset({5}))


def test_hypergeometric_cdf_small_cases():
    # draw 3 of 5 with 2 marked: P[X = 2] = 3/10
    assert cdf_hypergeometric(1, 3, 2, 5) == Fraction(7, 10)
    assert cdf_hypergeometric(2, 3, 2, 5) == 1
    assert cdf_hypergeometric(-1, 3, 2, 5) == 0
    assert cdf_hypergeometric(0, 2, 0, 4) == 1


def test_binomial_cdf_small_cases():
    assert cdf_binomial(1, 2, Fraction(1, 2)) == Fraction(3, 4)
    assert cdf_binomial(0, 3, Fraction(1, 3)) == Fraction(8, 27)
    assert cdf_binomial(3, 3, "1/3") == 1
    with pytest.raises(ValueError):
        cdf_binomial(4, 3, Fraction(1, 2))


def test_hypergeometric_approaches_binomial_for_large_population():
    exact = cdf_hypergeometric(5, 20, 10**6 // 3, 10**6)
    approx = cdf_binomial(5, 20, Fraction(1, 3))
    assert abs(float(exact) - float(approx)) < 1e-4


def test_group_size_corner_values(vectors):
    hyper = vectors["groupsize_hypergeometric"]["rows"]
    binom = vectors["groupsize_binomial"]["rows"]
    assert min_group_size_hyper(5, Fraction(1, 2**40), 10_000) == hyper["40"]["5"]
    assert min_group_size_hyper(4, Fraction(1, 2**40), 10_000) == hyper["40"]["4"]
    assert min_group_size_binom(5, Fraction(1, 2**40)) == binom["40"]["5"]
    assert min_group_size_binom(4, Fraction(1, 2**64)) == binom["64"]["4"]


def test_group_size_is_minimal():
    rho = Fraction(1, 2**40)
    n = min_group_size_binom(4, rho)
    assert 1 - cdf_binomial((n + 1) // 2 - 1, n, Fraction(1, 4)) < rho
    smaller = n - 1
    assert 1 - cdf_binomial((smaller + 1) // 2 - 1, smaller, Fraction(1, 4)) >= rho


def test_group_size_query_dispatch():
    q = GroupSizeQuery(beta=Fraction(5), rho=Fraction(1, 2**40))
    assert q.solve() == min_group_size_binom(5, Fraction(1, 2**40))
    assert GroupSizeQuery(beta=Fraction(5), rho=Fraction(1, 2**40), population=10_000).solve() == 111
    with pytest.raises(ValueError):
        GroupSizeQuery(beta=Fraction(2), rho=Fraction(1, 2))
    with pytest.raises(ValueError):
        GroupSizeQuery(beta=Fraction(3), rho=Fraction(1))


def test_growth_parameter():
    assert growth_parameter(3, Fraction(1, 2**10)) == 7
    assert growth_parameter(4, Fraction(1, 2**10)) == 5
    assert growth_parameter(3, Fraction(1, 9)) == 2
