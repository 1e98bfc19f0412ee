"""
Group sampling, threshold-relay committee selection and the group-size solver.

The solver answers: how large must a randomly sampled group be so that it
has an honest majority except with probability rho, when a 1/beta fraction
of the universe is Byzantine? Both CDFs are evaluated in exact integer /
rational arithmetic because rho goes down to 2^-128.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import FrozenSet, Hashable, Iterator, Optional, Sequence, Tuple, Union

from backend.consensus.primitives import permutation, prg
from backend.consensus.threshold import VerificationVector, default_threshold

Rational = Union[int, Fraction, str]


@dataclass(frozen=True)
class Universe:
    """Replica labels in canonical order. `byzantine` is harness ground truth only."""

    labels: Tuple[Hashable, ...]
    byzantine: FrozenSet[Hashable] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("universe labels must be distinct")
        unknown = set(self.byzantine) - set(self.labels)
        if unknown:
            raise ValueError(f"byzantine labels not in universe: {sorted(unknown)}")

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self) -> Iterator[Hashable]:
        return iter(self.labels)

    @property
    def honest(self) -> Tuple[Hashable, ...]:
        return tuple(i for i in self.labels if i not in self.byzantine)

    def satisfies_beta(self, beta: Rational) -> bool:
        """|byzantine| < |U| / beta."""
        return len(self.byzantine) * Fraction(beta) < len(self.labels)


@dataclass(frozen=True)
class Group:
    id: int
    members: Tuple[Hashable, ...]
    threshold: int
    verification: Optional[VerificationVector] = None
    epoch: int = -1  # registration epoch; -1 for genesis groups

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def key(self) -> Tuple[int, int]:
        return (self.epoch, self.id)

    def index_of(self, label: Hashable) -> Optional[int]:
        """1-based position of `label` in the group, or None for non-members."""
        try:
            return self.members.index(label) + 1
        except ValueError:
            return None

    def with_verification(self, V: VerificationVector, epoch: Optional[int] = None) -> "Group":
        return Group(
            id=self.id,
            members=self.members,
            threshold=self.threshold,
            verification=V,
            epoch=self.epoch if epoch is None else epoch,
        )


@dataclass(frozen=True)
class GroupSizeQuery:
    beta: Fraction
    rho: Fraction
    population: Optional[int] = None

    def __post_init__(self) -> None:
        _check_beta_rho(self.beta, self.rho)
        if self.population is not None and self.population < 1:
            raise ValueError("population must be >= 1")

    def solve(self) -> int:
        if self.population is None:
            return min_group_size_binom(self.beta, self.rho)
        return min_group_size_hyper(self.beta, self.rho, self.population)


# =========================================================
# Sampling and selection
# =========================================================
def group_derive(seed: bytes, j: int, universe: Sequence[Hashable], n: int) -> Group:
    """The j-th derived group: first n labels of Perm_U(prg(seed, j))."""
    labels = tuple(universe)
    if n > len(labels):
        raise ValueError(f"group size {n} exceeds universe size {len(labels)}")
    if n < 1:
        raise ValueError("group size must be >= 1")
    members = permutation(labels, prg(seed, j)).first(n)
    return Group(id=j, members=members, threshold=default_threshold(n))


def committee_select(seed: bytes, m: int) -> int:
    if m < 1:
        raise ValueError("group count must be >= 1")
    return int.from_bytes(bytes(seed), "big") % m


# =========================================================
# Exact distributions
# =========================================================
def _check_beta_rho(beta: Fraction, rho: Fraction) -> None:
    if beta <= 2:
        raise ValueError(f"beta must be > 2, got {beta}")
    if not 0 < rho < 1:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")


def _hypergeometric_mass(x: int, n: int, M: int, N: int) -> int:
    """sum_{k<=x} C(M,k) C(N-M,n-k), via term ratios."""
    k_lo = max(0, n - (N - M))
    k_hi = min(x, n, M)
    if k_hi < k_lo:
        return 0
    a = comb(M, k_lo)
    b = comb(N - M, n - k_lo)
    total = a * b
    for k in range(k_lo, k_hi):
        a = a * (M - k) // (k + 1)
        b = b * (n - k) // (N - M - n + k + 1)
        total += a * b
    return total


def cdf_hypergeometric(x: int, n: int, M: int, N: int) -> Fraction:
    """P[X <= x] when drawing n of N items without replacement, M of which are marked."""
    if not (0 <= M <= N and 0 <= n <= N):
        raise ValueError(f"invalid hypergeometric parameters n={n}, M={M}, N={N}")
    if x < 0:
        return Fraction(0)
    return Fraction(_hypergeometric_mass(x, n, M, N), comb(N, n))


def _binomial_mass(x: int, n: int, a: int, c: int) -> int:
    """sum_{k<=x} C(n,k) a^k (c-a)^(n-k) for success probability a/c."""
    b = c - a
    if b == 0:
        return c ** n if x >= n else 0
    term = b ** n
    total = term
    for k in range(0, min(x, n)):
        term = term * (n - k) * a // ((k + 1) * b)
        total += term
    return total


def cdf_binomial(x: int, n: int, p: Rational) -> Fraction:
    p = Fraction(p)
    if not (0 <= p <= 1) or n < 0 or not 0 <= x <= n:
        raise ValueError(f"invalid binomial parameters x={x}, n={n}, p={p}")
    a, c = p.numerator, p.denominator
    return Fraction(_binomial_mass(x, n, a, c), c ** n)


# =========================================================
# Minimal group sizes
# =========================================================
def _honest_majority_cutoff(n: int) -> int:
    """ceil(n/2) - 1: the largest Byzantine count that still leaves an honest majority."""
    return (n + 1) // 2 - 1


def min_group_size_hyper(beta: Rational, rho: Rational, N: int) -> int:
    """Smallest n with CDFhg(ceil(n/2)-1, n, floor(N/beta), N) > 1 - rho."""
    beta, rho = Fraction(beta), Fraction(rho)
    _check_beta_rho(beta, rho)
    if N < 1:
        raise ValueError("population must be >= 1")
    M = N * beta.denominator // beta.numerator
    for n in range(1, N + 1):
        total = comb(N, n)
        good = _hypergeometric_mass(_honest_majority_cutoff(n), n, M, N)
        # good/total > 1 - rho  <=>  (total - good) * rho.den < rho.num * total
        if (total - good) * rho.denominator < rho.numerator * total:
            return n
    return N


def min_group_size_binom(beta: Rational, rho: Rational, limit: int = 100_000) -> int:
    """Smallest n with CDFbinom(ceil(n/2)-1, n, 1/beta) > 1 - rho."""
    beta, rho = Fraction(beta), Fraction(rho)
    _check_beta_rho(beta, rho)
    p = 1 / beta
    a, c = p.numerator, p.denominator
    for n in range(1, limit + 1):
        total = c ** n
        good = _binomial_mass(_honest_majority_cutoff(n), n, a, c)
        if (total - good) * rho.denominator < rho.numerator * total:
            return n
    raise ValueError(f"no group size up to {limit} reaches the requested failure probability")


def growth_parameter(beta: Rational, rho: Rational) -> int:
    """k = ceil(-log_beta rho), exactly: the smallest k with beta^-k <= rho."""
    beta, rho = Fraction(beta), Fraction(rho)
    _check_beta_rho(beta, rho)
    k, acc = 0, Fraction(1)
    while acc > rho:
        acc /= beta
        k += 1
    return k
