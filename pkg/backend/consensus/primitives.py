"""
Hash, seeded PRG and seed-driven permutations.

Every random-looking choice in the protocol (group sampling, committee
selection, proposer ranking) is derived from these three functions, so
they must be bit-for-bit reproducible.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, Hashable, Iterable, Iterator, Sequence, Tuple

HASH_NAME = "sha256"
DIGEST_SIZE = 32
COUNTER_BYTES = 8


class Digest(bytes):
    """A 32-octet hash output. Orders like the big-endian integer it encodes."""

    def __new__(cls, value: bytes) -> "Digest":
        if len(value) != DIGEST_SIZE:
            raise ValueError(f"digest must be {DIGEST_SIZE} octets, got {len(value)}")
        return super().__new__(cls, value)

    def __int__(self) -> int:
        return int.from_bytes(self, "big")

    @classmethod
    def from_hex(cls, text: str) -> "Digest":
        return cls(bytes.fromhex(text))

    def short(self) -> str:
        return self.hex()[:12]


class Seed(Digest):
    """Randomness seed (ξ). Same representation as a digest."""


def hash_digest(data: bytes) -> Digest:
    return Digest(hashlib.new(HASH_NAME, bytes(data)).digest())


def encode_counter(i: int) -> bytes:
    if i < 0:
        raise ValueError(f"index must be >= 0, got {i}")
    return i.to_bytes(COUNTER_BYTES, "big")


def prg(seed: bytes, i: int) -> Seed:
    """i-th output of the generator seeded with `seed`: hash(seed || counter)."""
    return Seed(hash_digest(bytes(seed) + encode_counter(i)))


@dataclass(frozen=True)
class Permutation:
    """Bijection from positions 1..k onto the universe labels."""

    order: Tuple[Hashable, ...]
    _positions: Dict[Hashable, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        positions = {label: idx for idx, label in enumerate(self.order)}
        if len(positions) != len(self.order):
            raise ValueError("labels must be distinct")
        object.__setattr__(self, "_positions", positions)

    def __call__(self, position: int) -> Hashable:
        if not 1 <= position <= len(self.order):
            raise IndexError(f"position {position} outside 1..{len(self.order)}")
        return self.order[position - 1]

    def __len__(self) -> int:
        return len(self.order)

    def __iter__(self) -> Iterator[Hashable]:
        return iter(self.order)

    def rank_of(self, label: Hashable) -> int:
        """Zero-based position of `label`."""
        try:
            return self._positions[label]
        except KeyError:
            raise ValueError(f"unknown label {label!r}") from None

    def first(self, n: int) -> Tuple[Hashable, ...]:
        return self.order[:n]


def permutation(universe: Sequence[Hashable] | Iterable[Hashable], seed: bytes) -> Permutation:
    """
    Fisher-Yates shuffle of `universe` (in its given order) driven by prg(seed, j).

    For j = k-1 down to 1 the element at j is swapped with the element at
    int(prg(seed, j)) mod (j + 1). The modulo bias is negligible at the
    universe sizes simulated here.
    """
    items = list(universe)
    if not items:
        raise ValueError("empty universe")
    if len(set(items)) != len(items):
        raise ValueError("labels must be distinct")

    for j in range(len(items) - 1, 0, -1):
        k = int(prg(seed, j)) % (j + 1)
        items[j], items[k] = items[k], items[j]
    return Permutation(tuple(items))
