"""
(t, n)-threshold signatures over a Schnorr group with Joint-Feldman key generation.

The interface mirrors a unique threshold BLS scheme: shares are signed and
verified independently, any t verified shares recover the same group
signature, and the beacon output is the hash of that signature. Pairing
verification is replaced by Chaum-Pedersen discrete-log-equality proofs on
each share; a group signature carries the shares it was recovered from so
third parties can check it.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from backend.consensus.primitives import Seed, hash_digest, prg
from backend.errors import DKGError
from backend.utils.helpers import get_logger

logger = get_logger("threshold")


# =========================================================
# Parameter presets
# =========================================================
# Toy: safe prime p = 2q + 1 with q prime, g = 4 of order q.
TOY_P = 2305843009213691579
TOY_Q = 1152921504606845789
TOY_G = 4

# Standard: 2048-bit p with a 256-bit prime-order subgroup.
STANDARD_P = int(
    "c4d264a992c993ab3a7378eb0d9c732d79bc15d776a41ba5aff65b6bed9c6686"
    "1cd39c86be66e014ff6ea9503a0647c125d8c849cbba7ae8145bf1173d6a9fc8"
    "b4bdea9b67c7340d7f7e2db82dedbbb9d7ad9f308a46028385111baeb2d4c8e5"
    "703bb910aadc71149a7462a68dcf5e8d0a9ec27fe7c91a5a6db2385775dbda11"
    "ff5855ffcce62975a62f63f7f25554c2ff4f2752f033ac6f77283fc7c307019b"
    "b587f9869103aba2aadb76dafc0f243dc9e2e4734e67d236d2911bbd2a5d180a"
    "f45cc047002e08724bdc21381f8a7b520eb96a106c7ca731e8d00038f5da8821"
    "ee2607dd813a2847bb67e555a94758afeb7dd332fc57c46ad3c9b174004d3c59",
    16,
)
STANDARD_Q = int("e9b638e09d776be1db025317412d6e379f9b059eec7fc9b4cf42e819e015ddaf", 16)
STANDARD_G = int(
    "b5b6f3dd5b2c1b0572371d6bda749ee3547a8b3f5a6855e833ab928f4b80e6ed"
    "75efec44e23880ab70a3c11c8d40f34c4b693874cd966765ddfaa73a39f5a123"
    "cada9c9d9f9b9303c58d0cd7a3b7616ad2532dedca5036321722c4872ee35903"
    "065b37b205fce7e032c2a00c285c08ce31e45abcfe7689a32c9752c7b2c45709"
    "fb33d1dd598004bad7662423e51f39c515f40a2b44cad8b04733a0a007f4ff27"
    "5b7dc046f53e470418803363b0a3fb3d49835bbbcb9a85041c237b63857fd241"
    "13de3ea61964d39970021a5b31aea89ffba9eb36e7a27a515229defd27eefb46"
    "35bf4b716bb0de547e74c78a148be820dc17f13fd4b00b5291be6ac6c531b864",
    16,
)

PRESETS: Dict[str, Tuple[int, int, int]] = {
    "toy": (TOY_P, TOY_Q, TOY_G),
    "standard": (STANDARD_P, STANDARD_Q, STANDARD_G),
}


def default_threshold(n: int) -> int:
    """Smallest majority: t = floor(n/2) + 1, so n = 2t - 1 for odd n."""
    return n // 2 + 1


# =========================================================
# Types
# =========================================================
@dataclass(frozen=True)
class SchemeParams:
    p: int
    q: int
    g: int
    t: int
    n: int

    def __post_init__(self) -> None:
        if (self.p - 1) % self.q != 0:
            raise ValueError("q must divide p - 1")
        if not 1 < self.g < self.p or pow(self.g, self.q, self.p) != 1:
            raise ValueError("g must generate the order-q subgroup")
        if not 1 <= self.t <= self.n:
            raise ValueError(f"threshold must satisfy 1 <= t <= n, got t={self.t}, n={self.n}")

    @classmethod
    def preset(cls, name: str, n: int, t: Optional[int] = None) -> "SchemeParams":
        try:
            p, q, g = PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown parameter preset {name!r}") from None
        return cls(p=p, q=q, g=g, t=default_threshold(n) if t is None else t, n=n)

    def with_threshold(self, t: int, n: Optional[int] = None) -> "SchemeParams":
        return SchemeParams(p=self.p, q=self.q, g=self.g, t=t, n=self.n if n is None else n)

    @property
    def element_bytes(self) -> int:
        return (self.p.bit_length() + 7) // 8

    @property
    def scalar_bytes(self) -> int:
        return (self.q.bit_length() + 7) // 8

    def encode_element(self, x: int) -> bytes:
        return x.to_bytes(self.element_bytes, "big")

    def encode_scalar(self, x: int) -> bytes:
        return x.to_bytes(self.scalar_bytes, "big")

    def in_subgroup(self, x: int) -> bool:
        return 1 < x < self.p and pow(x, self.q, self.p) == 1


@dataclass(frozen=True)
class VerificationVector:
    params: SchemeParams
    elements: Tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.elements) != self.params.t:
            raise ValueError(f"verification vector must have t={self.params.t} elements")

    @property
    def public_key(self) -> "GroupPublicKey":
        return GroupPublicKey(self.elements[0])


@dataclass(frozen=True)
class GroupPublicKey:
    element: int


@dataclass(frozen=True)
class SecretKeyShare:
    index: int
    scalar: int

    def __repr__(self) -> str:
        return f"SecretKeyShare(index={self.index}, scalar=<hidden>)"


@dataclass(frozen=True)
class DLEQProof:
    challenge: int
    response: int


@dataclass(frozen=True)
class SignatureShare:
    index: int
    value: int
    proof: DLEQProof


@dataclass(frozen=True)
class GroupSignature:
    value: int
    contributors: Tuple[SignatureShare, ...]

    @property
    def signers(self) -> Tuple[int, ...]:
        return tuple(s.index for s in self.contributors)

    def encode(self) -> bytes:
        """Length-prefixed canonical encoding (value, then each contributor)."""
        parts = [_lp_int(self.value), len(self.contributors).to_bytes(4, "big")]
        for s in self.contributors:
            parts.extend(
                (_lp_int(s.index), _lp_int(s.value), _lp_int(s.proof.challenge), _lp_int(s.proof.response))
            )
        return b"".join(parts)


def _lp_int(x: int) -> bytes:
    raw = x.to_bytes(max(1, (x.bit_length() + 7) // 8), "big")
    return len(raw).to_bytes(4, "big") + raw


# =========================================================
# Group arithmetic helpers
# =========================================================
def hash_to_group(m: bytes, params: SchemeParams) -> int:
    return pow(params.g, int(hash_digest(m)) % params.q, params.p)


def _eval_poly(coefficients: Sequence[int], x: int, q: int) -> int:
    acc = 0
    for c in reversed(coefficients):
        acc = (acc * x + c) % q
    return acc


def _commitment_product(params: SchemeParams, commitments: Sequence[int], i: int) -> int:
    acc = 1
    for k, c in enumerate(commitments):
        acc = acc * pow(c, pow(i, k, params.q), params.p) % params.p
    return acc


@lru_cache(maxsize=8192)
def public_key_share(V: VerificationVector, i: int) -> int:
    """pk_i = prod_k v_k^(i^k): g raised to the group polynomial at i."""
    if i < 1:
        raise ValueError(f"share index must be >= 1, got {i}")
    return _commitment_product(V.params, V.elements, i)


def lagrange_at_zero(indices: Sequence[int], q: int) -> List[int]:
    coefficients = []
    for j in indices:
        num, den = 1, 1
        for m in indices:
            if m == j:
                continue
            num = num * m % q
            den = den * (m - j) % q
        coefficients.append(num * pow(den, -1, q) % q)
    return coefficients


# =========================================================
# Distributed key generation (Joint-Feldman)
# =========================================================
@dataclass(frozen=True)
class DealerTranscript:
    dealer: int
    commitments: Tuple[int, ...]
    shares: Dict[int, int]


@dataclass(frozen=True)
class DKGResult:
    verification: VerificationVector
    shares: Tuple[SecretKeyShare, ...]
    disqualified: FrozenSet[int]
    qualified: Tuple[int, ...]

    @property
    def public_key(self) -> GroupPublicKey:
        return self.verification.public_key

    def share_for(self, index: int) -> SecretKeyShare:
        return self.shares[index - 1]


# Receives (dealer, recipient, share) and returns what the recipient actually gets.
ShareTamper = Callable[[int, int, int], int]


def dealer_polynomial(params: SchemeParams, seed: bytes) -> Tuple[int, ...]:
    """Degree t-1 coefficients a_k = int(prg(seed, k)) mod q."""
    return tuple(int(prg(seed, k)) % params.q for k in range(params.t))


def deal(params: SchemeParams, dealer: int, seed: bytes) -> DealerTranscript:
    coefficients = dealer_polynomial(params, seed)
    commitments = tuple(pow(params.g, a, params.p) for a in coefficients)
    shares = {j: _eval_poly(coefficients, j, params.q) for j in range(1, params.n + 1)}
    return DealerTranscript(dealer=dealer, commitments=commitments, shares=shares)


def dkg(
    params: SchemeParams,
    dealer_randomness: Sequence[bytes],
    tamper: Optional[ShareTamper] = None,
) -> DKGResult:
    """
    Run every dealer, let each recipient check its shares against the
    dealer's Feldman commitments, disqualify any dealer with a complaint,
    and combine the rest.
    """
    if len(dealer_randomness) != params.n:
        raise ValueError(f"expected {params.n} dealer seeds, got {len(dealer_randomness)}")

    transcripts = [deal(params, i, seed) for i, seed in enumerate(dealer_randomness, start=1)]

    received: Dict[int, Dict[int, int]] = {}
    disqualified = set()
    for tr in transcripts:
        delivered = {}
        for j, share in tr.shares.items():
            delivered[j] = tamper(tr.dealer, j, share) if tamper else share
        for j, share in delivered.items():
            expected = _commitment_product(params, tr.commitments, j)
            if pow(params.g, share % params.q, params.p) != expected:
                logger.debug(f"DKG complaint: recipient {j} against dealer {tr.dealer}")
                disqualified.add(tr.dealer)
                break
        received[tr.dealer] = delivered

    qualified = tuple(tr.dealer for tr in transcripts if tr.dealer not in disqualified)
    if len(qualified) < params.t:
        raise DKGError(f"DKG failed: {len(qualified)} qualified dealers, need {params.t}")

    elements = []
    for k in range(params.t):
        acc = 1
        for tr in transcripts:
            if tr.dealer in disqualified:
                continue
            acc = acc * tr.commitments[k] % params.p
        elements.append(acc)
    verification = VerificationVector(params, tuple(elements))

    shares = tuple(
        SecretKeyShare(index=j, scalar=sum(received[d][j] for d in qualified) % params.q)
        for j in range(1, params.n + 1)
    )
    return DKGResult(
        verification=verification,
        shares=shares,
        disqualified=frozenset(disqualified),
        qualified=qualified,
    )


# =========================================================
# Signing, verification, recovery
# =========================================================
def _dleq_challenge(params: SchemeParams, pk: int, h: int, value: int, a1: int, a2: int) -> int:
    enc = params.encode_element
    data = b"DLEQ" + enc(params.g) + enc(pk) + enc(h) + enc(value) + enc(a1) + enc(a2)
    return int(hash_digest(data)) % params.q


def sign_share(m: bytes, share: SecretKeyShare, V: VerificationVector) -> SignatureShare:
    params = V.params
    pk = public_key_share(V, share.index)
    if pow(params.g, share.scalar, params.p) != pk:
        raise ValueError(f"secret share {share.index} does not match the verification vector")

    h = hash_to_group(m, params)
    value = pow(h, share.scalar, params.p)
    nonce = int(hash_digest(b"DLEQ-NONCE" + bytes(m) + params.encode_scalar(share.scalar))) % params.q
    nonce = nonce or 1
    a1 = pow(params.g, nonce, params.p)
    a2 = pow(h, nonce, params.p)
    c = _dleq_challenge(params, pk, h, value, a1, a2)
    s = (nonce - c * share.scalar) % params.q
    return SignatureShare(index=share.index, value=value, proof=DLEQProof(challenge=c, response=s))


def verify_share(m: bytes, V: VerificationVector, i: int, s: SignatureShare) -> bool:
    params = V.params
    if s.index != i or not 1 <= i <= params.n:
        return False
    if not params.in_subgroup(s.value):
        return False
    c, r = s.proof.challenge, s.proof.response
    if not (0 <= c < params.q and 0 <= r < params.q):
        return False

    pk = public_key_share(V, i)
    h = hash_to_group(m, params)
    a1 = pow(params.g, r, params.p) * pow(pk, c, params.p) % params.p
    a2 = pow(h, r, params.p) * pow(s.value, c, params.p) % params.p
    return _dleq_challenge(params, pk, h, s.value, a1, a2) == c


def recover(shares: Iterable[SignatureShare], params: SchemeParams) -> GroupSignature:
    ordered = sorted(shares, key=lambda s: s.index)
    indices = [s.index for s in ordered]
    if len(set(indices)) != len(indices):
        raise ValueError("indices must be pairwise different")
    if len(ordered) < params.t:
        raise ValueError(f"insufficient shares: {len(ordered)} < {params.t}")

    used = ordered[: params.t]
    lambdas = lagrange_at_zero([s.index for s in used], params.q)
    value = 1
    for s, lam in zip(used, lambdas):
        value = value * pow(s.value, lam, params.p) % params.p
    return GroupSignature(value=value, contributors=tuple(used))


def verify_group(m: bytes, pk: GroupPublicKey, V: VerificationVector, sigma: GroupSignature) -> bool:
    params = V.params
    if pk.element != V.elements[0]:
        return False
    indices = [s.index for s in sigma.contributors]
    if len(indices) < params.t or len(set(indices)) != len(indices):
        return False
    if not all(verify_share(m, V, s.index, s) for s in sigma.contributors):
        return False
    return recover(sigma.contributors, params).value == sigma.value


def derive_randomness(sigma: GroupSignature, params: SchemeParams) -> Seed:
    return Seed(hash_digest(params.encode_element(sigma.value)))
