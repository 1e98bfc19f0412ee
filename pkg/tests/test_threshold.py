from itertools import combinations

import pytest

from backend.consensus.primitives import encode_counter, hash_digest
from backend.consensus.threshold import (
    TOY_G,
    TOY_P,
    TOY_Q,
    DLEQProof,
    SchemeParams,
    SignatureShare,
    dealer_polynomial,
    default_threshold,
    derive_randomness,
    dkg,
    lagrange_at_zero,
    public_key_share,
    recover,
    sign_share,
    verify_group,
    verify_share,
)
from backend.errors import DKGError


def _seeds(n, tag=b"test"):
    return [hash_digest(tag + encode_counter(i)) for i in range(1, n + 1)]


def _setup(n, t=None):
    params = SchemeParams.preset("toy", n=n, t=t)
    return params, dkg(params, _seeds(n))


def test_toy_preset_is_a_safe_prime_group():
    assert TOY_P == 2 * TOY_Q + 1
    assert pow(TOY_G, TOY_Q, TOY_P) == 1


def test_default_threshold_is_smallest_majority():
    assert [default_threshold(n) for n in (1, 3, 4, 5, 7, 10)] == [1, 2, 3, 3, 4, 6]


def test_scheme_params_validation():
    with pytest.raises(ValueError):
        SchemeParams(p=TOY_P, q=TOY_Q, g=1, t=1, n=1)
    with pytest.raises(ValueError):
        SchemeParams.preset("toy", n=3, t=4)
    with pytest.raises(ValueError):
        SchemeParams.preset("nope", n=3)


@pytest.mark.parametrize("n", [3, 5, 7])
def test_dkg_group_secret_matches_verification_vector(n):
    params, result = _setup(n)
    t = params.t
    assert t == n // 2 + 1
    assert result.disqualified == frozenset()

    # polynomial oracle: the group secret is the sum of the dealers' constant terms
    secret = sum(dealer_polynomial(params, seed)[0] for seed in _seeds(n)) % params.q
    assert pow(params.g, secret, params.p) == result.verification.elements[0]

    # and any t shares interpolate to it
    for subset in combinations(range(1, n + 1), t):
        lambdas = lagrange_at_zero(list(subset), params.q)
        interpolated = sum(lam * result.share_for(i).scalar for lam, i in zip(lambdas, subset)) % params.q
        assert interpolated == secret


@pytest.mark.parametrize("n", [3, 5, 7])
def test_secret_shares_match_public_key_shares(n):
    params, result = _setup(n)
    for i in range(1, n + 1):
        assert pow(params.g, result.share_for(i).scalar, params.p) == public_key_share(result.verification, i)


def test_cheating_dealer_is_disqualified_and_scheme_still_signs():
    params = SchemeParams.preset("toy", n=5)
    tamper = lambda dealer, j, share: (share + 1) % params.q if dealer == 2 and j == 1 else share  # noqa: E731
    result = dkg(params, _seeds(5), tamper=tamper)
    assert result.disqualified == frozenset({2})
    assert result.qualified == (1, 3, 4, 5)

    V = result.verification
    m = b"after a complaint"
    shares = [sign_share(m, result.share_for(i), V) for i in range(1, 6)]
    assert all(verify_share(m, V, s.index, s) for s in shares)
    sigma = recover(shares[2:], params)
    assert verify_group(m, V.public_key, V, sigma)


def test_dkg_fails_without_enough_qualified_dealers():
    params = SchemeParams.preset("toy", n=3)
    tamper = lambda dealer, j, share: share + 1 if dealer in (1, 2) and j == 3 else share  # noqa: E731
    with pytest.raises(DKGError):
        dkg(params, _seeds(3), tamper=tamper)


def test_dkg_needs_one_seed_per_dealer():
    params = SchemeParams.preset("toy", n=3)
    with pytest.raises(ValueError):
        dkg(params, _seeds(2))


def test_group_signature_is_unique_across_subsets():
    params, result = _setup(5, t=3)
    V = result.verification
    equalities = 0
    for k in range(20):
        m = b"message-" + encode_counter(k)
        shares = [sign_share(m, result.share_for(i), V) for i in range(1, 6)]
        values = [recover(subset, params).value for subset in combinations(shares, 3)]
        assert len(values) == 10
        equalities += sum(v == values[0] for v in values)
    assert equalities == 200


def test_recovery_uses_first_t_shares_by_index():
    params, result = _setup(5)
    V = result.verification
    shares = [sign_share(b"m", result.share_for(i), V) for i in (5, 2, 4, 1)]
    sigma = recover(shares, params)
    assert sigma.signers == (1, 2, 4)
    others = [recover(subset, params) for subset in combinations(shares, 3) if subset != tuple(shares[1:])]
    assert len(others) == 3
    assert all(other.value == sigma.value for other in others)


def test_recover_rejects_duplicates_and_short_sets():
    params, result = _setup(5)
    V = result.verification
    s1 = sign_share(b"m", result.share_for(1), V)
    s2 = sign_share(b"m", result.share_for(2), V)
    with pytest.raises(ValueError, match="insufficient"):
        recover([s1, s2], params)
    with pytest.raises(ValueError, match="pairwise"):
        recover([s1, s1, s2], params)


def test_verify_share_rejects_forgeries():
    params, result = _setup(5)
    V = result.verification
    good = sign_share(b"m", result.share_for(3), V)
    assert verify_share(b"m", V, 3, good)
    assert not verify_share(b"other", V, 3, good)
    assert not verify_share(b"m", V, 4, good)

    bumped = SignatureShare(index=3, value=good.value * params.g % params.p, proof=good.proof)
    assert not verify_share(b"m", V, 3, bumped)
    bad_proof = SignatureShare(index=3, value=good.value, proof=DLEQProof(good.proof.challenge, 0))
    assert not verify_share(b"m", V, 3, bad_proof)


def test_verify_group_checks_message_and_key():
    params, result = _setup(3)
    V = result.verification
    shares = [sign_share(b"m", result.share_for(i), V) for i in (1, 2)]
    sigma = recover(shares, params)
    assert verify_group(b"m", V.public_key, V, sigma)
    assert not verify_group(b"x", V.public_key, V, sigma)

    other_V = dkg(params, _seeds(3, tag=b"other")).verification
    assert not verify_group(b"m", other_V.public_key, V, sigma)


def test_signing_with_a_foreign_share_fails():
    _, a = _setup(3)
    params = SchemeParams.preset("toy", n=3)
    b = dkg(params, _seeds(3, tag=b"b"))
    with pytest.raises(ValueError):
        sign_share(b"m", b.share_for(1), a.verification)


def test_randomness_is_deterministic_per_signature():
    params, result = _setup(3)
    V = result.verification
    sigma = recover([sign_share(b"m", result.share_for(i), V) for i in (1, 2, 3)], params)
    assert derive_randomness(sigma, params) == derive_randomness(sigma, params)
    assert len(derive_randomness(sigma, params)) == 32


def test_secret_share_repr_hides_scalar():
    _, result = _setup(3)
    assert "hidden" in repr(result.share_for(1))
    assert str(result.share_for(1).scalar) not in repr(result.share_for(1))
