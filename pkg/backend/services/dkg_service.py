"""Walk-through of a key generation round: deal, complain, combine, sign and recover."""
from itertools import combinations
from typing import Dict, List, Optional

from backend.consensus.primitives import encode_counter, hash_digest
from backend.consensus.threshold import (
    SchemeParams,
    default_threshold,
    dkg,
    recover,
    sign_share,
    verify_group,
    verify_share,
)
from backend.utils.helpers import get_logger

logger = get_logger("dkg")

DEMO_MESSAGE = b"threshold-relay demo"


def _seeds(n: int, seed: int) -> List[bytes]:
    return [hash_digest(b"dkg-demo" + encode_counter(seed) + encode_counter(i)) for i in range(1, n + 1)]


def demo(n: int, t: Optional[int] = None, preset: str = "toy", seed: int = 0, cheater: Optional[int] = None) -> Dict:
    """
    Run a DKG for (n, t), sign DEMO_MESSAGE with every member, and recover the
    group signature from every t-subset. With `cheater`, that dealer hands
    member 1 a corrupted share and must end up disqualified.
    """
    t = default_threshold(n) if t is None else t
    params = SchemeParams.preset(preset, n=n, t=t)

    tamper = None
    if cheater is not None:
        if not 1 <= cheater <= n:
            raise ValueError(f"cheating dealer {cheater} outside 1..{n}")
        tamper = lambda dealer, j, share: (share + 1) % params.q if dealer == cheater and j == 1 else share  # noqa: E731

    result = dkg(params, _seeds(n, seed), tamper=tamper)
    V = result.verification
    shares = [sign_share(DEMO_MESSAGE, result.share_for(i), V) for i in range(1, n + 1)]
    valid = sum(verify_share(DEMO_MESSAGE, V, s.index, s) for s in shares)

    signatures = {recover(subset, params).value for subset in combinations(shares, t)}
    sigma = recover(shares, params)
    ok = verify_group(DEMO_MESSAGE, V.public_key, V, sigma)

    logger.info(f"DKG demo n={n} t={t}: {len(result.qualified)} qualified dealers, unique={len(signatures) == 1}")
    return {
        "n": n,
        "t": t,
        "preset": preset,
        "qualified": list(result.qualified),
        "disqualified": sorted(result.disqualified),
        "public_key": format(V.elements[0], "x"),
        "valid_shares": valid,
        "subsets": sum(1 for _ in combinations(range(n), t)),
        "unique_signature": len(signatures) == 1,
        "group_signature": format(sigma.value, "x"),
        "verified": ok,
    }
