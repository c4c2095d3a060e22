"""
Sampling Streams
Counter-based random streams and exact binomial intervals for Monte Carlo evidence
"""

from typing import Tuple

import numpy as np
from scipy import stats

from errors import DomainError


_U64 = (1 << 64) - 1
SUBSTREAM_BITS = 8

# Sub-streams of one campaign stream
DRAWS = 0
UNIFORMS = 1
COEFFICIENTS = 2


def make_generator(seed: int, stream: int = 0, substream: int = DRAWS) -> np.random.Generator:
    """
    Philox generator keyed by (seed, stream, substream).

    Philox is counter-based: the key fixes the sequence and the counter walks
    it. The upper key word packs the stream above SUBSTREAM_BITS sub-stream
    bits, so every (seed, stream, substream) triple gets its own key and two
    campaigns with different stream indices never share a draw.
    """
    if seed < 0 or stream < 0:
        raise DomainError(f"seed and stream must be nonnegative, got seed={seed}, stream={stream}")
    if not 0 <= substream < (1 << SUBSTREAM_BITS):
        raise DomainError(f"substream must lie in [0, {1 << SUBSTREAM_BITS}), got {substream}")
    if stream >= (1 << (64 - SUBSTREAM_BITS)):
        raise DomainError(f"stream must be below 2^{64 - SUBSTREAM_BITS}, got {stream}")
    word = (int(stream) << SUBSTREAM_BITS) | int(substream)
    key = (int(seed) & _U64) | (word << 64)
    return np.random.Generator(np.random.Philox(key=key))


def confidence_level(multiplier: float) -> float:
    """Two-sided Gaussian coverage of +/- multiplier standard errors (3 -> 0.9973)"""
    return float(1.0 - 2.0 * stats.norm.sf(multiplier))


def clopper_pearson(successes: int, trials: int, confidence: float) -> Tuple[float, float]:
    """
    Exact (Clopper-Pearson) interval for a binomial proportion.

    Returns (low, high) with 0 <= low <= high <= 1.
    """
    if trials <= 0:
        raise DomainError(f"trials must be positive, got {trials}")
    if not 0 <= successes <= trials:
        raise DomainError(f"successes must lie in [0, {trials}], got {successes}")
    if not 0.0 < confidence < 1.0:
        raise DomainError(f"confidence must lie in (0, 1), got {confidence}")

    alpha = 1.0 - confidence
    low = 0.0 if successes == 0 else float(stats.beta.ppf(alpha / 2, successes, trials - successes + 1))
    high = 1.0 if successes == trials else float(stats.beta.ppf(1 - alpha / 2, successes + 1, trials - successes))
    return low, high


def binomial_p_value(successes: int, trials: int, probability: float) -> float:
    """P(Binomial(trials, probability) >= successes): evidence against a claimed tail bound"""
    if successes <= 0:
        return 1.0
    probability = min(max(probability, 0.0), 1.0)
    return float(stats.binom.sf(successes - 1, trials, probability))


def proportion_standard_error(estimate: float, trials: int) -> float:
    return float(np.sqrt(max(estimate * (1.0 - estimate), 0.0) / trials))
