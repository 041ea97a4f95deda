"""Counter-based random streams.

Every random number in the package is a pure function of a key tuple
``(seed, *counters)``.  Values are produced by chaining the SplitMix64
finalizer over the key words, so a draw can be recomputed in isolation,
in any order, on any platform.  Scalar (pure Python) and vectorized
(numpy) paths produce bit-identical results.
"""
import bisect
import math

import numpy as np
from scipy.special import ndtri

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / (1 << 53)

# stream tags keep independent uses of the same seed apart
STREAM_NOISE = 1
STREAM_WAIT = 2


def mix64(z):
    """SplitMix64 finalizer on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def random_bits(seed, *counters):
    """64 pseudo-random bits keyed on ``(seed, *counters)``."""
    h = mix64(seed + GOLDEN)
    for c in counters:
        h = mix64(h ^ mix64(c + GOLDEN))
    return h


def uniform(seed, *counters):
    """Uniform double in the open interval (0, 1)."""
    return ((random_bits(seed, *counters) >> 11) + 0.5) * _INV53


def _mix64_array(z):
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_M1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def random_bits_array(seed, *counters):
    """Vectorized :func:`random_bits`; counters broadcast against each other."""
    arrays = np.broadcast_arrays(*[np.asarray(c, dtype=np.uint64) for c in counters])
    h = np.full(arrays[0].shape if arrays else (), mix64(seed + GOLDEN), dtype=np.uint64)
    golden = np.uint64(GOLDEN)
    with np.errstate(over="ignore"):
        for c in arrays:
            h = _mix64_array(h ^ _mix64_array(c + golden))
    return h


def uniform_array(seed, *counters):
    bits = random_bits_array(seed, *counters)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _INV53


def normal_array(seed, *counters):
    """Standard normal deviates by inverse-CDF of :func:`uniform_array`."""
    return ndtri(uniform_array(seed, *counters))


def poisson_cdf_table(lam, tail=1e-17):
    """Cumulative Poisson(lam) probabilities up to a negligible tail."""
    if lam < 0:
        raise ValueError(f"Poisson rate must be nonnegative, got {lam}")
    if lam == 0:
        return [1.0]
    table = []
    p = math.exp(-lam)
    acc = 0.0
    k = 0
    while True:
        acc += p
        table.append(acc)
        k += 1
        if 1.0 - acc < tail and k > lam:
            break
        if k > lam + 40 * math.sqrt(lam) + 40:
            break
        p *= lam / k
    table[-1] = 1.0
    return table


def poisson_inverse(u, table):
    """Smallest ``k`` with ``u < CDF(k)``."""
    return min(bisect.bisect_right(table, u), len(table) - 1)


class KeyedStream:
    """Precomputed key prefix; ``stream.uniform(*c) == uniform(seed, *prefix, *c)``."""

    def __init__(self, seed, *prefix):
        h = mix64(seed + GOLDEN)
        for c in prefix:
            h = mix64(h ^ mix64(c + GOLDEN))
        self._h = h

    def bits(self, *counters):
        h = self._h
        for c in counters:
            h = mix64(h ^ mix64(c + GOLDEN))
        return h

    def uniform(self, *counters):
        return ((self.bits(*counters) >> 11) + 0.5) * _INV53
