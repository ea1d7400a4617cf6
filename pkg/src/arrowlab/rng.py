"""Counter-based hashing used for every random draw in the package.

All randomness is a pure function of ``(seed, counters...)`` so that arrows,
weights and tower refinements can be queried in any order, from any worker,
and reproduced bit-for-bit.  The mixing function is the splitmix64 finalizer;
a multi-word key is folded left to right::

    h = mix64(seed)
    for c in counters:
        h = mix64(h ^ (c mod 2**64) + GOLDEN)

The scalar and numpy paths produce identical 64-bit outputs.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """splitmix64 finalizer on a Python int (taken mod 2**64)."""
    z = (z + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _C1) & MASK64
    z = ((z ^ (z >> 27)) * _C2) & MASK64
    return z ^ (z >> 31)


def hash_key(seed: int, *counters: int) -> int:
    h = mix64(seed & MASK64)
    for c in counters:
        h = mix64(h ^ ((c & MASK64) + GOLDEN & MASK64))
    return h


def uniform(seed: int, *counters: int) -> float:
    """Uniform double in [0, 1) from the top 53 bits of ``hash_key``."""
    return (hash_key(seed, *counters) >> 11) * (1.0 / (1 << 53))


def derive_seed(seed: int, index: int) -> int:
    """Child seed for an indexed sub-stream (planes, sweeps, shards)."""
    return hash_key(seed, 0x5EED, index)


# -- vectorised variants -------------------------------------------------

_U = np.uint64


def _mix64_np(z):
    z = z + _U(GOLDEN)
    z = (z ^ (z >> _U(30))) * _U(_C1)
    z = (z ^ (z >> _U(27))) * _U(_C2)
    return z ^ (z >> _U(31))


def hash_key_np(seed: int, *counters):
    """Array version of :func:`hash_key`; counters broadcast together."""
    arrays = [np.asarray(c, dtype=np.int64).astype(np.uint64) for c in counters]
    shape = np.broadcast_shapes(*(a.shape for a in arrays)) if arrays else ()
    with np.errstate(over="ignore"):
        h = np.full(shape, mix64(seed & MASK64), dtype=np.uint64)
        for a in arrays:
            h = _mix64_np(h ^ (a + _U(GOLDEN)))
    return h


def uniform_np(seed: int, *counters):
    h = hash_key_np(seed, *counters)
    return (h >> _U(11)).astype(np.float64) * (1.0 / (1 << 53))
