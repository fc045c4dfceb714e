"""Counter-based uniform variates keyed by (seed, stream, counter).

Every draw is a pure function of its key, so per-link streams never
interfere and a run can be replayed draw-by-draw.  The compiled kernels
implement the same mixing function bit-for-bit.
"""

import numpy as np

MASK = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
M1 = 0xBF58476D1CE4E5B9
M2 = 0x94D049BB133111EB
INV_2_53 = 1.0 / 9007199254740992.0

# stream ids: links use their own index, flows and bookkeeping live far above
FLOW_STREAM = 1 << 40
INIT_STREAM = (1 << 41) + 1


def _mix(z):
    z = ((z ^ (z >> 30)) * M1) & MASK
    z = ((z ^ (z >> 27)) * M2) & MASK
    return z ^ (z >> 31)


def uniform(seed, stream, counter):
    """Uniform variate in [0, 1) for one key."""
    h = _mix((seed + GOLDEN * (stream + 1)) & MASK)
    h = _mix(h ^ ((counter * M1 + GOLDEN) & MASK))
    return (h >> 11) * INV_2_53


def _mix_np(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(M2)
    return z ^ (z >> np.uint64(31))


def uniform_array(seed, stream, counters):
    """Vectorised :func:`uniform` over an array of counters."""
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix_np(np.uint64((seed + GOLDEN * (stream + 1)) & MASK))
        h = _mix_np(base ^ (counters * np.uint64(M1) + np.uint64(GOLDEN)))
    return (h >> np.uint64(11)).astype(np.float64) * INV_2_53
