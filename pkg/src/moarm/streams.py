"""Counter-based random streams.

Every random draw in the package comes from a Philox generator addressed by
(seed, purpose, a, b, c).  Streams are stateless to construct, so any worker
can re-derive the exact generator for a row, a trajectory, or a training step
without coordinating with other workers.  This is what makes mask suites,
shuffles, and the bucketed sampler independent of execution order.

Key layout: Philox takes a 128-bit key and a 256-bit counter.  We put
(seed, purpose) in the key and (a, b, c) in the upper counter words; the low
word is left for the generator to increment, and draws would have to exceed
2**64 blocks before colliding with a sibling stream.
"""

from __future__ import annotations

import numpy as np

_U64 = (1 << 64) - 1

# Purpose tags. Fixed for the life of the on-disk formats: changing them
# changes every derived artifact.
MASK = 1
SPLIT = 2
INIT = 3
SHUFFLE = 4
CONTEXT = 5
COMPLETION = 6
TRAJECTORY = 7
SESSION = 8
SYNTH = 9


def stream(seed: int, purpose: int = 0, a: int = 0, b: int = 0, c: int = 0) -> np.random.Generator:
    """Derive the generator addressed by (seed, purpose, a, b, c)."""
    key = np.array([seed & _U64, purpose & _U64], dtype=np.uint64)
    counter = np.array([0, c & _U64, a & _U64, b & _U64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def derive_seed(seed: int, purpose: int, a: int = 0) -> int:
    """Collapse a stream address to a single integer seed (for sub-configs)."""
    return int(stream(seed, purpose, a).integers(0, 2**63 - 1))
