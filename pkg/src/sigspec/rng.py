"""Deterministic random streams.

All randomness in the package flows through Philox4x64, a counter-based
64-bit generator whose output is independent of platform word size and
thread count.  Streams are keyed by integer tuples: the tuple is fed to
``numpy.random.SeedSequence``, which hashes it into the Philox key, so
``stream(master_seed, class_code, index)`` always yields the same draws.
"""

from __future__ import annotations

import numpy as np

# Sub-stream tags: parameter sampling and sample synthesis draw from
# distinct children of the same per-item seed.
PARAMS_STREAM = 0
SYNTH_STREAM = 1


def stream(*key: int) -> np.random.Generator:
    """Philox-backed generator keyed by a tuple of non-negative integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


def derive_seed(*key: int) -> int:
    """64-bit child seed derived by hashing an integer tuple."""
    return int(np.random.SeedSequence(list(key)).generate_state(1, np.uint64)[0])
