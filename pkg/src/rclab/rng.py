"""Counter-based reproducible random numbers.

Philox streams are keyed by (seed, stream) with one counter block per sweep,
so the uniforms consumed at (seed, stream, sweep) are identical no matter
which sweeps ran before — exact replay for couplings and common random
numbers for paired runs come for free.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def sweep_generator(seed: int, sweep: int, stream: int = 0) -> np.random.Generator:
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, sweep & _MASK64, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def edge_uniforms(seed: int, sweep: int, n: int, stream: int = 0) -> np.ndarray:
    """The n uniforms attached to (seed, stream, sweep)."""
    return sweep_generator(seed, sweep, stream).random(n)
