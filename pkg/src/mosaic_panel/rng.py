"""Counter-based random streams for randomization replicates.

Replicate ``r`` draws its sign bits from a Philox stream keyed by the root
seed with ``r`` placed in the high word of the counter, so replicate ``r``
sees the same bits no matter how many replicates are requested, in what
order they are evaluated, or how the work is split.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def normalize_seed(seed: int | None) -> int:
    """Map ``seed`` to a 64-bit unsigned integer; ``None`` draws one from OS entropy."""
    if seed is None:
        return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return seed & _MASK64


def replicate_stream(seed: int, r: int) -> np.random.Generator:
    """Independent generator for replicate ``r`` under root ``seed``."""
    return np.random.Generator(np.random.Philox(key=[seed, 0], counter=[0, 0, r, 0]))


def sign_bits(seed: int, R: int, M: int, start: int = 0) -> np.ndarray:
    """Boolean ``(R, M)`` array; row ``r`` holds ``B_1..B_M`` for replicate ``start + r``.

    Each bit is Bernoulli(1/2).
    """
    seed = normalize_seed(seed)
    words = -(-M // 64)
    out = np.empty((R, words), dtype=np.uint64)
    for i in range(R):
        bg = np.random.Philox(key=[seed, 0], counter=[0, 0, start + i, 0])
        out[i] = bg.random_raw(words)
    bits = np.unpackbits(out.view(np.uint8), axis=1, bitorder="little")
    return bits[:, :M].astype(bool)


def child_seeds(seed: int, n: int) -> np.ndarray:
    """``n`` statistically independent 64-bit seeds derived from ``seed``."""
    ss = np.random.SeedSequence(normalize_seed(seed))
    return np.array(
        [int(c.generate_state(1, np.uint64)[0]) for c in ss.spawn(n)], dtype=np.uint64
    )
