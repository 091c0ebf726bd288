"""
Deterministic subset sampling.

The generator is SplitMix64 (Steele, Lea & Flood), chosen because it has
published reference vectors and a few lines of integer arithmetic, so the
same sample can be reproduced from any language:

    seed 1234567 -> 6457827717110365317, 3203168211198807973, 9817491932198370423, ...

Sampling runs a Fisher-Yates shuffle over the corpus indices (i from n-1
down to 1, j = next() mod (i + 1)), takes the first ``n`` positions and
returns them in ascending original order.
"""

from __future__ import annotations

from packages.core.errors import SampleBoundsError
from packages.core.models import Corpus

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """64-bit SplitMix generator."""

    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)


def sample_indices(size: int, n: int, seed: int) -> list[int]:
    """Ascending indices of a size-``n`` sample drawn from ``range(size)``."""
    if n <= 0 or n > size:
        raise SampleBoundsError(f"sample size {n} outside (0, {size}]")
    rng = SplitMix64(seed)
    order = list(range(size))
    for i in range(size - 1, 0, -1):
        j = rng.next_u64() % (i + 1)
        order[i], order[j] = order[j], order[i]
    return sorted(order[:n])


def sample_subset(corpus: Corpus, n: int, seed: int) -> Corpus:
    """Deterministic pseudo-random subset of ``corpus``, original order kept."""
    indices = sample_indices(len(corpus), n, seed)
    return Corpus(
        dataset=corpus.dataset,
        examples=tuple(corpus.examples[i] for i in indices),
    )
