"""
Benchmark corpus loading and sampling (distractor setting).
"""

from packages.core.corpus.loaders import (
    apply_reasoning_labels,
    dump_corpus,
    load_corpus,
    load_hotpotqa,
    load_musique,
    load_reasoning_labels,
    musique_hop_count,
)
from packages.core.corpus.sampling import SplitMix64, sample_indices, sample_subset

__all__ = [
    "apply_reasoning_labels",
    "dump_corpus",
    "load_corpus",
    "load_hotpotqa",
    "load_musique",
    "load_reasoning_labels",
    "musique_hop_count",
    "SplitMix64",
    "sample_indices",
    "sample_subset",
]
