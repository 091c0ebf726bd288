#!/usr/bin/env python3
"""
Freeze a sampled subset so tests can check the sampler against it.

Usage:
  Ids of the 200-question dev sample:
    python scripts/freeze_sample_ids.py --dataset-path data/hotpot_dev_distractor_v1.json \
        --n 200 --seed 0 --out tests/fixtures/hotpot_dev_sample_ids.json

  Raw indices only (no dataset needed):
    python scripts/freeze_sample_ids.py --size 1000 --n 200 --seed 0 \
        --out tests/fixtures/sample_indices_seed0.json
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

# Add project root to path for direct script execution.
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from packages.core.corpus import load_corpus, sample_indices, sample_subset
from packages.core.models import Dataset
from packages.core.storage.fixtures import write_text_atomic


logger = logging.getLogger("freeze_sample_ids")


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Write a frozen sample list for regression tests")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--dataset-path", help="Dataset file to sample example ids from")
    source.add_argument("--size", type=int, help="Sample raw indices from range(size)")
    parser.add_argument("--dataset", choices=[d.value for d in Dataset], default=Dataset.HOTPOTQA.value)
    parser.add_argument("--n", type=int, default=200, help="Sample size")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="JSON file to write")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging verbosity",
    )
    return parser.parse_args()


def main() -> int:
    args = parse_args()
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
    )

    if args.size is not None:
        payload = {"size": args.size, "n": args.n, "seed": args.seed, "indices": sample_indices(args.size, args.n, args.seed)}
    else:
        corpus = load_corpus(args.dataset_path, Dataset(args.dataset))
        sample = sample_subset(corpus, args.n, args.seed)
        logger.info("Sampled %s of %s examples (seed=%s)", len(sample), len(corpus), args.seed)
        payload = {
            "dataset_path": args.dataset_path,
            "dataset": args.dataset,
            "n": args.n,
            "seed": args.seed,
            "ids": sample.ids,
        }

    write_text_atomic(args.out, json.dumps(payload) + "\n")
    logger.info("Wrote %s", args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
