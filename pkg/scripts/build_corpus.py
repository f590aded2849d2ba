"""Build a training corpus: synthesize, filter, decontaminate, write to disk.

Example:
    python3 scripts/build_corpus.py --count 600 --seed 17 --out /tmp/corpus
"""

import argparse
import json
from pathlib import Path

from kernelforge.data.catalog import builtin_catalog
from kernelforge.data.dataset import composition_report, write_dataset
from kernelforge.data.filters import filter_corpus, filter_statistics
from kernelforge.data.similarity import decontaminate
from kernelforge.data.synth import sample_corpus
from kernelforge.sim.executor import SimulatedExecutor


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=600)
    ap.add_argument("--seed", type=int, default=17)
    ap.add_argument("--holdout", type=int, default=50, help="eval split size, drawn first")
    ap.add_argument("--threshold", type=float, default=0.9)
    ap.add_argument("--out", type=Path, required=True)
    args = ap.parse_args()

    catalog = builtin_catalog()
    tasks = sample_corpus(catalog, count=args.count, seed=args.seed)
    print("composition:", json.dumps(composition_report(tasks)))

    kept, verdicts = filter_corpus(tasks, SimulatedExecutor())
    print("filtering:", json.dumps(filter_statistics(verdicts)))

    eval_split = kept[: args.holdout]
    train_split = kept[args.holdout :]
    train, removed, histogram = decontaminate(train_split, eval_split, args.threshold)
    print(f"decontamination: removed {len(removed)} of {len(train_split)}")
    print("similarity histogram:", histogram)

    write_dataset(train, args.out / "train")
    write_dataset(eval_split, args.out / "eval")
    print(f"wrote {len(train)} train / {len(eval_split)} eval tasks under {args.out}")


if __name__ == "__main__":
    main()
