"""Seed-paired runs with and without augmentation on the synthetic corpus.

Defaults are shortened so the script finishes in a few minutes; pass
--full for the 30-epoch, five-seed protocol.
"""

import argparse
from dataclasses import replace

from repaug.experiments import Protocol, median, paired_gain, run_arms

ap = argparse.ArgumentParser()
ap.add_argument("--full", action="store_true")
args = ap.parse_args()

protocol = Protocol() if args.full else replace(Protocol(), epochs=8, seeds=(0, 1))
data = protocol.corpus()
plain = run_arms(data, protocol, aug_enabled=False)
aug = run_arms(data, protocol)
for a, b in zip(aug, plain):
    print(f"seed {a.seed}: test MRR {b.best_test_mrr:.4f} -> {a.best_test_mrr:.4f}  "
          f"norm std {b.norm_std:.3f} -> {a.norm_std:.3f}")
print(f"median gain {median(paired_gain(aug, plain)):+.4f}")
