#!/usr/bin/env python3
"""Accuracy versus uplink size for the three size-reduction strategies.

Runs the baseline full-model uplink, binarized differential transmission,
10% subsampling, and 90% sparsification on one seeded task, reporting final
accuracy and measured uplink bytes per round.

    python scripts/strategy_tradeoffs.py
    python scripts/strategy_tradeoffs.py --rounds 100 --subsample-rate 0.5
"""

import argparse
import sys

from hdfed.data import synth_train_test
from hdfed.federated import RoundConfig, partition_iid, run_training
from hdfed.hdc import encode_batch, make_projection
from hdfed.strategies import StrategyConfig


def parse_args():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--clients", type=int, default=20)
    p.add_argument("--dim", type=int, default=2000)
    p.add_argument("--rounds", type=int, default=60)
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--subsample-rate", type=float, default=0.1)
    p.add_argument("--sparsity", type=float, default=0.9)
    return p.parse_args()


def main():
    args = parse_args()
    train, test = synth_train_test(10, 32, 300, 100, mean_separation=3.6, seed=0)
    phi = make_projection(32, args.dim, seed=1)
    tr_h = encode_batch(phi, train.features)
    te_h = encode_batch(phi, test.features)
    cfg = RoundConfig(
        num_clients=args.clients,
        participation=1.0,
        local_epochs=1,
        local_batch=10,
        rounds=args.rounds,
        seed=args.seed,
    )
    part = partition_iid(train.n_samples, args.clients, seed=args.seed)

    strategies = [
        ("baseline (full model)", StrategyConfig()),
        ("binary differential", StrategyConfig(kind="binary_diff")),
        (f"{args.subsample_rate:.0%} subsample", StrategyConfig(kind="subsample", rate=args.subsample_rate)),
        (f"{args.sparsity:.0%} sparsify", StrategyConfig(kind="sparsify", sparsity=args.sparsity)),
    ]

    base_bytes = None
    base_acc = None
    print(f"{'strategy':<24} {'accuracy':>9} {'vs base':>8} {'uplink/round':>13} {'reduction':>10}")
    for name, strategy in strategies:
        _, records = run_training(
            tr_h, train.labels, te_h, test.labels, 10, part, cfg, None, strategy
        )
        acc = records[-1].test_accuracy
        per_round = records[-1].uplink_bytes
        if base_bytes is None:
            base_bytes, base_acc = per_round, acc
        print(
            f"{name:<24} {acc:>9.4f} {acc - base_acc:>+8.4f} "
            f"{per_round:>12,}B {base_bytes / per_round:>9.1f}x"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
