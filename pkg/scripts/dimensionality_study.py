#!/usr/bin/env python3
"""Accuracy versus hyperspace dimension at the reference federation scale.

Runs the same federated experiment at several hypervector dimensions and
prints a one-row-per-dimension table. Works on the built-in synthetic
mixture or any CSV/HDDS dataset pair.

    python scripts/dimensionality_study.py
    python scripts/dimensionality_study.py --dims 1000,2000,4000,8000,10000 \
        --train isolet_train.csv --test isolet_test.csv --format csv
"""

import argparse
import sys

import numpy as np

from hdfed.data import load_binary, load_delimited, synth_train_test
from hdfed.federated import RoundConfig, partition_iid, run_training
from hdfed.hdc import encode_batch, make_projection


def parse_args():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--dims", default="1000,2000,10000", help="comma-separated hypervector sizes")
    p.add_argument("--train", help="training set path (synthetic mixture when omitted)")
    p.add_argument("--test", help="test set path")
    p.add_argument("--format", choices=("csv", "hdds"), default="csv")
    p.add_argument("--clients", type=int, default=100)
    p.add_argument("--participation", type=float, default=0.2)
    p.add_argument("--rounds", type=int, default=40)
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--quantize", action="store_true", default=True,
                   help="sign-quantized encodings (default on)")
    p.add_argument("--out", help="optional CSV output path")
    return p.parse_args()


def main():
    args = parse_args()
    if args.train:
        load = load_delimited if args.format == "csv" else load_binary
        train = load(args.train)
        test = load(args.test) if args.test else train
    else:
        train, test = synth_train_test(12, 256, 170, 80, mean_separation=4.0, seed=0)

    dims = [int(v) for v in args.dims.split(",")]
    rows = []
    print(f"{'d':>8} {'accuracy':>10} {'rounds':>7}")
    for d in dims:
        phi = make_projection(train.input_dim, d, seed=1)
        tr_h = encode_batch(phi, train.features, args.quantize)
        te_h = encode_batch(phi, test.features, args.quantize)
        cfg = RoundConfig(
            num_clients=args.clients,
            participation=args.participation,
            local_epochs=1,
            local_batch=10,
            rounds=args.rounds,
            seed=args.seed,
        )
        part = partition_iid(train.n_samples, args.clients, seed=args.seed)
        _, records = run_training(
            tr_h, train.labels, te_h, test.labels, train.num_classes, part, cfg
        )
        acc = records[-1].test_accuracy
        rows.append((d, acc))
        print(f"{d:>8} {acc:>10.4f} {args.rounds:>7}")

    if args.out:
        with open(args.out, "w") as f:
            f.write("d,accuracy\n")
            f.writelines(f"{d},{acc:.6f}\n" for d, acc in rows)
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
