#!/usr/bin/env python3
"""Final accuracy under each uplink corruption model, against the clean run.

Compares an error-free uplink with 20% packet drops, -10 dB additive noise,
and 1e-3 bit errors under both the raw float32 codec and the 16-bit
scale-up/down quantizer, all on one seeded task.

    python scripts/channel_robustness.py
    python scripts/channel_robustness.py --clients 10 --dim 1024
"""

import argparse
import sys
import time

from hdfed.channel import ChannelConfig, CodecConfig
from hdfed.data import synth_train_test
from hdfed.federated import RoundConfig, partition_iid, run_training
from hdfed.hdc import encode_batch, make_projection


def parse_args():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--clients", type=int, default=50)
    p.add_argument("--dim", type=int, default=4096)
    p.add_argument("--rounds", type=int, default=15)
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--snr-db", type=float, default=-10.0)
    p.add_argument("--bit-error-rate", type=float, default=1e-3)
    p.add_argument("--packet-loss", type=float, default=0.2)
    return p.parse_args()


def main():
    args = parse_args()
    train, test = synth_train_test(8, 32, 375, 100, mean_separation=3.5, seed=0)
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

    channels = [
        ("ideal", None),
        (
            f"packet loss p_p={args.packet_loss}",
            ChannelConfig(kind="packet_loss", packet_bits=1024, packet_loss_prob=args.packet_loss),
        ),
        (f"awgn {args.snr_db} dB", ChannelConfig(kind="awgn", snr_db=args.snr_db)),
        (
            f"bsc p_e={args.bit_error_rate} float32",
            ChannelConfig(kind="bsc", bit_error_rate=args.bit_error_rate, codec=CodecConfig("float32")),
        ),
        (
            f"bsc p_e={args.bit_error_rate} quant16",
            ChannelConfig(
                kind="bsc",
                bit_error_rate=args.bit_error_rate,
                codec=CodecConfig("quantized_int", bitwidth=16),
            ),
        ),
    ]

    baseline = None
    print(f"{'channel':<28} {'accuracy':>9} {'vs ideal':>9} {'time':>7}")
    for name, channel in channels:
        tic = time.time()
        _, records = run_training(
            tr_h, train.labels, te_h, test.labels, 8, part, cfg, channel
        )
        acc = records[-1].test_accuracy
        if baseline is None:
            baseline = acc
        print(f"{name:<28} {acc:>9.4f} {acc - baseline:>+9.4f} {time.time() - tic:>6.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
