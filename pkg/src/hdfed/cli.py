"""Command-line entry points: train, encode, eval, sweep.

``train`` runs one federated experiment from a flat key-value config file
(``--set section.key=value`` overrides any key), writes per-round metrics and
the final model. ``encode`` projects a dataset into hyperspace and stores it
in the binary dataset format. ``eval`` scores a stored model on a dataset.
``sweep`` runs a cartesian grid of config overrides, one metrics file per
cell plus a summary table.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
import traceback

import numpy as np

from . import data as dio
from .channel import read_model, write_model
from .config import ConfigError, load_config
from .harness import run_experiment, write_metrics
from .hdc import DimensionError, EncoderConfig, encode_batch, predict_batch, projection_for

# Sweep shorthands accepted next to full dotted keys.
_GRID_ALIASES = {
    "E": "round.epochs",
    "B": "round.batch",
    "C": "round.participation",
    "snr_db": "channel.snr_db",
    "p_e": "channel.bit_error_rate",
    "rate": "strategy.rate",
    "S": "strategy.sparsity",
    "d": "encoder.dim",
}


def _parse_overrides(pairs: list[str] | None) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"override must look like key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _load_dataset(path: str, fmt: str, has_header: bool, split: str) -> dio.Dataset:
    if fmt == "csv":
        return dio.load_delimited(path, has_header=has_header, split=split)
    if fmt == "hdds":
        return dio.load_binary(path, split=split)
    raise ConfigError(f"unknown dataset format {fmt!r}")


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config, _parse_overrides(args.set))
    result = run_experiment(config)
    write_metrics(result.records, config.metrics_path, config.target_accuracy)
    write_model(result.model, config.model_path, config.channel.codec)
    final = result.records[-1]
    print(
        f"completed {len(result.records)} rounds: "
        f"accuracy={final.test_accuracy:.4f} train_loss={final.train_loss:.4f}"
    )
    print(f"metrics -> {config.metrics_path}")
    print(f"model   -> {config.model_path}")
    return 0


def cmd_encode(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.data, args.format, args.has_header, "train")
    enc = EncoderConfig(
        input_dim=dataset.input_dim,
        hd_dim=args.dim,
        seed=args.seed,
        quantize=args.quantize,
    )
    phi = projection_for(enc)
    hvs = encode_batch(phi, dataset.features, enc.quantize)
    encoded = dio.Dataset(hvs, dataset.labels, dataset.num_classes, split=dataset.split)
    dio.save_binary(encoded, args.out)
    print(f"encoded {dataset.n_samples} samples at d={args.dim} -> {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model, _ = read_model(args.model)
    dataset = _load_dataset(args.data, args.format, args.has_header, "test")
    if args.encoded:
        hvs = dataset.features
    else:
        enc = EncoderConfig(
            input_dim=dataset.input_dim,
            hd_dim=args.dim,
            seed=args.seed,
            quantize=args.quantize,
        )
        phi = projection_for(enc)
        hvs = encode_batch(phi, dataset.features, enc.quantize)
    if hvs.shape[1] != model.hd_dim:
        raise DimensionError(
            f"model dimension {model.hd_dim} does not match encoded dimension {hvs.shape[1]}"
        )
    preds = predict_batch(model, hvs)
    overall = float(np.mean(preds == dataset.labels))
    print(f"accuracy {overall:.4f} on {dataset.n_samples} samples")
    for k in range(dataset.num_classes):
        mask = dataset.labels == k
        if mask.any():
            acc_k = float(np.mean(preds[mask] == k))
            print(f"class {k}: accuracy {acc_k:.4f} ({int(mask.sum())} samples)")
        else:
            print(f"class {k}: no samples")
    return 0


def _grid_values(specs: list[str]) -> list[tuple[str, list[str]]]:
    grid: list[tuple[str, list[str]]] = []
    for spec in specs or []:
        if "=" not in spec:
            raise ConfigError(f"grid spec must look like key=v1,v2,..., got {spec!r}")
        key, raw = spec.split("=", 1)
        key = _GRID_ALIASES.get(key.strip(), key.strip())
        values = [v.strip() for v in raw.split(",") if v.strip()]
        if not values:
            raise ConfigError(f"grid spec {spec!r} lists no values")
        grid.append((key, values))
    return grid


def cmd_sweep(args: argparse.Namespace) -> int:
    base_overrides = _parse_overrides(args.set)
    grid = _grid_values(args.grid)
    os.makedirs(args.out_dir, exist_ok=True)
    keys = [k for k, _ in grid]
    combos = list(itertools.product(*[v for _, v in grid])) if grid else [()]
    summary_lines = [",".join(["cell", *keys, "status", "final_accuracy", "uplink_bytes_cum"])]
    for cell_index, combo in enumerate(combos):
        overrides = dict(base_overrides)
        overrides.update(dict(zip(keys, combo)))
        tag = "_".join(f"{k.split('.')[-1]}={v}" for k, v in zip(keys, combo))
        name = f"cell{cell_index:03d}" + (f"_{tag}" if tag else "")
        metrics_path = os.path.join(args.out_dir, f"{name}.csv")
        overrides["output.metrics"] = metrics_path
        overrides["output.model"] = os.path.join(args.out_dir, f"{name}.hdfm")
        try:
            config = load_config(args.config, overrides)
            result = run_experiment(config)
            write_metrics(result.records, config.metrics_path, config.target_accuracy)
            write_model(result.model, config.model_path, config.channel.codec)
            final = result.records[-1]
            uplink = sum(r.uplink_bytes for r in result.records)
            summary_lines.append(
                ",".join([name, *combo, "ok", f"{final.test_accuracy:.6f}", str(uplink)])
            )
            print(f"{name}: accuracy={final.test_accuracy:.4f}")
        except Exception as exc:  # record the failure, keep sweeping
            summary_lines.append(",".join([name, *combo, "error", "", ""]))
            print(f"{name}: failed: {exc}", file=sys.stderr)
    summary_path = os.path.join(args.out_dir, "summary.csv")
    with open(summary_path, "w", encoding="utf-8") as f:
        f.write("\n".join(summary_lines) + "\n")
    print(f"summary -> {summary_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdfed")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one federated training experiment")
    p_train.add_argument("--config", help="flat key-value config file")
    p_train.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )
    p_train.set_defaults(func=cmd_train)

    p_encode = sub.add_parser("encode", help="project a dataset into hyperspace")
    p_encode.add_argument("--data", required=True)
    p_encode.add_argument("--format", choices=("csv", "hdds"), default="csv")
    p_encode.add_argument("--has-header", action="store_true")
    p_encode.add_argument("--dim", type=int, default=10000)
    p_encode.add_argument("--seed", type=int, default=7)
    p_encode.add_argument("--quantize", action="store_true")
    p_encode.add_argument("--out", required=True)
    p_encode.set_defaults(func=cmd_encode)

    p_eval = sub.add_parser("eval", help="score a stored model on a dataset")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--format", choices=("csv", "hdds"), default="csv")
    p_eval.add_argument("--has-header", action="store_true")
    p_eval.add_argument("--encoded", action="store_true", help="data is already encoded")
    p_eval.add_argument("--dim", type=int, default=10000)
    p_eval.add_argument("--seed", type=int, default=7)
    p_eval.add_argument("--quantize", action="store_true")
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="run a grid of config overrides")
    p_sweep.add_argument("--config", help="base config file")
    p_sweep.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_sweep.add_argument(
        "--grid",
        action="append",
        metavar="KEY=V1,V2,...",
        help="grid values for one key; E, B, C, snr_db, p_e, rate, S, d are shorthands",
    )
    p_sweep.add_argument("--out-dir", required=True)
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DimensionError, dio.DataFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
