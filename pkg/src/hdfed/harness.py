"""Experiment assembly: data loading, encoding, training, metric persistence.

Sits between the config layer and the library: builds datasets per the data
spec, encodes them, partitions, runs the federated loop, and writes the
metrics file with the fixed header

    round,accuracy,train_loss,uplink_bytes_cum,downlink_bytes_cum,participants,wall_ms

All columns except wall_ms are pure functions of (config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import data as dio
from .config import ConfigError, ExperimentConfig
from .federated import Partition, RoundRecord, partition_iid, partition_noniid, run_training
from .hdc import ClassPrototypes, EncoderConfig, encode_batch, projection_for

METRICS_HEADER = "round,accuracy,train_loss,uplink_bytes_cum,downlink_bytes_cum,participants,wall_ms"


@dataclass
class ExperimentResult:
    model: ClassPrototypes
    records: list[RoundRecord]
    num_classes: int
    hd_dim: int


def load_datasets(config: ExperimentConfig) -> tuple[dio.Dataset, dio.Dataset]:
    spec = config.data
    if spec.kind == "synth":
        train, test = dio.synth_train_test(
            num_classes=spec.synth.classes,
            input_dim=spec.synth.features,
            train_per_class=spec.synth.train_per_class,
            test_per_class=spec.synth.test_per_class,
            mean_separation=spec.synth.separation,
            seed=spec.synth.seed,
            symmetric=spec.synth.symmetric,
        )
    else:
        loader = dio.load_delimited if spec.kind == "csv" else dio.load_binary
        if spec.kind == "csv":
            train = loader(spec.train, has_header=spec.has_header, split="train")
            test = (
                loader(spec.test, has_header=spec.has_header, split="test")
                if spec.test
                else train
            )
        else:
            train = loader(spec.train, split="train")
            test = loader(spec.test, split="test") if spec.test else train
        if train.num_classes != test.num_classes:
            k = max(train.num_classes, test.num_classes)
            train.num_classes = k
            test.num_classes = k
    if spec.normalize:
        mean, std = dio.feature_stats(train)
        train = dio.normalize_features(train, mean, std)
        test = dio.normalize_features(test, mean, std)
    return train, test


def encode_datasets(
    config: ExperimentConfig, train: dio.Dataset, test: dio.Dataset
) -> tuple[np.ndarray, np.ndarray]:
    """Project both splits, or pass features through when already encoded."""
    if config.data.encoded:
        if train.input_dim != test.input_dim:
            raise ConfigError("encoded train/test dimensions differ")
        return train.features, test.features
    enc = EncoderConfig(
        input_dim=train.input_dim,
        hd_dim=config.encoder.dim,
        seed=config.encoder.seed,
        quantize=config.encoder.quantize,
    )
    phi = projection_for(enc)
    return (
        encode_batch(phi, train.features, enc.quantize),
        encode_batch(phi, test.features, enc.quantize),
    )


def build_partition(config: ExperimentConfig, train: dio.Dataset) -> Partition:
    if config.partition.kind == "iid":
        return partition_iid(train.n_samples, config.round.num_clients, config.round.seed)
    return partition_noniid(
        train.labels,
        config.round.num_clients,
        config.partition.shards_per_client,
        config.round.seed,
    )


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    train, test = load_datasets(config)
    train_hvs, test_hvs = encode_datasets(config, train, test)
    partition = build_partition(config, train)
    model, records = run_training(
        train_hvs,
        train.labels,
        test_hvs,
        test.labels,
        train.num_classes,
        partition,
        config.round,
        config.channel,
        config.strategy,
    )
    return ExperimentResult(model, records, train.num_classes, train_hvs.shape[1])


def format_metrics(records: list[RoundRecord], target_accuracy: float | None = None) -> str:
    """Render metric rows plus, when a target is set, a summary comment line."""
    lines = [METRICS_HEADER]
    up_cum = 0
    down_cum = 0
    reached: tuple[int, int, int] | None = None
    for rec in records:
        up_cum += rec.uplink_bytes
        down_cum += rec.downlink_bytes
        lines.append(
            f"{rec.round_index},{rec.test_accuracy:.6f},{rec.train_loss:.6f},"
            f"{up_cum},{down_cum},{len(rec.participants)},{rec.wall_ms:.3f}"
        )
        if (
            target_accuracy is not None
            and reached is None
            and rec.test_accuracy >= target_accuracy
        ):
            reached = (rec.round_index, up_cum, down_cum)
    if target_accuracy is not None:
        if reached is not None:
            r, up, down = reached
            lines.append(
                f"# target_accuracy={target_accuracy} reached_round={r} "
                f"uplink_bytes_cum={up} downlink_bytes_cum={down}"
            )
        else:
            lines.append(
                f"# target_accuracy={target_accuracy} not_reached rounds={len(records)}"
            )
    return "\n".join(lines) + "\n"


def write_metrics(
    records: list[RoundRecord], path: str, target_accuracy: float | None = None
) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(format_metrics(records, target_accuracy))
