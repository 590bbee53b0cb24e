"""Flat key-value experiment configuration.

Config files are plain text lines of ``section.key = value`` with ``#``
comments; the same dotted keys work as command-line overrides. The format is
deliberately trivial to parse and diff.

Recognized keys (defaults in parentheses):

  data.kind (synth) | csv | hdds      data.train / data.test (paths)
  data.encoded (false)                data.has_header (false)
  data.normalize (false)
  data.synth.classes (8)              data.synth.features (32)
  data.synth.train_per_class (200)    data.synth.test_per_class (100)
  data.synth.separation (2.0)         data.synth.seed (1)
  data.synth.symmetric (false)
  encoder.dim (10000)                 encoder.seed (7)
  encoder.quantize (false)
  round.clients (100)                 round.participation (0.2)
  round.epochs (1)                    round.batch (10 | full)
  round.lr (1.0)                      round.rounds (100)
  round.seed (0, or $HDFED_SEED)
  partition.kind (iid) | noniid       partition.shards_per_client (2)
  channel.kind (ideal) | awgn | bsc | packet_loss
  channel.snr_db                      channel.bit_error_rate
  channel.packet_bits                 channel.packet_loss_prob
  codec.representation (float32) | int32 | quantized_int
  codec.bitwidth (16)
  strategy.kind (none) | binary_diff | subsample | sparsify
  strategy.rate                       strategy.sparsity
  strategy.step (1.0)
  output.metrics (metrics.csv)        output.model (model.hdfm)
  target_accuracy (unset)
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .channel import ChannelConfig, CodecConfig
from .federated import RoundConfig
from .strategies import StrategyConfig


class ConfigError(ValueError):
    """A config file or override cannot be parsed or validated."""


@dataclass
class SynthSpec:
    classes: int = 8
    features: int = 32
    train_per_class: int = 200
    test_per_class: int = 100
    separation: float = 2.0
    seed: int = 1
    symmetric: bool = False


@dataclass
class DataSpec:
    kind: str = "synth"  # synth | csv | hdds
    train: str | None = None
    test: str | None = None
    encoded: bool = False
    has_header: bool = False
    normalize: bool = False
    synth: SynthSpec = field(default_factory=SynthSpec)


@dataclass
class EncoderSpec:
    dim: int = 10000
    seed: int = 7
    quantize: bool = False


@dataclass
class PartitionSpec:
    kind: str = "iid"  # iid | noniid
    shards_per_client: int = 2


@dataclass
class ExperimentConfig:
    data: DataSpec = field(default_factory=DataSpec)
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    round: RoundConfig = field(default_factory=lambda: RoundConfig(num_clients=100))
    partition: PartitionSpec = field(default_factory=PartitionSpec)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    metrics_path: str = "metrics.csv"
    model_path: str = "model.hdfm"
    target_accuracy: float | None = None


def _parse_bool(value: str, key: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _parse_int(value: str, key: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _parse_float(value: str, key: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Read ``key = value`` lines into a flat dict, ignoring blanks/comments."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def load_config(path: str | None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Build an ExperimentConfig from a file plus flat-key overrides."""
    entries: dict[str, str] = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            entries.update(parse_config_text(f.read(), source=path))
    if overrides:
        entries.update(overrides)
    return config_from_entries(entries)


def default_seed() -> int:
    """Run seed default; the HDFED_SEED environment variable overrides it."""
    raw = os.environ.get("HDFED_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"HDFED_SEED must be an integer, got {raw!r}") from None


def config_from_entries(entries: dict[str, str]) -> ExperimentConfig:
    entries = dict(entries)

    def pop(key: str, default: str | None = None) -> str | None:
        return entries.pop(key, default)

    synth = SynthSpec(
        classes=_parse_int(pop("data.synth.classes", "8"), "data.synth.classes"),
        features=_parse_int(pop("data.synth.features", "32"), "data.synth.features"),
        train_per_class=_parse_int(
            pop("data.synth.train_per_class", "200"), "data.synth.train_per_class"
        ),
        test_per_class=_parse_int(
            pop("data.synth.test_per_class", "100"), "data.synth.test_per_class"
        ),
        separation=_parse_float(pop("data.synth.separation", "2.0"), "data.synth.separation"),
        seed=_parse_int(pop("data.synth.seed", "1"), "data.synth.seed"),
        symmetric=_parse_bool(pop("data.synth.symmetric", "false"), "data.synth.symmetric"),
    )
    data = DataSpec(
        kind=pop("data.kind", "synth"),
        train=pop("data.train"),
        test=pop("data.test"),
        encoded=_parse_bool(pop("data.encoded", "false"), "data.encoded"),
        has_header=_parse_bool(pop("data.has_header", "false"), "data.has_header"),
        normalize=_parse_bool(pop("data.normalize", "false"), "data.normalize"),
        synth=synth,
    )
    if data.kind not in ("synth", "csv", "hdds"):
        raise ConfigError(f"data.kind must be synth, csv, or hdds, got {data.kind!r}")
    if data.kind != "synth" and data.train is None:
        raise ConfigError(f"data.kind={data.kind} requires data.train")

    encoder = EncoderSpec(
        dim=_parse_int(pop("encoder.dim", "10000"), "encoder.dim"),
        seed=_parse_int(pop("encoder.seed", "7"), "encoder.seed"),
        quantize=_parse_bool(pop("encoder.quantize", "false"), "encoder.quantize"),
    )

    batch_raw = pop("round.batch", "10")
    batch = None if batch_raw.lower() == "full" else _parse_int(batch_raw, "round.batch")
    try:
        round_cfg = RoundConfig(
            num_clients=_parse_int(pop("round.clients", "100"), "round.clients"),
            participation=_parse_float(pop("round.participation", "0.2"), "round.participation"),
            local_epochs=_parse_int(pop("round.epochs", "1"), "round.epochs"),
            local_batch=batch,
            learning_rate=_parse_float(pop("round.lr", "1.0"), "round.lr"),
            rounds=_parse_int(pop("round.rounds", "100"), "round.rounds"),
            seed=_parse_int(pop("round.seed", str(default_seed())), "round.seed"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    partition = PartitionSpec(
        kind=pop("partition.kind", "iid"),
        shards_per_client=_parse_int(
            pop("partition.shards_per_client", "2"), "partition.shards_per_client"
        ),
    )
    if partition.kind not in ("iid", "noniid"):
        raise ConfigError(f"partition.kind must be iid or noniid, got {partition.kind!r}")

    try:
        codec = CodecConfig(
            representation=pop("codec.representation", "float32"),
            bitwidth=_parse_int(pop("codec.bitwidth", "16"), "codec.bitwidth"),
        )
        channel_kwargs = {}
        for cfg_key, name in (
            ("channel.snr_db", "snr_db"),
            ("channel.bit_error_rate", "bit_error_rate"),
            ("channel.packet_loss_prob", "packet_loss_prob"),
        ):
            raw = pop(cfg_key)
            if raw is not None:
                channel_kwargs[name] = _parse_float(raw, cfg_key)
        raw = pop("channel.packet_bits")
        if raw is not None:
            channel_kwargs["packet_bits"] = _parse_int(raw, "channel.packet_bits")
        channel = ChannelConfig(kind=pop("channel.kind", "ideal"), codec=codec, **channel_kwargs)

        strategy_kwargs = {}
        for cfg_key, name in (
            ("strategy.rate", "rate"),
            ("strategy.sparsity", "sparsity"),
        ):
            raw = pop(cfg_key)
            if raw is not None:
                strategy_kwargs[name] = _parse_float(raw, cfg_key)
        strategy = StrategyConfig(
            kind=pop("strategy.kind", "none"),
            step=_parse_float(pop("strategy.step", "1.0"), "strategy.step"),
            **strategy_kwargs,
        )
    except ValueError as exc:
        # Channel/codec/strategy dataclasses validate themselves.
        raise ConfigError(str(exc)) from None

    target_raw = pop("target_accuracy")
    target = None if target_raw is None else _parse_float(target_raw, "target_accuracy")

    metrics_path = pop("output.metrics", "metrics.csv")
    model_path = pop("output.model", "model.hdfm")

    if entries:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(entries))}")

    return ExperimentConfig(
        data=data,
        encoder=encoder,
        round=round_cfg,
        partition=partition,
        channel=channel,
        strategy=strategy,
        metrics_path=metrics_path,
        model_path=model_path,
        target_accuracy=target,
    )
