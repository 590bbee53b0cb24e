"""Federated training loop: partitioning, client sampling, local updates,
and server aggregation over a configurable uplink.

One round: the server broadcasts the global prototypes, each sampled client
retrains its copy for a number of epochs on local data, client updates pass
through the active size-reduction strategy and then the corruption model,
and the server decodes and aggregates. The downlink is assumed reliable.

Everything is a pure function of (data, configs, seed): client-local work
draws from per-(round, client) derived streams, so serial and parallel
schedules produce identical results.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import strategies as strat
from .channel import (
    ChannelConfig,
    CodecConfig,
    apply_channel,
    corrupt_signs,
    corrupt_values,
    write_model_bytes,
)
from .hdc import (
    ClassPrototypes,
    accuracy,
    multiclass_margin_loss,
    retrain_epoch,
)
from .seeding import (
    STREAM_CHANNEL,
    STREAM_LOCAL,
    STREAM_PARTITION,
    STREAM_SAMPLING,
    STREAM_STRATEGY,
    derived_rng,
)


@dataclass(frozen=True)
class RoundConfig:
    """Federation parameters: cohort size, participation, local work, rounds."""

    num_clients: int
    participation: float = 0.2
    local_epochs: int = 1
    local_batch: int | None = 10  # None = full batch
    learning_rate: float = 1.0
    rounds: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_clients < 1:
            raise ValueError("num_clients must be positive")
        if not 0.0 < self.participation <= 1.0:
            raise ValueError(f"participation must be in (0, 1], got {self.participation}")
        if math.ceil(self.participation * self.num_clients) < 1:
            raise ValueError("participation too small: no client would be sampled")
        if self.local_epochs < 0:
            raise ValueError("local_epochs must be non-negative")
        if self.local_batch is not None and self.local_batch < 1:
            raise ValueError("local_batch must be positive or None for full batch")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass
class Partition:
    """Disjoint covering assignment of sample indices to clients."""

    assignments: list[np.ndarray]
    weights: np.ndarray

    @property
    def num_clients(self) -> int:
        return len(self.assignments)


@dataclass
class ClientState:
    client_id: int
    hvs: np.ndarray
    labels: np.ndarray
    model: ClassPrototypes | None = None


@dataclass
class RoundRecord:
    round_index: int
    participants: tuple[int, ...]
    test_accuracy: float
    train_loss: float
    uplink_bytes: int
    downlink_bytes: int
    wall_ms: float = 0.0  # hardware-dependent; excluded from any equality check


def partition_iid(n_samples: int, num_clients: int, seed: int) -> Partition:
    """Shuffle and split into near-equal chunks (sizes differ by at most 1)."""
    if num_clients < 1:
        raise ValueError("num_clients must be positive")
    if n_samples < num_clients:
        raise ValueError("need at least one sample per client")
    rng = derived_rng(seed, STREAM_PARTITION)
    order = rng.permutation(n_samples)
    chunks = np.array_split(order, num_clients)
    weights = np.array([len(c) / n_samples for c in chunks])
    return Partition([np.asarray(c) for c in chunks], weights)


def partition_noniid(
    labels: np.ndarray, num_clients: int, shards_per_client: int, seed: int
) -> Partition:
    """Sort by label, slice into equal contiguous shards, deal shards randomly.

    Each client receives shards_per_client shards, so it sees at most that
    many label runs. The trailing remainder joins the last shard.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    n_shards = num_clients * shards_per_client
    if num_clients < 1 or shards_per_client < 1:
        raise ValueError("num_clients and shards_per_client must be positive")
    if n_shards > n:
        raise ValueError(f"cannot cut {n} samples into {n_shards} shards")
    by_label = np.argsort(labels, kind="stable")
    shard_size = n // n_shards
    shards = [by_label[i * shard_size : (i + 1) * shard_size] for i in range(n_shards)]
    shards[-1] = by_label[(n_shards - 1) * shard_size :]
    rng = derived_rng(seed, STREAM_PARTITION, num_clients, shards_per_client)
    order = rng.permutation(n_shards)
    assignments = []
    for c in range(num_clients):
        mine = order[c * shards_per_client : (c + 1) * shards_per_client]
        assignments.append(np.concatenate([shards[s] for s in mine]))
    weights = np.array([len(a) / n for a in assignments])
    return Partition(assignments, weights)


def sample_clients(num_clients: int, fraction: float, round_index: int, seed: int) -> np.ndarray:
    """Uniform sample without replacement of max(1, round(C * N)) client ids.

    The stream is derived from (seed, round), so each round's draw is
    independent and reproducible.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    count = max(1, round(fraction * num_clients))
    rng = derived_rng(seed, STREAM_SAMPLING, round_index)
    return np.sort(rng.choice(num_clients, size=count, replace=False))


def _batched_order(
    n: int, batch: int | None, rng: np.random.Generator
) -> np.ndarray:
    """Sample order for one epoch: contiguous batches, batch order shuffled.

    The batch size controls shuffling granularity only; samples are still
    processed one by one inside each batch.
    """
    if batch is None or batch >= n:
        return np.arange(n)
    n_batches = -(-n // batch)
    starts = np.arange(n_batches)
    rng.shuffle(starts)
    order = np.concatenate(
        [np.arange(s * batch, min((s + 1) * batch, n)) for s in starts]
    )
    return order


def local_update(
    client: ClientState,
    global_model: ClassPrototypes,
    cfg: RoundConfig,
    round_index: int,
) -> ClassPrototypes:
    """Copy the broadcast model and retrain for the configured local epochs.

    Batch order is drawn from the (seed, round, client) stream. A client with
    no data returns the global model unchanged. The client's stored model is
    replaced with the result.
    """
    if client.hvs.shape[0] == 0 or cfg.local_epochs == 0:
        client.model = global_model.copy()
        return client.model
    rng = derived_rng(cfg.seed, STREAM_LOCAL, round_index, client.client_id)
    model = global_model.copy()
    for _ in range(cfg.local_epochs):
        order = _batched_order(client.hvs.shape[0], cfg.local_batch, rng)
        model, _ = retrain_epoch(
            model, client.hvs[order], client.labels[order], cfg.learning_rate
        )
    client.model = model
    return model


def normalized_weights(weights: np.ndarray) -> np.ndarray:
    """Renormalize participant weights to sum to one."""
    weights = np.asarray(weights, dtype=np.float64)
    total = weights.sum()
    if total <= 0.0:
        raise ValueError("participant weights must have positive sum")
    return weights / total


def aggregate_weighted(models: list[ClassPrototypes], weights: np.ndarray) -> ClassPrototypes:
    """Weighted element-wise combination, weights renormalized over the list.

    Counts are combined with the same weights and rounded; they are
    bookkeeping only.
    """
    if not models:
        raise ValueError("cannot aggregate an empty model list")
    weights = normalized_weights(weights)
    if len(models) != weights.shape[0]:
        raise ValueError("one weight per model required")
    vectors = np.zeros_like(models[0].vectors)
    counts = np.zeros(models[0].num_classes, dtype=np.float64)
    for model, w in zip(models, weights):
        if model.vectors.shape != vectors.shape:
            raise ValueError("model shapes differ")
        vectors += w * model.vectors
        counts += w * model.counts
    return ClassPrototypes(vectors, np.rint(counts).astype(np.int64))


def aggregate_sum(models: list[ClassPrototypes]) -> ClassPrototypes:
    """Unweighted element-wise sum (federated bundling variant)."""
    if not models:
        raise ValueError("cannot aggregate an empty model list")
    vectors = np.zeros_like(models[0].vectors)
    counts = np.zeros(models[0].num_classes, dtype=np.int64)
    for model in models:
        if model.vectors.shape != vectors.shape:
            raise ValueError("model shapes differ")
        vectors += model.vectors
        counts += model.counts
    return ClassPrototypes(vectors, counts)


def decaying_learning_rate(mu: float, gamma: float, t: int) -> float:
    """Schedule 2 / (mu * (gamma + t)), used by the convergence-rate checks."""
    return 2.0 / (mu * (gamma + t))


def _client_states(
    hvs: np.ndarray, labels: np.ndarray, partition: Partition
) -> list[ClientState]:
    return [
        ClientState(cid, hvs[idx], labels[idx])
        for cid, idx in enumerate(partition.assignments)
    ]


def run_training(
    train_hvs: np.ndarray,
    train_labels: np.ndarray,
    test_hvs: np.ndarray,
    test_labels: np.ndarray,
    num_classes: int,
    partition: Partition,
    cfg: RoundConfig,
    channel: ChannelConfig | None = None,
    strategy: strat.StrategyConfig | None = None,
) -> tuple[ClassPrototypes, list[RoundRecord]]:
    """Run the full federated loop over encoded data for cfg.rounds rounds.

    Returns the final global model and one record per round. Configuration
    errors surface before round 1; channel corruption never aborts a run.
    Binarized differential transmission defaults to full participation since
    clients must difference against the broadcast they all share.
    """
    channel = channel or ChannelConfig()
    strategy = strategy or strat.StrategyConfig()
    if partition.num_clients != cfg.num_clients:
        raise ValueError(
            f"partition has {partition.num_clients} clients, config says {cfg.num_clients}"
        )
    clients = _client_states(train_hvs, train_labels, partition)
    hd_dim = train_hvs.shape[1]
    global_model = ClassPrototypes.zeros(num_classes, hd_dim)
    participation = 1.0 if strategy.kind == "binary_diff" else cfg.participation
    records: list[RoundRecord] = []
    downlink_frame = len(write_model_bytes(global_model, CodecConfig("float32")))
    for t in range(cfg.rounds):
        tic = time.perf_counter()
        participants = sample_clients(cfg.num_clients, participation, t, cfg.seed)
        uplink = 0
        payloads = []
        for cid in participants:
            local = local_update(clients[cid], global_model, cfg, t)
            chan_rng = derived_rng(cfg.seed, STREAM_CHANNEL, t, cid)
            if strategy.kind == "none":
                received = apply_channel(local, channel, chan_rng)
                uplink += strat.wire_bytes(local, strategy, channel.codec)
                payloads.append(received)
            elif strategy.kind == "binary_diff":
                signs = strat.diff_binarize(local, global_model)
                uplink += strat.wire_bytes(signs, strategy, channel.codec)
                payloads.append(corrupt_signs(signs, channel, chan_rng))
            elif strategy.kind == "subsample":
                sub_rng = derived_rng(cfg.seed, STREAM_STRATEGY, t, cid)
                indices, values = strat.subsample(local, strategy.rate, sub_rng)
                payload = strat.SubsamplePayload(
                    stream_key=(t << 20) | int(cid),
                    indices=indices,
                    values=values,
                    shape=local.vectors.shape,
                )
                uplink += strat.wire_bytes(payload, strategy, channel.codec)
                payloads.append((indices, corrupt_values(values, channel, chan_rng)))
            else:  # sparsify
                sparse = strat.sparsify(local, strategy.sparsity)
                uplink += strat.wire_bytes(sparse, strategy, channel.codec)
                corrupted = strat.SparseClassModel(
                    indices=sparse.indices,
                    values=[
                        corrupt_values(v, channel, chan_rng) for v in sparse.values
                    ],
                    shape=sparse.shape,
                    counts=sparse.counts,
                )
                payloads.append(corrupted)
        part_weights = partition.weights[participants]
        if strategy.kind == "none":
            global_model = aggregate_weighted(payloads, part_weights)
        elif strategy.kind == "binary_diff":
            global_model = strat.diff_apply(global_model, payloads, strategy.step)
        elif strategy.kind == "subsample":
            global_model = strat.subsample_aggregate(payloads, global_model)
        else:
            dense = [strat.csc_decompress(p) for p in payloads]
            global_model = aggregate_weighted(dense, part_weights)
        records.append(
            RoundRecord(
                round_index=t,
                participants=tuple(int(c) for c in participants),
                test_accuracy=accuracy(global_model, test_hvs, test_labels),
                train_loss=multiclass_margin_loss(global_model, train_hvs, train_labels),
                uplink_bytes=uplink,
                downlink_bytes=downlink_frame * cfg.num_clients,
                wall_ms=(time.perf_counter() - tic) * 1000.0,
            )
        )
    return global_model, records
