"""Uplink size reduction: binarized differences, subsampling, sparsification.

Three interchangeable client-to-server payloads plus exact wire-size
accounting:

* binary_diff: one sign bit per parameter of (local - broadcast); the server
  adds the summed signs onto the previous global model.
* subsample: a random fraction of parameter positions; the server regenerates
  the index set from the payload's 64-bit stream key, so only values travel.
* sparsify: the smallest-magnitude fraction of each class row is zeroed and
  the survivors ship as gap-encoded (index distance, value) pairs.

Payload frames reuse the HDFM header (magic, version, K, d, tag byte) with
tag values outside the codec range, so every uplink message remains
self-describing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .channel import (
    HDFM_MAGIC,
    HDFM_VERSION,
    CodecConfig,
    deserialize_bits,
    quantize_block,
    scale_down,
    serialize_bits,
    write_model_bytes,
)
from .hdc import ClassPrototypes, DimensionError

_STRATEGY_KINDS = ("none", "binary_diff", "subsample", "sparsify")

TAG_BINARY_DIFF = 64
TAG_SUBSAMPLE = 65
TAG_SPARSE = 66


class StrategyConfigError(ValueError):
    """Strategy configuration is malformed."""


class SparseFormatError(ValueError):
    """A sparse payload violates its index invariants."""


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "none"
    rate: float | None = None  # subsample keep-fraction
    sparsity: float | None = None  # fraction zeroed
    step: float = 1.0  # binary_diff server step multiplier

    def __post_init__(self) -> None:
        if self.kind not in _STRATEGY_KINDS:
            raise StrategyConfigError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "subsample":
            if self.rate is None or not 0.0 < self.rate <= 1.0:
                raise StrategyConfigError(f"subsample rate must be in (0, 1], got {self.rate}")
        elif self.rate is not None:
            raise StrategyConfigError("rate applies only to the subsample strategy")
        if self.kind == "sparsify":
            if self.sparsity is None or not 0.0 <= self.sparsity < 1.0:
                raise StrategyConfigError(f"sparsity must be in [0, 1), got {self.sparsity}")
        elif self.sparsity is not None:
            raise StrategyConfigError("sparsity applies only to the sparsify strategy")
        if self.step <= 0.0:
            raise StrategyConfigError(f"step must be positive, got {self.step}")


@dataclass
class SubsamplePayload:
    """Sampled flat positions and their values for a (K, d) model."""

    stream_key: int
    indices: np.ndarray
    values: np.ndarray
    shape: tuple[int, int]


@dataclass
class SparseClassModel:
    """Per-class surviving (index, value) pairs for a (K, d) model."""

    indices: list[np.ndarray]  # strictly increasing per class
    values: list[np.ndarray]
    shape: tuple[int, int]
    counts: np.ndarray  # prototype sample counts, carried through

    def n_stored(self) -> int:
        return int(sum(idx.size for idx in self.indices))


# ---------------------------------------------------------------------------
# Binarized differential transmission


def diff_binarize(new_model: ClassPrototypes, old_model: ClassPrototypes) -> np.ndarray:
    """Element-wise sign of (new - old), with sign(0) = +1.

    The +1 convention at zero keeps the alphabet strictly one bit.
    """
    if new_model.vectors.shape != old_model.vectors.shape:
        raise DimensionError("model shapes differ")
    diff = new_model.vectors - old_model.vectors
    return np.where(diff >= 0.0, 1.0, -1.0)


def diff_apply(
    global_model: ClassPrototypes, signs: list[np.ndarray], step: float = 1.0
) -> ClassPrototypes:
    """Add the summed client sign matrices onto the global model.

    Each client moves each parameter by one step unit; an empty list returns
    the global model unchanged.
    """
    if not signs:
        return global_model.copy()
    total = np.zeros_like(global_model.vectors)
    for s in signs:
        if s.shape != global_model.vectors.shape:
            raise DimensionError("sign matrix shape differs from global model")
        total += s
    return ClassPrototypes(global_model.vectors + step * total, global_model.counts.copy())


# ---------------------------------------------------------------------------
# Subsampling


def subsample(
    model: ClassPrototypes, rate: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Pick round(rate * K * d) flat parameter positions uniformly.

    Returns sorted flat indices and the values at those positions. The
    selection is independent per call, which is what makes averaging many
    subsamples an unbiased estimate of the model.
    """
    if not 0.0 < rate <= 1.0:
        raise StrategyConfigError(f"rate must be in (0, 1], got {rate}")
    total = model.vectors.size
    keep = int(round(rate * total))
    indices = np.sort(rng.choice(total, size=keep, replace=False))
    return indices, model.vectors.reshape(-1)[indices].copy()


def subsample_aggregate(
    samples: list[tuple[np.ndarray, np.ndarray]], prev_global: ClassPrototypes
) -> ClassPrototypes:
    """Average reports per position; unreported positions keep the previous
    global value."""
    shape = prev_global.vectors.shape
    sums = np.zeros(prev_global.vectors.size)
    hits = np.zeros(prev_global.vectors.size, dtype=np.int64)
    for indices, values in samples:
        if indices.shape != values.shape:
            raise DimensionError("indices and values must align")
        np.add.at(sums, indices, values)
        np.add.at(hits, indices, 1)
    merged = prev_global.vectors.reshape(-1).copy()
    reported = hits > 0
    merged[reported] = sums[reported] / hits[reported]
    return ClassPrototypes(merged.reshape(shape), prev_global.counts.copy())


# ---------------------------------------------------------------------------
# Sparsification and compressed storage


def sparsify(model: ClassPrototypes, sparsity: float) -> SparseClassModel:
    """Zero the round(S * d) smallest-magnitude entries of each class row.

    Ties zero the lowest index first. Only surviving non-zero entries are
    stored; incidental zeros also vanish since they decompress to zero anyway.
    """
    if not 0.0 <= sparsity < 1.0:
        raise StrategyConfigError(f"sparsity must be in [0, 1), got {sparsity}")
    k, d = model.vectors.shape
    n_zero = int(round(sparsity * d))
    indices: list[np.ndarray] = []
    values: list[np.ndarray] = []
    for row in model.vectors:
        order = np.argsort(np.abs(row), kind="stable")
        dense = row.copy()
        dense[order[:n_zero]] = 0.0
        nz = np.flatnonzero(dense)
        indices.append(nz.astype(np.int64))
        values.append(dense[nz])
    return SparseClassModel(indices, values, (k, d), model.counts.copy())


def csc_decompress(sparse: SparseClassModel) -> ClassPrototypes:
    """Rebuild the dense post-sparsification model, bit for bit.

    Raises on out-of-range or non-increasing index lists.
    """
    k, d = sparse.shape
    vectors = np.zeros((k, d))
    for row, (idx, val) in enumerate(zip(sparse.indices, sparse.values)):
        if idx.size != val.size:
            raise SparseFormatError(f"class {row}: index/value length mismatch")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= d or np.any(np.diff(idx) <= 0):
                raise SparseFormatError(f"class {row}: corrupt index ordering")
            vectors[row, idx] = val
    return ClassPrototypes(vectors, sparse.counts.copy())


# ---------------------------------------------------------------------------
# Wire formats and exact size accounting


def _header(k: int, d: int, tag: int) -> bytes:
    return HDFM_MAGIC + struct.pack("<BIIB", HDFM_VERSION, k, d, tag)


def _pack_bits(bits: np.ndarray) -> bytes:
    pad = (-bits.size) % 8
    if pad:
        bits = np.concatenate([bits, np.zeros(pad, dtype=np.uint8)])
    return np.packbits(bits, bitorder="little").tobytes()


def _u32_bits(values: np.ndarray) -> np.ndarray:
    matrix = (values.astype(np.int64)[:, None] >> np.arange(32, dtype=np.int64)) & 1
    return matrix.astype(np.uint8)


def serialize_sign_matrix(signs: np.ndarray) -> bytes:
    """One bit per parameter (1 encodes +1), row-major, after the frame header."""
    k, d = signs.shape
    bits = (signs.reshape(-1) > 0).astype(np.uint8)
    return _header(k, d, TAG_BINARY_DIFF) + _pack_bits(bits)


def deserialize_sign_matrix(blob: bytes) -> np.ndarray:
    if blob[:4] != HDFM_MAGIC:
        raise SparseFormatError("not a payload frame")
    _, k, d, tag = struct.unpack("<BIIB", blob[4:14])
    if tag != TAG_BINARY_DIFF:
        raise SparseFormatError(f"unexpected payload tag {tag}")
    bits = np.unpackbits(np.frombuffer(blob[14:], dtype=np.uint8), bitorder="little")
    return np.where(bits[: k * d] == 1, 1.0, -1.0).reshape(k, d)


def _value_block(values: np.ndarray, codec: CodecConfig) -> tuple[bytes, np.ndarray]:
    """Codec-width value bits plus, for scaled integers, an 8-byte gain prefix."""
    if codec.representation == "quantized_int":
        ints, gain = quantize_block(values, codec.bitwidth)
        return struct.pack("<d", gain), serialize_bits(ints, codec)
    return b"", serialize_bits(values, codec)


def serialize_subsample(payload: SubsamplePayload, codec: CodecConfig) -> bytes:
    """Header, 64-bit index-stream key, 32-bit count, then the values.

    The server regenerates the index set from the key, so the index overhead
    is constant regardless of the keep rate.
    """
    k, d = payload.shape
    head = _header(k, d, TAG_SUBSAMPLE) + struct.pack(
        "<QI", payload.stream_key, payload.values.size
    )
    gain_prefix, bits = _value_block(payload.values, codec)
    return head + gain_prefix + _pack_bits(bits)


def serialize_sparse(sparse: SparseClassModel, codec: CodecConfig) -> bytes:
    """Per class: a 32-bit count, then (gap, value) pairs.

    The gap is the index distance from the previous stored index minus one,
    as 32 bits; the value follows at the codec width. Pairs are packed back
    to back and each class block pads to a byte boundary. Scaled-integer
    codecs prefix each class block with its 8-byte gain.
    """
    k, d = sparse.shape
    out = bytearray(_header(k, d, TAG_SPARSE))
    vb = codec.value_bits
    for idx, val in zip(sparse.indices, sparse.values):
        out += struct.pack("<I", idx.size)
        if idx.size:
            gain_prefix, value_bits = _value_block(val, codec)
            out += gain_prefix
            gaps = np.empty(idx.size, dtype=np.int64)
            gaps[0] = idx[0]
            gaps[1:] = np.diff(idx) - 1
            pair_bits = np.hstack([_u32_bits(gaps), value_bits.reshape(idx.size, vb)])
            out += _pack_bits(pair_bits.reshape(-1))
    return bytes(out)


def deserialize_sparse(blob: bytes, codec: CodecConfig) -> SparseClassModel:
    """Parse a sparse frame back into indices and values (counts are zero)."""
    if blob[:4] != HDFM_MAGIC:
        raise SparseFormatError("not a payload frame")
    _, k, d, tag = struct.unpack("<BIIB", blob[4:14])
    if tag != TAG_SPARSE:
        raise SparseFormatError(f"unexpected payload tag {tag}")
    vb = codec.value_bits
    offset = 14
    indices: list[np.ndarray] = []
    values: list[np.ndarray] = []
    for _ in range(k):
        (count,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        if count == 0:
            indices.append(np.empty(0, dtype=np.int64))
            values.append(np.empty(0))
            continue
        gain = None
        if codec.representation == "quantized_int":
            (gain,) = struct.unpack_from("<d", blob, offset)
            offset += 8
        n_bytes = -(-count * (32 + vb) // 8)
        raw = np.frombuffer(blob, dtype=np.uint8, count=n_bytes, offset=offset)
        offset += n_bytes
        pair_bits = np.unpackbits(raw, bitorder="little")[: count * (32 + vb)]
        pair_bits = pair_bits.reshape(count, 32 + vb)
        gap_bits = pair_bits[:, :32].astype(np.int64)
        gaps = (gap_bits << np.arange(32, dtype=np.int64)).sum(axis=1)
        idx = np.cumsum(gaps + 1) - 1
        val = deserialize_bits(pair_bits[:, 32:].reshape(-1), codec, (count,))
        if gain is not None:
            val = scale_down(val, gain)
        indices.append(idx)
        values.append(val)
    return SparseClassModel(indices, values, (k, d), np.zeros(k, dtype=np.int64))


def wire_bytes(payload, strategy: StrategyConfig, codec: CodecConfig) -> int:
    """Exact serialized uplink size in bytes, headers and metadata included."""
    if strategy.kind == "none":
        if not isinstance(payload, ClassPrototypes):
            raise TypeError("none strategy expects a full model")
        return len(write_model_bytes(payload, codec))
    if strategy.kind == "binary_diff":
        return len(serialize_sign_matrix(np.asarray(payload)))
    if strategy.kind == "subsample":
        if not isinstance(payload, SubsamplePayload):
            raise TypeError("subsample strategy expects a SubsamplePayload")
        return len(serialize_subsample(payload, codec))
    if strategy.kind == "sparsify":
        if not isinstance(payload, SparseClassModel):
            raise TypeError("sparsify strategy expects a SparseClassModel")
        return len(serialize_sparse(payload, codec))
    raise StrategyConfigError(f"unknown strategy kind {strategy.kind!r}")
