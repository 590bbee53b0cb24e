"""Unreliable uplink models and the model bit codec.

Corruption operators: additive Gaussian noise applied directly to parameter
values (uncoded transmission), independent bit flips on the serialized
parameter stream, and packet erasures with zero-fill on receive. The
scale-up / truncate / scale-down quantizer bounds how much a single bit flip
can move a parameter relative to its original value.

Wire frame ("HDFM"): magic, version byte, K and d as 32-bit little-endian
unsigned, a codec tag byte, optional per-class gains as 64-bit floats, then
row-major parameters. The tag byte is 0 for float32, 1 for int32, and
128 + bitwidth for scaled integers, so a frame is self-describing. Bits
within the payload are little-endian: least-significant bit of the first
byte first. Channel corruption touches payload bits only; headers and gains
ride the reliable side of the link.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .hdc import ClassPrototypes, DimensionError

HDFM_MAGIC = b"HDFM"
HDFM_VERSION = 1
HEADER_BYTES = 4 + 1 + 4 + 4 + 1  # magic, version, K, d, codec tag

_REPRESENTATIONS = ("float32", "int32", "quantized_int")
_CHANNEL_KINDS = ("ideal", "awgn", "bsc", "packet_loss")


class ChannelConfigError(ValueError):
    """Channel or codec configuration is malformed."""


class CodecError(ValueError):
    """Values cannot be represented by the selected codec."""


@dataclass(frozen=True)
class CodecConfig:
    """Wire representation of model parameters."""

    representation: str = "float32"
    bitwidth: int = 16  # quantized_int only

    def __post_init__(self) -> None:
        if self.representation not in _REPRESENTATIONS:
            raise ChannelConfigError(f"unknown representation {self.representation!r}")
        if self.representation == "quantized_int" and not (2 <= self.bitwidth <= 32):
            raise ChannelConfigError(
                f"quantized bitwidth must be in [2, 32], got {self.bitwidth}"
            )

    @property
    def value_bits(self) -> int:
        return self.bitwidth if self.representation == "quantized_int" else 32


@dataclass(frozen=True)
class ChannelConfig:
    """Corruption model selector plus the parameters its kind requires."""

    kind: str = "ideal"
    snr_db: float | None = None
    bit_error_rate: float | None = None
    packet_bits: int | None = None
    packet_loss_prob: float | None = None  # direct override of the derived rate
    codec: CodecConfig = field(default_factory=CodecConfig)

    def __post_init__(self) -> None:
        if self.kind not in _CHANNEL_KINDS:
            raise ChannelConfigError(f"unknown channel kind {self.kind!r}")
        if self.kind == "awgn" and self.snr_db is None:
            raise ChannelConfigError("awgn channel requires snr_db")
        if self.kind == "bsc":
            if self.bit_error_rate is None:
                raise ChannelConfigError("bsc channel requires bit_error_rate")
        if self.kind == "packet_loss":
            if self.packet_bits is None or self.packet_bits < 1:
                raise ChannelConfigError("packet_loss channel requires packet_bits >= 1")
            if self.bit_error_rate is None and self.packet_loss_prob is None:
                raise ChannelConfigError(
                    "packet_loss channel requires bit_error_rate or packet_loss_prob"
                )
        for rate in (self.bit_error_rate, self.packet_loss_prob):
            if rate is not None and not 0.0 <= rate <= 1.0:
                raise ChannelConfigError(f"probability {rate} outside [0, 1]")


@dataclass
class QuantizedModel:
    """Scaled-integer model: per-class integers plus the gains that undo them."""

    integers: np.ndarray  # (K, d) int64
    gains: np.ndarray  # (K,) float64
    bitwidth: int


# ---------------------------------------------------------------------------
# Additive noise


def awgn_perturb(model: ClassPrototypes, snr_db: float, rng: np.random.Generator) -> ClassPrototypes:
    """Add white Gaussian noise sized so that signal power / noise power
    matches the requested SNR.

    Signal power is the sum of squares over all K*d parameters; the total
    noise budget P / 10^(snr_db/10) is split evenly across parameters. An
    all-zero model is returned unchanged (its SNR is undefined).
    """
    power = float(np.sum(model.vectors**2))
    if power == 0.0:
        return model.copy()
    noise_power = power / (10.0 ** (snr_db / 10.0))
    per_param = noise_power / model.vectors.size
    noise = rng.standard_normal(model.vectors.shape) * math.sqrt(per_param)
    return ClassPrototypes(model.vectors + noise, model.counts.copy())


# ---------------------------------------------------------------------------
# Bit codec


def serialize_bits(values: np.ndarray, codec: CodecConfig) -> np.ndarray:
    """Encode an array of parameters as a 0/1 bit vector, row-major.

    Output length is exactly values.size * width bits. Integer codecs raise
    on non-integral or out-of-range values.
    """
    flat = np.asarray(values, dtype=np.float64).reshape(-1)
    if codec.representation == "float32":
        raw = flat.astype("<f4").tobytes()
        return np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
    if not np.all(np.isfinite(flat)) or np.any(flat != np.trunc(flat)):
        raise CodecError("integer codecs require integral finite values")
    if codec.representation == "int32":
        if np.any(flat < -(2**31)) or np.any(flat > 2**31 - 1):
            raise CodecError("value overflow for int32")
        raw = flat.astype("<i4").tobytes()
        return np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
    width = codec.bitwidth
    lo, hi = -(2 ** (width - 1)), 2 ** (width - 1) - 1
    if np.any(flat < lo) or np.any(flat > hi):
        raise CodecError(f"value overflow for {width}-bit integers")
    unsigned = flat.astype(np.int64) & ((1 << width) - 1)
    bits = (unsigned[:, None] >> np.arange(width, dtype=np.int64)) & 1
    return bits.reshape(-1).astype(np.uint8)


def deserialize_bits(bits: np.ndarray, codec: CodecConfig, shape: tuple[int, ...]) -> np.ndarray:
    """Decode a bit vector back into parameters of the given shape.

    For float32, values that decode to NaN or infinity are replaced by zero;
    corrupted streams must never poison server-side arithmetic.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    count = int(np.prod(shape))
    width = codec.value_bits
    if bits.size != count * width:
        raise DimensionError(
            f"expected {count * width} bits for shape {shape}, got {bits.size}"
        )
    if codec.representation == "float32":
        raw = np.packbits(bits, bitorder="little").tobytes()
        # Corrupted patterns may form signaling NaNs; the widening cast then
        # raises FE_INVALID, which is exactly the case nan_to_num cleans up.
        with np.errstate(invalid="ignore"):
            values = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        values = np.nan_to_num(values, nan=0.0, posinf=0.0, neginf=0.0)
        return values.reshape(shape)
    if codec.representation == "int32":
        raw = np.packbits(bits, bitorder="little").tobytes()
        values = np.frombuffer(raw, dtype="<i4").astype(np.float64)
        return values.reshape(shape)
    matrix = bits.reshape(count, width).astype(np.int64)
    unsigned = (matrix << np.arange(width, dtype=np.int64)).sum(axis=1)
    signed = np.where(unsigned >= 1 << (width - 1), unsigned - (1 << width), unsigned)
    return signed.astype(np.float64).reshape(shape)


def bsc_flip(bits: np.ndarray, p_e: float, rng: np.random.Generator) -> np.ndarray:
    """Flip each bit independently with probability p_e."""
    if not 0.0 <= p_e <= 1.0:
        raise ChannelConfigError(f"bit error rate {p_e} outside [0, 1]")
    bits = np.asarray(bits, dtype=np.uint8)
    flips = rng.random(bits.size) < p_e
    return bits ^ flips.astype(np.uint8)


def packet_error_probability(p_e: float, packet_bits: int) -> float:
    """Probability that an packet_bits-bit packet sees at least one bit error."""
    if packet_bits < 1:
        raise ChannelConfigError("packet_bits must be >= 1")
    if not 0.0 <= p_e <= 1.0:
        raise ChannelConfigError(f"bit error rate {p_e} outside [0, 1]")
    if p_e == 1.0:
        return 1.0
    return -math.expm1(packet_bits * math.log1p(-p_e))


def packetize_and_drop(
    bits: np.ndarray,
    packet_bits: int,
    p_e: float,
    rng: np.random.Generator,
    packet_loss_prob: float | None = None,
) -> tuple[np.ndarray, list[int]]:
    """Split into packets of packet_bits and erase whole packets.

    Each packet drops independently with 1 - (1 - p_e)^packet_bits, or with
    packet_loss_prob when given directly. Dropped packets arrive zero-filled.
    Returns the received bits and the dropped packet indices.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    p_drop = (
        packet_loss_prob
        if packet_loss_prob is not None
        else packet_error_probability(p_e, packet_bits)
    )
    n_packets = -(-bits.size // packet_bits)  # ceil
    received = bits.copy()
    dropped: list[int] = []
    if n_packets == 0:
        return received, dropped
    drops = rng.random(n_packets) < p_drop
    for idx in np.flatnonzero(drops):
        start = int(idx) * packet_bits
        received[start : start + packet_bits] = 0
        dropped.append(int(idx))
    return received, dropped


# ---------------------------------------------------------------------------
# Scale-up / round / scale-down quantizer


def quantize_up(values: np.ndarray, bitwidth: int) -> tuple[np.ndarray, float]:
    """Scale so the largest magnitude hits the integer ceiling, then truncate.

    Gain is (2^(B-1) - 1) / max|values|; elements are truncated toward zero
    after scaling. An all-zero vector has no defined gain and raises.
    """
    if bitwidth < 2:
        raise ChannelConfigError(f"bitwidth must be >= 2, got {bitwidth}")
    values = np.asarray(values, dtype=np.float64)
    max_abs = float(np.max(np.abs(values))) if values.size else 0.0
    if max_abs == 0.0:
        raise CodecError("cannot quantize an all-zero vector: gain undefined")
    top = 2 ** (bitwidth - 1) - 1
    gain = top / max_abs
    ints = np.trunc(values * gain).astype(np.int64)
    # Float rounding in values * gain must not push the extreme element off
    # the exact ceiling.
    extremes = np.abs(values) == max_abs
    ints[extremes] = np.where(values[extremes] >= 0, top, -top)
    np.clip(ints, -top, top, out=ints)
    return ints, gain


def scale_down(integers: np.ndarray, gain: float) -> np.ndarray:
    """Invert the quantizer gain (element-wise division)."""
    if gain <= 0.0:
        raise CodecError(f"gain must be positive, got {gain}")
    return np.asarray(integers, dtype=np.float64) / gain


def quantize_block(values: np.ndarray, bitwidth: int) -> tuple[np.ndarray, float]:
    """quantize_up with the pipeline convention for all-zero blocks
    (zeros at gain 1 instead of an error), so live traffic never aborts."""
    values = np.asarray(values, dtype=np.float64)
    if not np.any(values != 0.0):
        return np.zeros(values.shape, dtype=np.int64), 1.0
    return quantize_up(values, bitwidth)


def quantize_model(model: ClassPrototypes, bitwidth: int) -> QuantizedModel:
    """Quantize every class row with its own gain.

    All-zero rows (untrained classes) transmit as zeros with gain 1 rather
    than raising, so a live training run never aborts on an empty class.
    """
    k, d = model.vectors.shape
    integers = np.zeros((k, d), dtype=np.int64)
    gains = np.ones(k, dtype=np.float64)
    for i in range(k):
        integers[i], gains[i] = quantize_block(model.vectors[i], bitwidth)
    return QuantizedModel(integers, gains, bitwidth)


def dequantize_model(quantized: QuantizedModel, counts: np.ndarray) -> ClassPrototypes:
    vectors = quantized.integers.astype(np.float64) / quantized.gains[:, None]
    return ClassPrototypes(vectors, np.asarray(counts, dtype=np.int64).copy())


# ---------------------------------------------------------------------------
# Corruption pipelines


def _corrupt_bitstream(bits: np.ndarray, cfg: ChannelConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.kind == "bsc":
        return bsc_flip(bits, cfg.bit_error_rate, rng)
    if cfg.kind == "packet_loss":
        received, _ = packetize_and_drop(
            bits,
            cfg.packet_bits,
            0.0 if cfg.bit_error_rate is None else cfg.bit_error_rate,
            rng,
            packet_loss_prob=cfg.packet_loss_prob,
        )
        return received
    raise ChannelConfigError(f"{cfg.kind} is not a bitstream channel")


def corrupt_values(values: np.ndarray, cfg: ChannelConfig, rng: np.random.Generator) -> np.ndarray:
    """Run a flat value vector through the configured corruption.

    Used for strategy payloads (subsampled or sparse values). The scaled
    integer codec quantizes the vector as a single block whose gain travels
    with the reliable metadata.
    """
    values = np.asarray(values, dtype=np.float64)
    if cfg.kind == "ideal" or values.size == 0:
        return values.copy()
    if cfg.kind == "awgn":
        power = float(np.sum(values**2))
        if power == 0.0:
            return values.copy()
        per_param = power / (10.0 ** (cfg.snr_db / 10.0)) / values.size
        return values + rng.standard_normal(values.size) * math.sqrt(per_param)
    if cfg.codec.representation == "quantized_int":
        ints, gain = quantize_block(values, cfg.codec.bitwidth)
        bits = _corrupt_bitstream(serialize_bits(ints, cfg.codec), cfg, rng)
        return scale_down(deserialize_bits(bits, cfg.codec, values.shape), gain)
    bits = _corrupt_bitstream(serialize_bits(values, cfg.codec), cfg, rng)
    return deserialize_bits(bits, cfg.codec, values.shape)


def corrupt_signs(signs: np.ndarray, cfg: ChannelConfig, rng: np.random.Generator) -> np.ndarray:
    """Corrupt a +/-1 matrix as a 1-bit-per-entry stream.

    Bit 1 encodes +1. Bit-flip channels flip signs; dropped packets decode
    as -1 (zero bits). Additive noise perturbs the raw +/-1 values.
    """
    signs = np.asarray(signs, dtype=np.float64)
    if cfg.kind == "ideal":
        return signs.copy()
    if cfg.kind == "awgn":
        # Signal power of a +/-1 matrix is one per entry.
        per_param = 1.0 / (10.0 ** (cfg.snr_db / 10.0))
        return signs + rng.standard_normal(signs.shape) * math.sqrt(per_param)
    bits = (signs.reshape(-1) > 0).astype(np.uint8)
    bits = _corrupt_bitstream(bits, cfg, rng)
    return np.where(bits == 1, 1.0, -1.0).reshape(signs.shape)


def apply_channel(model: ClassPrototypes, cfg: ChannelConfig, rng: np.random.Generator) -> ClassPrototypes:
    """Dispatch a full model through the configured corruption.

    ideal is the exact identity; awgn perturbs raw values; bsc and
    packet_loss serialize with the codec, corrupt the payload bits, and
    decode (wrapped in scale-up/down when the codec is quantized_int).
    Shape (K, d) is always preserved.
    """
    if cfg.kind == "ideal":
        return model.copy()
    if cfg.kind == "awgn":
        return awgn_perturb(model, cfg.snr_db, rng)
    if cfg.codec.representation == "quantized_int":
        quantized = quantize_model(model, cfg.codec.bitwidth)
        bits = _corrupt_bitstream(serialize_bits(quantized.integers, cfg.codec), cfg, rng)
        integers = deserialize_bits(bits, cfg.codec, model.vectors.shape)
        quantized = QuantizedModel(integers.astype(np.int64), quantized.gains, cfg.codec.bitwidth)
        return dequantize_model(quantized, model.counts)
    bits = _corrupt_bitstream(serialize_bits(model.vectors, cfg.codec), cfg, rng)
    values = deserialize_bits(bits, cfg.codec, model.vectors.shape)
    return ClassPrototypes(values, model.counts.copy())


# ---------------------------------------------------------------------------
# Partial-information masking


def random_keep_mask(dim: int, keep_fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask keeping exactly round(keep_fraction * dim) positions."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    keep = int(round(keep_fraction * dim))
    mask = np.zeros(dim, dtype=bool)
    mask[rng.choice(dim, size=keep, replace=False)] = True
    return mask


def mask_prototypes(
    model: ClassPrototypes, keep_fraction: float, rng: np.random.Generator
) -> ClassPrototypes:
    """Zero a shared random subset of dimensions across every prototype."""
    mask = random_keep_mask(model.hd_dim, keep_fraction, rng)
    return ClassPrototypes(model.vectors * mask, model.counts.copy())


# ---------------------------------------------------------------------------
# HDFM model frames


def _codec_tag(codec: CodecConfig) -> int:
    if codec.representation == "float32":
        return 0
    if codec.representation == "int32":
        return 1
    return 128 + codec.bitwidth


def _codec_from_tag(tag: int) -> CodecConfig:
    if tag == 0:
        return CodecConfig("float32")
    if tag == 1:
        return CodecConfig("int32")
    if 130 <= tag <= 160:
        return CodecConfig("quantized_int", bitwidth=tag - 128)
    raise CodecError(f"unknown codec tag {tag}")


def write_model_bytes(model: ClassPrototypes, codec: CodecConfig | None = None) -> bytes:
    """Serialize a model to a self-describing HDFM frame."""
    codec = codec or CodecConfig()
    k, d = model.vectors.shape
    out = bytearray()
    out += HDFM_MAGIC
    out += struct.pack("<BIIB", HDFM_VERSION, k, d, _codec_tag(codec))
    if codec.representation == "quantized_int":
        quantized = quantize_model(model, codec.bitwidth)
        out += quantized.gains.astype("<f8").tobytes()
        bits = serialize_bits(quantized.integers, codec)
    else:
        bits = serialize_bits(model.vectors, codec)
    pad = (-bits.size) % 8
    if pad:
        bits = np.concatenate([bits, np.zeros(pad, dtype=np.uint8)])
    out += np.packbits(bits, bitorder="little").tobytes()
    return bytes(out)


def read_model_bytes(blob: bytes) -> tuple[ClassPrototypes, CodecConfig]:
    """Parse an HDFM frame. Sample counts are not part of the wire format,
    so the returned model carries zero counts."""
    if len(blob) < HEADER_BYTES or blob[:4] != HDFM_MAGIC:
        raise CodecError("not an HDFM frame")
    version, k, d, tag = struct.unpack("<BIIB", blob[4:HEADER_BYTES])
    if version != HDFM_VERSION:
        raise CodecError(f"unsupported HDFM version {version}")
    codec = _codec_from_tag(tag)
    offset = HEADER_BYTES
    gains = None
    if codec.representation == "quantized_int":
        gains = np.frombuffer(blob, dtype="<f8", count=k, offset=offset)
        offset += 8 * k
    n_bits = k * d * codec.value_bits
    n_bytes = -(-n_bits // 8)
    payload = blob[offset : offset + n_bytes]
    if len(payload) != n_bytes:
        raise CodecError("truncated HDFM payload")
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), bitorder="little")[:n_bits]
    values = deserialize_bits(bits, codec, (k, d))
    if gains is not None:
        values = values / gains[:, None]
    counts = np.zeros(k, dtype=np.int64)
    return ClassPrototypes(values, counts), codec


def write_model(model: ClassPrototypes, path: str, codec: CodecConfig | None = None) -> None:
    with open(path, "wb") as f:
        f.write(write_model_bytes(model, codec))


def read_model(path: str) -> tuple[ClassPrototypes, CodecConfig]:
    with open(path, "rb") as f:
        return read_model_bytes(f.read())
