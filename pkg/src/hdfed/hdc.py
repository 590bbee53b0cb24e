"""Hyperdimensional classification core.

Random-projection encoding into a d-dimensional space, class prototypes
built by bundling (element-wise sum), cosine-similarity inference, and
perceptron-style retraining. Also holds the reference operations used to
cross-check the trainer: a linear-discriminant direction, an explicit
hinge-style loss, and reconstruction from noisy encodings.

All functions are pure: they never mutate their inputs and take RNG state
explicitly, so values can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeding import STREAM_PROJECTION, derived_rng


class DimensionError(ValueError):
    """Operand dimensions are invalid or inconsistent."""


@dataclass(frozen=True)
class EncoderConfig:
    """Random-projection encoder parameters.

    ``input_dim`` is the raw feature length, ``hd_dim`` the hyperdimensional
    length (must not be smaller), and ``quantize`` selects element-wise sign
    output (+1/-1) instead of raw projections.
    """

    input_dim: int
    hd_dim: int = 10000
    seed: int = 0
    quantize: bool = False

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise DimensionError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.hd_dim < 1:
            raise DimensionError(f"hd_dim must be >= 1, got {self.hd_dim}")
        if self.hd_dim < self.input_dim:
            raise DimensionError(
                f"hd_dim ({self.hd_dim}) must be >= input_dim ({self.input_dim})"
            )
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class ProjectionMatrix:
    """d x m projection with unit-norm rows, reproducible from (m, d, seed)."""

    rows: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.rows.shape[1]

    @property
    def hd_dim(self) -> int:
        return self.rows.shape[0]


@dataclass
class ClassPrototypes:
    """Per-class bundled hypervectors plus bundle sample counts.

    ``vectors`` is (K, d) float64; prototypes accumulate in float64 so that
    summing millions of +/-1 elements stays exact. ``counts`` tracks how many
    samples were bundled into each class and is bookkeeping only; inference
    never reads it.
    """

    vectors: np.ndarray
    counts: np.ndarray

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.vectors.ndim != 2:
            raise DimensionError("prototype vectors must be a (K, d) matrix")
        if self.num_classes < 2:
            raise DimensionError(f"need at least 2 classes, got {self.num_classes}")
        if self.counts.shape != (self.num_classes,):
            raise DimensionError("counts length must equal number of classes")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def num_classes(self) -> int:
        return self.vectors.shape[0]

    @property
    def hd_dim(self) -> int:
        return self.vectors.shape[1]

    def copy(self) -> "ClassPrototypes":
        return ClassPrototypes(self.vectors.copy(), self.counts.copy())

    @classmethod
    def zeros(cls, num_classes: int, hd_dim: int) -> "ClassPrototypes":
        return cls(np.zeros((num_classes, hd_dim)), np.zeros(num_classes, dtype=np.int64))


def make_projection(input_dim: int, hd_dim: int, seed: int) -> ProjectionMatrix:
    """Draw hd_dim random directions on the unit sphere in input_dim dimensions.

    Each row is input_dim independent standard-normal deviates normalized to
    unit Euclidean norm. Deterministic in (input_dim, hd_dim, seed).
    """
    if input_dim < 1 or hd_dim < 1:
        raise DimensionError(
            f"projection dims must be positive, got m={input_dim}, d={hd_dim}"
        )
    rng = derived_rng(seed, STREAM_PROJECTION, hd_dim, input_dim)
    rows = rng.standard_normal((hd_dim, input_dim))
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    # A numerically zero gaussian row is not observable in practice, but
    # guard the division anyway.
    norms[norms == 0.0] = 1.0
    rows = rows / norms
    rows.flags.writeable = False
    return ProjectionMatrix(rows)


def projection_for(config: EncoderConfig) -> ProjectionMatrix:
    return make_projection(config.input_dim, config.hd_dim, config.seed)


def encode(phi: ProjectionMatrix, x: np.ndarray, quantize: bool = False) -> np.ndarray:
    """Project one sample; optionally take the element-wise sign (sign(0) = +1)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != phi.input_dim:
        raise DimensionError(
            f"expected input of length {phi.input_dim}, got shape {x.shape}"
        )
    h = phi.rows @ x
    if quantize:
        return np.where(h >= 0.0, 1.0, -1.0)
    return h


def encode_batch(phi: ProjectionMatrix, xs: np.ndarray, quantize: bool = False) -> np.ndarray:
    """Encode rows of an (n, m) matrix; output rows follow input order."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != phi.input_dim:
        raise DimensionError(
            f"expected (n, {phi.input_dim}) inputs, got shape {xs.shape}"
        )
    hs = xs @ phi.rows.T
    if quantize:
        return np.where(hs >= 0.0, 1.0, -1.0)
    return hs


def one_shot_train(hvs: np.ndarray, labels: np.ndarray, num_classes: int) -> ClassPrototypes:
    """Bundle encoded samples into per-class prototypes in a single pass.

    Classes that receive no samples get a zero prototype and count 0.
    """
    hvs = np.asarray(hvs, dtype=np.float64)
    labels = np.asarray(labels)
    if hvs.ndim != 2 or hvs.shape[0] == 0:
        raise ValueError("need a non-empty (n, d) sample matrix")
    if labels.shape != (hvs.shape[0],):
        raise DimensionError("labels must align with samples")
    if np.any(labels < 0) or np.any(labels >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")
    vectors = np.zeros((num_classes, hvs.shape[1]))
    counts = np.zeros(num_classes, dtype=np.int64)
    np.add.at(vectors, labels, hvs)
    np.add.at(counts, labels, 1)
    return ClassPrototypes(vectors, counts)


def similarity(c: np.ndarray, h: np.ndarray) -> float:
    """Norm-invariant similarity <c, h> / ||c||, defined as 0 for ||c|| = 0.

    The zero convention keeps empty-class prototypes from ever winning the
    argmax in prediction.
    """
    c = np.asarray(c, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if c.shape != h.shape:
        raise DimensionError(f"length mismatch: {c.shape} vs {h.shape}")
    norm = np.linalg.norm(c)
    if norm == 0.0:
        return 0.0
    return float(np.dot(c, h) / norm)


def _prototype_norms(vectors: np.ndarray) -> np.ndarray:
    return np.linalg.norm(vectors, axis=1)


def _similarity_matrix(vectors: np.ndarray, norms: np.ndarray, hs: np.ndarray) -> np.ndarray:
    sims = hs @ vectors.T
    safe = np.where(norms == 0.0, 1.0, norms)
    sims /= safe
    sims[:, norms == 0.0] = 0.0
    return sims


def predict_batch(prototypes: ClassPrototypes, hs: np.ndarray) -> np.ndarray:
    """Most-similar class per row; ties resolve to the lowest class index."""
    hs = np.asarray(hs, dtype=np.float64)
    if hs.ndim != 2 or hs.shape[1] != prototypes.hd_dim:
        raise DimensionError(
            f"expected (n, {prototypes.hd_dim}) queries, got shape {hs.shape}"
        )
    sims = _similarity_matrix(prototypes.vectors, _prototype_norms(prototypes.vectors), hs)
    return np.argmax(sims, axis=1)


def predict(prototypes: ClassPrototypes, h: np.ndarray) -> int:
    h = np.asarray(h, dtype=np.float64)
    return int(predict_batch(prototypes, h[np.newaxis, :])[0])


def accuracy(prototypes: ClassPrototypes, hs: np.ndarray, labels: np.ndarray) -> float:
    preds = predict_batch(prototypes, hs)
    return float(np.mean(preds == np.asarray(labels)))


def multiclass_margin_loss(prototypes: ClassPrototypes, hs: np.ndarray, labels: np.ndarray) -> float:
    """Mean hinge gap between the best wrong class and the true class.

    Zero exactly when every sample's true class strictly dominates (or ties
    from the favorable side) all other similarities.
    """
    hs = np.asarray(hs, dtype=np.float64)
    labels = np.asarray(labels)
    sims = _similarity_matrix(prototypes.vectors, _prototype_norms(prototypes.vectors), hs)
    n = sims.shape[0]
    true = sims[np.arange(n), labels]
    masked = sims.copy()
    masked[np.arange(n), labels] = -np.inf
    rival = masked.max(axis=1)
    return float(np.mean(np.maximum(0.0, rival - true)))


def retrain_epoch(
    prototypes: ClassPrototypes,
    hvs: np.ndarray,
    labels: np.ndarray,
    alpha: float,
) -> tuple[ClassPrototypes, int]:
    """One correction pass over the samples in the given order.

    Each mispredicted sample is added (scaled by alpha) to its true class
    prototype and subtracted from the predicted one. Counts are untouched.
    Returns the updated prototypes and the number of corrections made.
    """
    if alpha <= 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    hvs = np.asarray(hvs, dtype=np.float64)
    labels = np.asarray(labels)
    if hvs.ndim != 2 or hvs.shape[1] != prototypes.hd_dim:
        raise DimensionError("sample dimension does not match prototypes")
    vectors = prototypes.vectors.copy()
    norms = _prototype_norms(vectors)
    mistakes = 0
    for h, label in zip(hvs, labels):
        sims = vectors @ h
        safe = np.where(norms == 0.0, 1.0, norms)
        sims = sims / safe
        sims[norms == 0.0] = 0.0
        pred = int(np.argmax(sims))
        if pred != label:
            vectors[label] += alpha * h
            vectors[pred] -= alpha * h
            norms[label] = np.linalg.norm(vectors[label])
            norms[pred] = np.linalg.norm(vectors[pred])
            mistakes += 1
    return ClassPrototypes(vectors, prototypes.counts.copy()), mistakes


def binary_retrain(
    w: np.ndarray,
    hvs: np.ndarray,
    ys: np.ndarray,
    eta: float,
    passes: int = 1,
) -> np.ndarray:
    """Perceptron-style updates on a separating weight vector.

    For each sample in order, if y * <w, h> <= 0 then w <- w + eta * y * h.
    The non-strict comparison makes training progress from w = 0, which
    otherwise would never update.
    """
    if eta <= 0.0:
        raise ValueError(f"eta must be positive, got {eta}")
    w = np.array(w, dtype=np.float64)
    hvs = np.asarray(hvs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if hvs.ndim != 2 or hvs.shape[1] != w.shape[0]:
        raise DimensionError("sample dimension does not match weights")
    if not np.all(np.isin(ys, (-1.0, 1.0))):
        raise ValueError("binary labels must be -1 or +1")
    for _ in range(passes):
        for h, y in zip(hvs, ys):
            if y * np.dot(w, h) <= 0.0:
                w = w + eta * y * h
    return w


def perceptron_loss(w: np.ndarray, h: np.ndarray, y: float) -> float:
    """max(0, -y <w, h>): zero exactly when the decision sign agrees with y."""
    w = np.asarray(w, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if w.shape != h.shape:
        raise DimensionError(f"length mismatch: {w.shape} vs {h.shape}")
    return float(max(0.0, -y * np.dot(w, h)))


def fisher_direction(
    mean_pos: np.ndarray,
    mean_neg: np.ndarray,
    cov_pos: np.ndarray,
    cov_neg: np.ndarray,
    ridge: float = 1e-8,
) -> np.ndarray:
    """Two-class linear-discriminant direction (sum-of-scatters inverse times
    mean difference).

    Used as a test oracle, not a hot path. A numerically singular scatter
    matrix falls back to a small ridge before solving.
    """
    mean_pos = np.asarray(mean_pos, dtype=np.float64)
    mean_neg = np.asarray(mean_neg, dtype=np.float64)
    cov_pos = np.asarray(cov_pos, dtype=np.float64)
    cov_neg = np.asarray(cov_neg, dtype=np.float64)
    d = mean_pos.shape[0]
    if mean_neg.shape != (d,) or cov_pos.shape != (d, d) or cov_neg.shape != (d, d):
        raise DimensionError("mean/covariance shapes are inconsistent")
    scatter = cov_pos + cov_neg
    diff = mean_pos - mean_neg
    try:
        direction = np.linalg.solve(scatter, diff)
        if not np.all(np.isfinite(direction)):
            raise np.linalg.LinAlgError("non-finite solution")
    except np.linalg.LinAlgError:
        direction = np.linalg.solve(scatter + ridge * np.eye(d), diff)
    return direction


def reconstruct(phi: ProjectionMatrix, h_noisy: np.ndarray) -> np.ndarray:
    """Estimate the raw input from a (possibly noisy) unquantized encoding.

    Returns (m/d) * Phi^T h. For unit-norm random rows E[Phi^T Phi] is
    (d/m) * I, so the m/d factor makes the estimator unbiased; averaging over
    d rows suppresses per-dimension noise.
    """
    h_noisy = np.asarray(h_noisy, dtype=np.float64)
    if h_noisy.ndim != 1 or h_noisy.shape[0] != phi.hd_dim:
        raise DimensionError(
            f"expected encoding of length {phi.hd_dim}, got shape {h_noisy.shape}"
        )
    return (phi.input_dim / phi.hd_dim) * (phi.rows.T @ h_noisy)
