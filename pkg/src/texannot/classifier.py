"""Patch classification: texture features + multinomial logistic regression.

The feature vector is three L1-normalized histogram blocks over a 224x224
patch: 16-bin color histograms per RGB channel (48), a 59-bin uniform
local-binary-pattern histogram (59), and a 16-bin gradient-orientation
histogram (16) - 123 dimensions total. The classifier is a softmax model
over those features with a bias column, trained by mini-batch SGD on mean
cross-entropy. Any object exposing `class_roster` and `predict(patch)` can
stand in for it downstream (see PatchClassifier).
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np

from .errors import ConfigurationError, IncompatibilityError, ValidationError
from .imaging import PATCH_SIZE, Raster

COLOR_BINS = 16
LBP_BINS = 59
GRAD_BINS = 16
FEATURE_DIM = 3 * COLOR_BINS + LBP_BINS + GRAD_BINS  # 123

BACKGROUND = "background"

MODEL_MAGIC = b"TXAMODEL"
MODEL_VERSION = 1


def _uniform_lbp_table() -> np.ndarray:
    """Map each 8-bit LBP code to a bin: 58 uniform patterns + 1 catch-all."""
    table = np.full(256, LBP_BINS - 1, dtype=np.int64)
    next_bin = 0
    for code in range(256):
        bits = [(code >> k) & 1 for k in range(8)]
        transitions = sum(bits[k] != bits[(k + 1) % 8] for k in range(8))
        if transitions <= 2:
            table[code] = next_bin
            next_bin += 1
    assert next_bin == 58
    return table


_LBP_TABLE = _uniform_lbp_table()

# (dy, dx, bit) neighbor layout for the 3x3 LBP ring.
_LBP_NEIGHBORS = [(-1, -1, 0), (-1, 0, 1), (-1, 1, 2), (0, 1, 3),
                  (1, 1, 4), (1, 0, 5), (1, -1, 6), (0, -1, 7)]


def _grayscale(pixels: np.ndarray) -> np.ndarray:
    p = pixels.astype(np.float64)
    return 0.299 * p[:, :, 0] + 0.587 * p[:, :, 1] + 0.114 * p[:, :, 2]


def _color_histograms(pixels: np.ndarray) -> np.ndarray:
    total = pixels.shape[0] * pixels.shape[1]
    parts = []
    for c in range(3):
        counts = np.bincount(pixels[:, :, c].ravel() >> 4, minlength=COLOR_BINS)
        parts.append(counts / total)
    return np.concatenate(parts)


def _lbp_histogram(gray: np.ndarray) -> np.ndarray:
    center = gray[1:-1, 1:-1]
    h, w = gray.shape
    code = np.zeros(center.shape, dtype=np.int64)
    for dy, dx, bit in _LBP_NEIGHBORS:
        neighbor = gray[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]
        code |= (neighbor >= center).astype(np.int64) << bit
    counts = np.bincount(_LBP_TABLE[code.ravel()], minlength=LBP_BINS)
    return counts / center.size


def _gradient_histogram(gray: np.ndarray) -> np.ndarray:
    gx = gray[1:-1, 2:] - gray[1:-1, :-2]
    gy = gray[2:, 1:-1] - gray[:-2, 1:-1]
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx)  # [-pi, pi]
    bins = np.minimum((ang + np.pi) * (GRAD_BINS / (2 * np.pi)), GRAD_BINS - 1).astype(np.int64)
    hist = np.bincount(bins.ravel(), weights=mag.ravel(), minlength=GRAD_BINS)
    total = hist.sum()
    if total == 0.0:
        # Flat patch: no gradient mass anywhere, park it in bin 0.
        hist[0] = 1.0
        return hist
    return hist / total


def featurize(patch: Raster) -> np.ndarray:
    """123-dim feature vector for a 224x224 patch (deterministic)."""
    if patch.width != PATCH_SIZE or patch.height != PATCH_SIZE:
        raise ValidationError(f"featurize expects {PATCH_SIZE}x{PATCH_SIZE}, got {patch.width}x{patch.height}")
    gray = _grayscale(patch.pixels)
    return np.concatenate([
        _color_histograms(patch.pixels),
        _lbp_histogram(gray),
        _gradient_histogram(gray),
    ])


@dataclass
class ClassDistribution:
    """Softmax output for one patch."""

    probabilities: np.ndarray
    class_roster: Sequence[str]

    @property
    def top_index(self) -> int:
        return int(np.argmax(self.probabilities))

    @property
    def top_class(self) -> str:
        return self.class_roster[self.top_index]

    @property
    def confidence(self) -> float:
        return float(self.probabilities[self.top_index])


class PatchClassifier(Protocol):
    """Anything that can classify a 224x224 patch drives the segmenter."""

    class_roster: Sequence[str]

    def predict(self, patch: Raster) -> ClassDistribution: ...


@dataclass
class TrainingMeta:
    seed: int
    epochs: int
    learning_rate: float
    batch_size: int
    final_train_loss: float | None = None
    final_validation_loss: float | None = None
    validation_precision: dict[str, float | None] = field(default_factory=dict)


@dataclass
class SoftmaxModel:
    """Multinomial logistic regression over patch features.

    `weights` is K x (D+1); the last column is the bias.
    """

    weights: np.ndarray
    class_roster: list[str]
    training_meta: TrainingMeta

    def __post_init__(self):
        k, d1 = self.weights.shape
        if k != len(self.class_roster) or k < 2:
            raise ValidationError(f"weights rows {k} must match roster size >= 2")
        if not np.all(np.isfinite(self.weights)):
            raise ValidationError("weights must be finite")
        self.feature_dim = d1 - 1

    def predict(self, patch: Raster) -> ClassDistribution:
        return self.predict_features(featurize(patch))

    def predict_features(self, features: np.ndarray) -> ClassDistribution:
        if features.shape[0] != self.feature_dim:
            raise IncompatibilityError(
                f"model expects {self.feature_dim} features, featurizer produced {features.shape[0]}")
        logits = self.weights[:, :-1] @ features + self.weights[:, -1]
        return ClassDistribution(_softmax(logits), self.class_roster)


def predict(model: PatchClassifier, patch: Raster) -> ClassDistribution:
    """Classify one patch with any classifier implementation."""
    return model.predict(patch)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _with_bias(x: np.ndarray) -> np.ndarray:
    return np.hstack([x, np.ones((x.shape[0], 1))])


def gradient_of_loss(model: SoftmaxModel, batch: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """Mean softmax cross-entropy gradient, shape K x (D+1).

    `batch` is (features NxD, labels N as roster indices).
    """
    x, y = batch
    if x.shape[0] == 0:
        raise ValidationError("gradient needs a nonempty batch")
    xb = _with_bias(x)
    probs = _softmax(xb @ model.weights.T)
    probs[np.arange(len(y)), y] -= 1.0
    return probs.T @ xb / len(y)


def cross_entropy(model: SoftmaxModel, x: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy of labeled features under the model."""
    xb = _with_bias(x)
    probs = _softmax(xb @ model.weights.T)
    eps = np.finfo(np.float64).tiny
    return float(-np.mean(np.log(probs[np.arange(len(y)), y] + eps)))


def train_on_features(x_train: np.ndarray, y_train: np.ndarray,
                      x_val: np.ndarray, y_val: np.ndarray,
                      class_roster: list[str], lr: float = 0.001,
                      epochs: int = 100, batch: int = 32, seed: int = 0) -> SoftmaxModel:
    """Mini-batch SGD from zero-initialized weights, deterministic given seed."""
    if len(class_roster) < 2:
        raise ConfigurationError("need at least 2 classes to train")
    present = np.unique(y_train)
    if present.size < 2:
        raise ConfigurationError("need train examples from at least 2 classes")
    meta = TrainingMeta(seed=seed, epochs=epochs, learning_rate=lr, batch_size=batch)
    model = SoftmaxModel(np.zeros((len(class_roster), x_train.shape[1] + 1)), list(class_roster), meta)
    rng = np.random.default_rng(seed)
    n = x_train.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            grad = gradient_of_loss(model, (x_train[idx], y_train[idx]))
            model.weights -= lr * grad
    meta.final_train_loss = cross_entropy(model, x_train, y_train)
    if len(y_val):
        meta.final_validation_loss = cross_entropy(model, x_val, y_val)
        meta.validation_precision = _per_class_precision(model, x_val, y_val)
    return model


def featurize_patches(patches: Iterable, images) -> np.ndarray:
    """Feature matrix for provenance patches (anything with .materialize)."""
    return np.array([featurize(p.materialize(images)) for p in patches])


def train(split, images, lr: float = 0.001, epochs: int = 100, batch: int = 32,
          seed: int = 0) -> SoftmaxModel:
    """Train the reference classifier on a dataset split.

    `split` is a dataprep.DatasetSplit; `images` maps image ids to rasters
    (a plain dict or an LRU-backed store source). Patches are materialized
    and featurized lazily, one at a time.
    """
    roster = list(split.class_roster)
    index = {name: i for i, name in enumerate(roster)}
    missing = {p.label for p in split.train + split.validation} - set(roster)
    if missing:
        raise ConfigurationError(f"patch labels {sorted(missing)} missing from roster")
    x_train = featurize_patches(split.train, images)
    y_train = np.array([index[p.label] for p in split.train], dtype=np.int64)
    x_val = featurize_patches(split.validation, images)
    y_val = np.array([index[p.label] for p in split.validation], dtype=np.int64)
    if x_val.size == 0:
        x_val = np.zeros((0, x_train.shape[1]))
    return train_on_features(x_train, y_train, x_val, y_val, roster,
                             lr=lr, epochs=epochs, batch=batch, seed=seed)


def _per_class_precision(model: SoftmaxModel, x: np.ndarray, y: np.ndarray) -> dict[str, float | None]:
    pred = np.argmax(_softmax(_with_bias(x) @ model.weights.T), axis=1)
    out: dict[str, float | None] = {}
    for k, name in enumerate(model.class_roster):
        hits = pred == k
        out[name] = float(np.mean(y[hits] == k)) if hits.any() else None
    return out


def save_model(model: SoftmaxModel) -> bytes:
    """Serialize to a single self-describing blob.

    Layout: magic, header length (LE uint32), JSON header, then the weight
    matrix as row-major little-endian float64.
    """
    header = {
        "version": MODEL_VERSION,
        "class_roster": model.class_roster,
        "feature_dim": model.feature_dim,
        "training_meta": {
            "seed": model.training_meta.seed,
            "epochs": model.training_meta.epochs,
            "learning_rate": model.training_meta.learning_rate,
            "batch_size": model.training_meta.batch_size,
            "final_train_loss": model.training_meta.final_train_loss,
            "final_validation_loss": model.training_meta.final_validation_loss,
            "validation_precision": model.training_meta.validation_precision,
        },
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<I", len(head)))
    buf.write(head)
    buf.write(model.weights.astype("<f8").tobytes(order="C"))
    return buf.getvalue()


def load_model(data: bytes) -> SoftmaxModel:
    if data[:len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise ValidationError("not a model file (bad magic)")
    off = len(MODEL_MAGIC)
    (head_len,) = struct.unpack_from("<I", data, off)
    off += 4
    header = json.loads(data[off:off + head_len].decode("utf-8"))
    if header["version"] != MODEL_VERSION:
        raise ValidationError(f"unsupported model version {header['version']}")
    off += head_len
    roster = list(header["class_roster"])
    d1 = header["feature_dim"] + 1
    weights = np.frombuffer(data[off:], dtype="<f8").reshape(len(roster), d1).copy()
    tm = header["training_meta"]
    meta = TrainingMeta(seed=tm["seed"], epochs=tm["epochs"], learning_rate=tm["learning_rate"],
                        batch_size=tm["batch_size"], final_train_loss=tm["final_train_loss"],
                        final_validation_loss=tm["final_validation_loss"],
                        validation_precision=tm.get("validation_precision", {}))
    return SoftmaxModel(weights, roster, meta)
