"""A small ReLU MLP with hand-written backprop, Adam, and prototype alignment.

Parameters are stored as float32; forward and backward passes run in float64.
The encoder is every layer but the last (ReLU after each); the last layer is
a linear head producing class logits.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from pretextprobe.augment import PretextTask, view_pairs
from pretextprobe.data import Dataset
from pretextprobe.errors import ConfigError, CoverageError, DataError, DimensionError, FormatError
from pretextprobe.numerics import make_rng, softmax

CHECKPOINT_MAGIC = b"KPM1"
CHECKPOINT_VERSION = 1


@dataclass
class MlpModel:
    dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    history: list[float] = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        self.dims = [int(d) for d in self.dims]
        if len(self.dims) < 3:
            raise DimensionError("need at least input, embedding and class dimensions")
        if self.dims[-2] < 2:
            raise DimensionError("embedding dimension must be >= 2")
        if len(self.weights) != len(self.dims) - 1 or len(self.biases) != len(self.weights):
            raise DimensionError("layer count does not match dims")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.dims[i], self.dims[i + 1]) or b.shape != (self.dims[i + 1],):
                raise DimensionError(f"layer {i} has shapes {w.shape}/{b.shape}, dims say {self.dims[i:i + 2]}")

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def embedding_dim(self) -> int:
        return self.dims[-2]

    @property
    def num_classes(self) -> int:
        return self.dims[-1]

    def params(self) -> list[np.ndarray]:
        """Parameters in declaration order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_params(self, params) -> None:
        self.weights = list(params[0::2])
        self.biases = list(params[1::2])

    def num_params(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "MlpModel":
        return MlpModel(list(self.dims), [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def astype(self, dtype) -> "MlpModel":
        return MlpModel(list(self.dims), [w.astype(dtype) for w in self.weights], [b.astype(dtype) for b in self.biases])

    def predict(self, images: np.ndarray) -> np.ndarray:
        _, probs = forward(self, images)
        return probs.argmax(axis=1)

    def embed(self, images: np.ndarray) -> np.ndarray:
        return forward(self, images)[0]


def init_model(input_dim: int, num_classes: int, hidden=(128,), embedding_dim: int = 64, seed: int = 0) -> MlpModel:
    """Kaiming-uniform weights (fan-in), zero biases."""
    dims = [int(input_dim), *[int(h) for h in hidden], int(embedding_dim), int(num_classes)]
    rng = make_rng(seed, "init")
    weights, biases = [], []
    for i in range(len(dims) - 1):
        gain = 6.0 if i < len(dims) - 2 else 3.0
        bound = math.sqrt(gain / dims[i])
        weights.append(rng.uniform(-bound, bound, size=(dims[i], dims[i + 1])).astype(np.float32))
        biases.append(np.zeros(dims[i + 1], dtype=np.float32))
    return MlpModel(dims, weights, biases)


def _forward_cache(model: MlpModel, images: np.ndarray):
    x = np.asarray(images)
    n = x.shape[0]
    x = x.reshape(n, -1).astype(np.float64)
    if x.shape[1] != model.input_dim:
        raise DimensionError(f"model expects {model.input_dim} inputs, batch has {x.shape[1]}")
    acts = [x]
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        acts.append(np.maximum(acts[-1] @ w.astype(np.float64) + b, 0.0))
    logits = acts[-1] @ model.weights[-1].astype(np.float64) + model.biases[-1]
    return acts, softmax(logits)


def forward(model: MlpModel, batch: np.ndarray):
    """Return ``(embeddings, probs)`` as float32 arrays."""
    acts, probs = _forward_cache(model, batch)
    return acts[-1].astype(np.float32), probs.astype(np.float32)


def _backward(model: MlpModel, acts, dlogits) -> list[np.ndarray]:
    grads = [None] * (2 * len(model.weights))
    delta = dlogits
    for i in range(len(model.weights) - 1, -1, -1):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i:
            delta = (delta @ model.weights[i].astype(np.float64).T) * (acts[i] > 0)
    return grads


def _add_weight_decay(model, grads, weight_decay):
    if not weight_decay:
        return 0.0
    penalty = 0.0
    for k, p in enumerate(model.params()):
        p64 = p.astype(np.float64)
        grads[k] = grads[k] + weight_decay * p64
        penalty += 0.5 * weight_decay * float(np.sum(p64 * p64))
    return penalty


def grad_cross_entropy(model: MlpModel, images, labels, weight_decay: float = 0.0):
    """Mean cross-entropy plus ``weight_decay/2 * ||theta||^2``; returns ``(loss, grads)``."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(labels) != len(images):
        raise DimensionError("labels and images differ in length")
    if len(labels) == 0:
        raise DataError("empty batch")
    if labels.min() < 0 or labels.max() >= model.num_classes:
        raise DataError(f"labels outside [0, {model.num_classes})")
    acts, probs = _forward_cache(model, images)
    n = len(labels)
    picked = probs[np.arange(n), labels]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    grads = _backward(model, acts, dlogits / n)
    loss += _add_weight_decay(model, grads, weight_decay)
    return loss, grads


def _softmax_backward(probs, dprobs):
    return probs * (dprobs - np.sum(dprobs * probs, axis=1, keepdims=True))


def grad_consistency_mse(model: MlpModel, views_a, views_b, weight_decay: float = 0.0):
    """Mean squared difference of the two views' class probabilities.

    Both branches are differentiated. Returns ``(loss, grads)``.
    """
    views_a = np.asarray(views_a)
    views_b = np.asarray(views_b)
    if views_a.shape != views_b.shape:
        raise DimensionError(f"view shapes differ: {views_a.shape} vs {views_b.shape}")
    if len(views_a) == 0:
        raise DataError("empty batch")
    acts_a, pa = _forward_cache(model, views_a)
    acts_b, pb = _forward_cache(model, views_b)
    diff = pa - pb
    loss = float(np.mean(diff * diff))
    g = 2.0 * diff / diff.size
    grads_a = _backward(model, acts_a, _softmax_backward(pa, g))
    grads_b = _backward(model, acts_b, _softmax_backward(pb, -g))
    grads = [ga + gb for ga, gb in zip(grads_a, grads_b)]
    loss += _add_weight_decay(model, grads, weight_decay)
    return loss, grads


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs: int = 5
    learning_rate: float = 5e-5
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    hidden: tuple = (128,)
    embedding_dim: int = 64

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


class Adam:
    """Adam with L2 weight decay folded into the gradient (the decay term is
    added by the gradient functions, not here)."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(p.shape) for p in params]
        self.v = [np.zeros(p.shape) for p in params]
        self.t = 0

    def step(self, params, grads, frozen=()):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        out = []
        for k, (p, g) in enumerate(zip(params, grads)):
            if k in frozen:
                out.append(p)
                continue
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            update = self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            out.append((p.astype(np.float64) - update).astype(p.dtype))
        return out


def _optimizer(model, cfg: TrainConfig) -> Adam:
    return Adam(model.params(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    """Endless stream of index batches; each epoch is a fresh permutation."""
    while True:
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield perm[start:start + batch_size]


def steps_per_epoch(n: int, batch_size: int) -> int:
    return -(-n // batch_size)


def new_model(ds: Dataset, cfg: TrainConfig) -> MlpModel:
    c, h, w = ds.image_shape
    return init_model(c * h * w, ds.num_classes, cfg.hidden, cfg.embedding_dim, cfg.seed)


def supervised_stream(labeled: Dataset, cfg: TrainConfig):
    return epoch_batches(len(labeled), cfg.batch_size, make_rng(cfg.seed, "supervised-shuffle"))


def encoder_param_indices(model: MlpModel) -> tuple[int, ...]:
    return tuple(range(2 * (len(model.weights) - 1)))


def train_supervised(labeled: Dataset, cfg: TrainConfig, init: MlpModel | None = None, train_encoder: bool = True) -> MlpModel:
    """Adam on mean cross-entropy over ``cfg.epochs`` passes of the labeled set.

    ``init`` starts from given parameters (fine-tuning); ``train_encoder=False``
    freezes everything but the head.
    """
    if len(labeled) == 0:
        raise DataError("cannot train on an empty labeled set")
    labels = labeled.require_labels()
    if np.any(np.bincount(labels, minlength=labeled.num_classes) == 0):
        warnings.warn("some classes have no labeled examples", stacklevel=2)
    model = new_model(labeled, cfg) if init is None else init.copy()
    opt = _optimizer(model, cfg)
    frozen = () if train_encoder else encoder_param_indices(model)
    stream = supervised_stream(labeled, cfg)
    per_epoch = steps_per_epoch(len(labeled), cfg.batch_size)
    for _ in range(cfg.epochs):
        total = 0.0
        for _ in range(per_epoch):
            idx = next(stream)
            loss, grads = grad_cross_entropy(model, labeled.images[idx], labels[idx], cfg.weight_decay)
            model.set_params(opt.step(model.params(), grads, frozen))
            total += loss * len(idx)
        model.history.append(total / len(labeled))
    return model


def train_pretext(unlabeled: Dataset, task: PretextTask, cfg: TrainConfig, init: MlpModel | None = None) -> MlpModel:
    """Consistency training: fresh view pairs of every batch, MSE between the
    two views' class probabilities."""
    if len(unlabeled) == 0:
        raise DataError("cannot train on an empty unlabeled set")
    model = new_model(unlabeled, cfg) if init is None else init.copy()
    opt = _optimizer(model, cfg)
    stream = epoch_batches(len(unlabeled), cfg.batch_size, make_rng(cfg.seed, "pretext-shuffle"))
    view_rng = make_rng(cfg.seed, "pretext-views")
    per_epoch = steps_per_epoch(len(unlabeled), cfg.batch_size)
    for _ in range(cfg.epochs):
        total = 0.0
        for _ in range(per_epoch):
            idx = next(stream)
            a, b = view_pairs(unlabeled.images[idx], task, view_rng)
            loss, grads = grad_consistency_mse(model, a, b, cfg.weight_decay)
            model.set_params(opt.step(model.params(), grads))
            total += loss * len(idx)
        model.history.append(total / len(unlabeled))
    return model


def consistency_loss(model: MlpModel, images: np.ndarray, task: PretextTask, rng) -> float:
    """Held-out consistency MSE (no weight decay) on one fresh view pair per image."""
    a, b = view_pairs(images, task, rng)
    return grad_consistency_mse(model, a, b)[0]


@dataclass
class PrototypeClassifier:
    """Nearest-class-mean classifier over an encoder's embeddings."""

    prototypes: np.ndarray
    encoder: MlpModel

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]

    def classify_embeddings(self, emb: np.ndarray) -> np.ndarray:
        emb = np.asarray(emb, dtype=np.float64)
        d2 = ((emb[:, None, :] - self.prototypes[None, :, :]) ** 2).sum(axis=2)
        return d2.argmin(axis=1)

    def predict(self, images: np.ndarray) -> np.ndarray:
        return self.classify_embeddings(self.encoder.embed(images))


def build_prototype_classifier(encoder_of: MlpModel, labeled: Dataset) -> PrototypeClassifier:
    labels = labeled.require_labels()
    counts = np.bincount(labels, minlength=labeled.num_classes)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise CoverageError(f"cannot build prototypes: no examples for classes {missing.tolist()}")
    emb = encoder_of.embed(labeled.images).astype(np.float64)
    protos = np.zeros((labeled.num_classes, emb.shape[1]))
    np.add.at(protos, labels, emb)
    protos /= counts[:, None]
    return PrototypeClassifier(protos, encoder_of)


def evaluate_error(labeler, test: Dataset) -> float:
    if len(test) == 0:
        raise DataError("empty test set")
    labels = test.require_labels()
    predict = getattr(labeler, "predict", labeler)
    pred = np.asarray(predict(test.images)).reshape(-1)
    return float(np.mean(pred != labels))


def save_model(path, model: MlpModel) -> None:
    """``KPM1``: magic, u32 version, u32 layer-dim count, u32 dims, then every
    parameter as little-endian f32 in declaration order (W as in x out, row-major)."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<2I", CHECKPOINT_VERSION, len(model.dims)))
        fh.write(struct.pack(f"<{len(model.dims)}I", *model.dims))
        for p in model.params():
            fh.write(np.asarray(p, dtype="<f4").tobytes(order="C"))


def load_model(path) -> MlpModel:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated header")
    version, ndims = struct.unpack_from("<2I", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if ndims < 3 or ndims > 64 or len(raw) < 12 + 4 * ndims:
        raise FormatError(f"{path}: bad layer count {ndims}")
    dims = list(struct.unpack_from(f"<{ndims}I", raw, 12))
    pos = 12 + 4 * ndims
    params = []
    for i in range(ndims - 1):
        for shape in ((dims[i], dims[i + 1]), (dims[i + 1],)):
            count = int(np.prod(shape))
            if len(raw) < pos + 4 * count:
                raise FormatError(f"{path}: truncated parameters")
            params.append(np.frombuffer(raw, dtype="<f4", count=count, offset=pos).reshape(shape).astype(np.float32))
            pos += 4 * count
    if pos != len(raw):
        raise FormatError(f"{path}: trailing bytes")
    return MlpModel(dims, params[0::2], params[1::2])
