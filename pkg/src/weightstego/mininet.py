"""Small deterministic MLP used as a desk-scale carrier model.

Weights are kept as float32 ``[out, in]`` matrices so a trained network maps
one-to-one onto a :class:`ModelContainer` with tensors ``fc{i}.weight`` and
``fc{i}.bias``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .container import ModelContainer
from .embed import EmbedPlan, Payload, Segment, embed_payload
from .exceptions import DivergenceError, PlanError
from .floatcodec import EmbedMethod

DEFAULT_ARCHITECTURE = (64, 256, 256, 10)
DEFAULT_OFFSET = 2.5


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class Dataset:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray

    @property
    def n_features(self) -> int:
        return self.X_train.shape[1]

    @property
    def n_classes(self) -> int:
        return int(max(self.y_train.max(), self.y_test.max())) + 1


def class_means(seed: int = 0, classes: int = 10, dim: int = 64, separation: float = 6.0) -> np.ndarray:
    """Random class centres scaled so the closest pair is exactly ``separation`` apart."""
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((classes, dim))
    diff = means[:, None, :] - means[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    closest = dist[~np.eye(classes, dtype=bool)].min()
    return means * (separation / closest)


def gen_dataset(
    seed: int = 0,
    classes: int = 10,
    dim: int = 64,
    n_train: int = 10000,
    n_test: int = 2000,
    separation: float = 6.0,
    offset: float = DEFAULT_OFFSET,
) -> Dataset:
    """Gaussian blobs with unit noise; labels are balanced then shuffled.

    Every feature is shifted by ``offset`` so inputs are uncentered, as raw
    pixel intensities are. Networks trained on such data depend on a precise
    balance between weights and biases, which is what makes them sensitive to
    wholesale parameter replacement.
    """
    means = class_means(seed, classes, dim, separation) + offset
    rng = np.random.default_rng([seed, 1])

    def draw(n):
        y = rng.permutation(np.arange(n) % classes)
        X = means[y] + rng.standard_normal((n, dim))
        return X.astype(np.float32), y.astype(np.int64)

    X_train, y_train = draw(n_train)
    X_test, y_test = draw(n_test)
    return Dataset(X_train, y_train, X_test, y_test)


def load_csv_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    """One row per sample: features, then an integer label."""
    rows = []
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if row:
                rows.append(row)
    arr = np.asarray(rows, dtype=np.float64)
    return arr[:, :-1].astype(np.float32), arr[:, -1].astype(np.int64)


def save_csv_dataset(path, X: np.ndarray, y: np.ndarray) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        for xi, yi in zip(X, y):
            w.writerow([repr(float(v)) for v in xi] + [int(yi)])


def split_dataset(X, y, test_fraction: float = 0.2, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(y))
    n_test = max(1, int(round(len(y) * test_fraction)))
    te, tr = idx[:n_test], idx[n_test:]
    return Dataset(X[tr], y[tr], X[te], y[te])


# ---------------------------------------------------------------------------
# forward / backward on plain lists of (W, b)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(params, X):
    """Return (layer inputs, class probabilities). ReLU on hidden layers, softmax on top."""
    acts = [X]
    h = X
    for i, (W, b) in enumerate(params):
        z = h @ W.T + b
        if i < len(params) - 1:
            h = np.maximum(z, 0)
            acts.append(h)
        else:
            h = softmax(z)
    return acts, h


def cross_entropy(probs: np.ndarray, y: np.ndarray) -> float:
    p = probs[np.arange(len(y)), y]
    return float(-np.mean(np.log(np.maximum(p, np.finfo(probs.dtype).tiny))))


def backward(params, acts, probs, y):
    """Gradients of the mean cross-entropy w.r.t. every (W, b)."""
    n = len(y)
    delta = probs.copy()
    delta[np.arange(n), y] -= 1
    delta /= n
    grads = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        W, _ = params[i]
        h = acts[i]
        grads[i] = (delta.T @ h, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ W) * (h > 0)
    return grads


def loss_and_grads(params, X, y):
    acts, probs = forward(params, X)
    return cross_entropy(probs, y), backward(params, acts, probs, y)


# ---------------------------------------------------------------------------
# estimator


def layer_names(n_layers: int) -> list[str]:
    return [f"fc{i}" for i in range(n_layers)]


class MiniNet(ClassifierMixin, BaseEstimator):
    """Fully connected ReLU network trained with mini-batch SGD + momentum.

    Deterministic for a fixed ``random_state``: Glorot-uniform initialization,
    a seeded shuffle per epoch and single-process numpy arithmetic.
    """

    def __init__(
        self,
        hidden_layer_sizes=(256, 256),
        epochs=5,
        learning_rate=0.05,
        momentum=0.9,
        batch_size=64,
        random_state=7,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.random_state = random_state

    # -- parameter handling

    def _init_params(self, n_in: int, n_out: int) -> None:
        dims = [n_in, *self.hidden_layer_sizes, n_out]
        rng = np.random.default_rng(self.random_state)
        self.coefs_, self.intercepts_ = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            self.coefs_.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)).astype(np.float32))
            self.intercepts_.append(np.zeros(fan_out, dtype=np.float32))
        self.n_epochs_ = 0

    @property
    def params_(self):
        return list(zip(self.coefs_, self.intercepts_))

    @property
    def layer_names_(self) -> list[str]:
        return layer_names(len(self.coefs_))

    @property
    def n_parameters_(self) -> int:
        return sum(W.size + b.size for W, b in self.params_)

    # -- training

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float32)
        self.classes_ = np.unique(y)
        self.n_features_in_ = X.shape[1]
        self._init_params(X.shape[1], len(self.classes_))
        self.loss_curve_ = []
        yi = np.searchsorted(self.classes_, y)
        for epoch in range(self.epochs):
            self._epoch(X, yi, frozen=(), seed=(self.random_state, epoch))
        return self

    def partial_fit(self, X, y, frozen: Iterable[str] = (), seed=None):
        """Run one more epoch from the current weights; layers named in ``frozen`` are not updated."""
        check_is_fitted(self, "coefs_")
        X, y = check_X_y(X, y, dtype=np.float32)
        unknown = set(frozen) - set(self.layer_names_)
        if unknown:
            raise PlanError(f"unknown layer(s) to freeze: {sorted(unknown)}")
        yi = np.searchsorted(self.classes_, y)
        if seed is None:
            seed = (self.random_state, self.n_epochs_)
        self._epoch(X, yi, frozen=tuple(frozen), seed=seed)
        return self

    def _epoch(self, X, yi, frozen, seed) -> None:
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(yi))
        trainable = [name not in frozen for name in self.layer_names_]
        # momentum buffers live for one epoch call
        vel = [(np.zeros_like(W), np.zeros_like(b)) for W, b in self.params_]
        lr = np.float32(self.learning_rate)
        mu = np.float32(self.momentum)
        total, batches = 0.0, 0
        for start in range(0, len(order), self.batch_size):
            idx = order[start:start + self.batch_size]
            loss, grads = loss_and_grads(self.params_, X[idx], yi[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {self.n_epochs_}, batch {batches}")
            total += loss
            batches += 1
            for i, (gW, gb) in enumerate(grads):
                if not trainable[i]:
                    continue
                vW, vb = vel[i]
                vW *= mu
                vW -= lr * gW
                vb *= mu
                vb -= lr * gb
                self.coefs_[i] += vW
                self.intercepts_[i] += vb
        self.loss_curve_.append(total / max(batches, 1))
        self.n_epochs_ += 1

    # -- inference

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "coefs_")
        X = check_array(X, dtype=np.float32)
        return forward(self.params_, X)[1]

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def hidden_activations(self, X, layer: int = -1) -> np.ndarray:
        """Post-ReLU output of a hidden layer (default: the penultimate one)."""
        check_is_fitted(self, "coefs_")
        X = check_array(X, dtype=np.float32)
        acts, _ = forward(self.params_, X)
        hidden = acts[1:]
        return hidden[layer]

    # -- serialization

    def to_container(self) -> ModelContainer:
        check_is_fitted(self, "coefs_")
        arrays = []
        for name, W, b in zip(self.layer_names_, self.coefs_, self.intercepts_):
            arrays.append((f"{name}.weight", W))
            arrays.append((f"{name}.bias", b))
        return ModelContainer.from_arrays(arrays)

    @classmethod
    def from_container(cls, c: ModelContainer, **params) -> MiniNet:
        n = 0
        while f"fc{n}.weight" in c.tensors:
            n += 1
        if n == 0:
            raise PlanError("container has no fc0.weight tensor")
        coefs, intercepts = [], []
        for name in layer_names(n):
            W = np.array(c.array(f"{name}.weight"), dtype=np.float32)
            b = np.array(c.array(f"{name}.bias"), dtype=np.float32)
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise PlanError(f"layer {name}: weight {W.shape} and bias {b.shape} do not form a dense layer")
            if coefs and coefs[-1].shape[0] != W.shape[1]:
                raise PlanError(f"layer {name}: input width {W.shape[1]} does not chain with previous output")
            coefs.append(W)
            intercepts.append(b)
        params.setdefault("hidden_layer_sizes", tuple(W.shape[0] for W in coefs[:-1]))
        net = cls(**params)
        net.coefs_, net.intercepts_ = coefs, intercepts
        net.classes_ = np.arange(coefs[-1].shape[0])
        net.n_features_in_ = coefs[0].shape[1]
        net.n_epochs_ = 0
        net.loss_curve_ = []
        return net


def analytic_param_count(architecture: Sequence[int]) -> int:
    return sum(o * (i + 1) for i, o in zip(architecture[:-1], architecture[1:]))


def train(
    dataset: Dataset,
    architecture: Sequence[int] = DEFAULT_ARCHITECTURE,
    epochs: int = 5,
    lr: float = 0.05,
    momentum: float = 0.9,
    seed: int = 7,
    batch_size: int = 64,
) -> MiniNet:
    """Fit a :class:`MiniNet`; the test accuracy is stored as ``base_accuracy_``."""
    architecture = tuple(int(a) for a in architecture)
    if len(architecture) < 2 or architecture[0] != dataset.n_features:
        raise ValueError(f"architecture {architecture} does not start with input width {dataset.n_features}")
    if architecture[-1] != dataset.n_classes:
        raise ValueError(f"architecture {architecture} does not end with {dataset.n_classes} classes")
    net = MiniNet(architecture[1:-1], epochs, lr, momentum, batch_size, seed)
    if epochs > 0:
        net.fit(dataset.X_train, dataset.y_train)
    else:
        net.classes_ = np.arange(architecture[-1])
        net.n_features_in_ = architecture[0]
        net._init_params(architecture[0], architecture[-1])
        net.loss_curve_ = []
    net.base_accuracy_ = net.score(dataset.X_test, dataset.y_test)
    return net


def accuracy(c: ModelContainer, X, y) -> float:
    return float(MiniNet.from_container(c).score(X, y))


# ---------------------------------------------------------------------------
# neuron replacement experiments


@dataclass(frozen=True)
class SweepPoint:
    layer: str
    neurons_replaced: int
    method: EmbedMethod
    accuracy: float


def layer_width(c: ModelContainer, layer: str) -> int:
    return c.meta(f"{layer}.weight").shape[0]


def neuron_plan(c: ModelContainer, layer: str, k: int, method: EmbedMethod) -> EmbedPlan:
    """Plan covering the weight rows and biases of the first ``k`` neurons of ``layer``."""
    method = EmbedMethod.parse(method)
    w = c.meta(f"{layer}.weight")
    c.meta(f"{layer}.bias")
    if not 1 <= k <= w.shape[0]:
        raise PlanError(f"k={k} out of range for layer {layer!r} with {w.shape[0]} neurons")
    fan_in = w.size // w.shape[0]
    return EmbedPlan(method, (Segment(f"{layer}.weight", 0, k * fan_in), Segment(f"{layer}.bias", 0, k)))


def replace_neurons(c: ModelContainer, layer: str, k: int, method: EmbedMethod, payload: bytes) -> ModelContainer:
    """Embed ``payload`` (truncated or zero-padded to fit) into the first ``k`` neurons."""
    width = layer_width(c, layer)
    if not 0 <= k <= width:
        raise PlanError(f"k={k} out of range for layer {layer!r} with {width} neurons")
    if k == 0:
        return c
    plan = neuron_plan(c, layer, k, method)
    data = bytes(payload)[:plan.capacity]
    data += bytes(plan.capacity - len(data))
    out, _ = embed_payload(c, Payload(data), plan)
    return out


def sweep(
    c: ModelContainer,
    layers: Sequence[str],
    k_grid: Sequence[int],
    method: EmbedMethod,
    X_test,
    y_test,
    payload: bytes | None = None,
    seed: int = 0,
) -> list[SweepPoint]:
    """Accuracy after replacing each ``k`` in ``k_grid`` neurons of each layer.

    Without an explicit payload, seeded random bytes are used; every grid
    point reads the same prefix of that stream.
    """
    method = EmbedMethod.parse(method)
    if payload is None:
        need = max(
            neuron_plan(c, layer, layer_width(c, layer), method).capacity for layer in layers
        )
        payload = np.random.default_rng(seed).bytes(need)
    points = []
    for layer in layers:
        for k in k_grid:
            replaced = replace_neurons(c, layer, int(k), method, payload)
            points.append(SweepPoint(layer, int(k), method, accuracy(replaced, X_test, y_test)))
    return points


def write_sweep_csv(points: Sequence[SweepPoint], f) -> None:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["layer", "k", "method", "accuracy"])
    for p in points:
        w.writerow([p.layer, p.neurons_replaced, p.method.value, f"{p.accuracy:.4f}"])


def freeze_retrain(
    c: ModelContainer,
    frozen: str | Sequence[str] | None,
    dataset: Dataset,
    epochs: int = 1,
    lr: float = 0.05,
    momentum: float = 0.9,
    seed: int = 0,
    batch_size: int = 64,
) -> tuple[ModelContainer, float]:
    """Retrain every layer except ``frozen``; the frozen tensors come back bit-identical."""
    if frozen is None:
        frozen = ()
    elif isinstance(frozen, str):
        frozen = (frozen,)
    net = MiniNet.from_container(c, learning_rate=lr, momentum=momentum, batch_size=batch_size, random_state=seed)
    for e in range(epochs):
        net.partial_fit(dataset.X_train, dataset.y_train, frozen=frozen, seed=(seed, e))
    out = net.to_container()
    for layer in frozen:
        for t in (f"{layer}.weight", f"{layer}.bias"):
            if out.raw(t) != c.raw(t):
                raise AssertionError(f"frozen tensor {t} changed during retraining")
    return out, float(net.score(dataset.X_test, dataset.y_test))
