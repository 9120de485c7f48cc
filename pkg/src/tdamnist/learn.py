"""Dense classifiers in numpy and a k-fold evaluation harness.

A model has one or two input streams. Each stream is a 128-unit ReLU layer;
the stream outputs are concatenated and fed to a 10-way softmax head.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .storage import read as read_container, write as write_container

log = logging.getLogger(__name__)

HIDDEN = 128
N_CLASSES = 10

# architecture name -> stream input kinds
ARCHITECTURES = {
    "MLP-I": ("image",),
    "MLP-T": ("topo",),
    "MLP-T+MLP-I": ("topo", "image"),
    "MLP-T+MLP-T": ("topo", "topo"),
}


class TrainingError(RuntimeError):
    pass


class DenseClassifier:
    """Parameters are ``[W_s, b_s for each stream] + [W_head, b_head]``."""

    def __init__(self, input_dims: Sequence[int], seed: int = 0, hidden: int = HIDDEN,
                 n_classes: int = N_CLASSES, dtype=np.float32):
        self.input_dims = tuple(int(d) for d in input_dims)
        if len(self.input_dims) not in (1, 2):
            raise ValueError("a classifier has one or two streams")
        self.hidden = hidden
        self.n_classes = n_classes
        self.seed = seed
        rng = np.random.default_rng(seed)
        params = []
        for d in self.input_dims:
            lim = 1.0 / np.sqrt(d)
            params += [rng.uniform(-lim, lim, (d, hidden)), np.zeros(hidden)]
        head_in = hidden * len(self.input_dims)
        lim = 1.0 / np.sqrt(head_in)
        params += [rng.uniform(-lim, lim, (head_in, n_classes)), np.zeros(n_classes)]
        self.params = [p.astype(dtype) for p in params]

    @property
    def streams(self) -> int:
        return len(self.input_dims)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def astype(self, dtype) -> "DenseClassifier":
        clone = object.__new__(DenseClassifier)
        clone.__dict__.update(self.__dict__)
        clone.params = [p.astype(dtype, copy=True) for p in self.params]
        return clone

    def copy(self) -> "DenseClassifier":
        return self.astype(self.params[0].dtype)

    def _check(self, inputs) -> list[np.ndarray]:
        if len(inputs) != self.streams:
            raise ValueError(f"model has {self.streams} stream(s), got {len(inputs)} input(s)")
        out = []
        dtype = self.params[0].dtype
        for x, d in zip(inputs, self.input_dims):
            x = np.asarray(x, dtype=dtype)
            if x.ndim == 1:
                x = x[None, :]
            if x.shape[1] != d:
                raise ValueError(f"stream expects {d} features, got {x.shape[1]}")
            out.append(x)
        return out

    def logits(self, inputs, cache: bool = False):
        xs = self._check(inputs)
        hs = []
        for s, x in enumerate(xs):
            W, b = self.params[2 * s], self.params[2 * s + 1]
            hs.append(np.maximum(x @ W + b, 0))
        h = np.concatenate(hs, axis=1) if len(hs) > 1 else hs[0]
        z = h @ self.params[-2] + self.params[-1]
        return (z, xs, hs, h) if cache else z

    def predict_proba(self, inputs) -> np.ndarray:
        return softmax(self.logits(inputs))

    def predict(self, inputs) -> np.ndarray:
        return np.argmax(self.logits(inputs), axis=1)

    def loss_and_grads(self, inputs, labels) -> tuple[float, list[np.ndarray]]:
        """Mean cross-entropy and its gradient with respect to every parameter."""
        z, xs, hs, h = self.logits(inputs, cache=True)
        labels = np.asarray(labels).reshape(-1)
        n = z.shape[0]
        p = softmax(z)
        loss = float(-np.mean(log_softmax(z)[np.arange(n), labels]))
        dz = p
        dz[np.arange(n), labels] -= 1
        dz /= n
        grads_head = [h.T @ dz, dz.sum(axis=0)]
        dh = dz @ self.params[-2].T
        grads = []
        for s, (x, hs_) in enumerate(zip(xs, hs)):
            dhs = dh[:, s * self.hidden : (s + 1) * self.hidden] * (hs_ > 0)
            grads += [x.T @ dhs, dhs.sum(axis=0)]
        return loss, grads + grads_head

    def save(self, path) -> None:
        header = {
            "format": "dense-classifier",
            "input_dims": list(self.input_dims),
            "hidden": self.hidden,
            "n_classes": self.n_classes,
            "seed": self.seed,
            "param_shapes": [list(p.shape) for p in self.params],
        }
        write_container(path, header, np.concatenate([p.ravel() for p in self.params]))

    @classmethod
    def load(cls, path) -> "DenseClassifier":
        header, flat = read_container(path)
        model = cls(header["input_dims"], header["seed"], header["hidden"], header["n_classes"])
        params, k = [], 0
        for shape in header["param_shapes"]:
            size = int(np.prod(shape))
            params.append(flat[k : k + size].reshape(shape).astype(np.float32))
            k += size
        model.params = params
        return model


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def forward(model: DenseClassifier, inputs) -> np.ndarray:
    """Class probabilities; ``inputs`` holds one vector (or batch) per stream."""
    return model.predict_proba(inputs)


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def train(model: DenseClassifier, features: Sequence[np.ndarray], labels: np.ndarray,
          cfg: TrainConfig | None = None) -> DenseClassifier:
    """Adam on mini-batches; returns a trained copy, ``model`` is left untouched."""
    cfg = cfg or TrainConfig()
    model = model.copy()
    xs = model._check(features)
    labels = np.asarray(labels, dtype=np.int64)
    if np.any((labels < 0) | (labels >= model.n_classes)):
        raise ValueError("labels outside 0..9")
    for x in xs:
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite input features")
    n = len(labels)
    rng = np.random.default_rng(cfg.seed)
    m = [np.zeros_like(p) for p in model.params]
    v = [np.zeros_like(p) for p in model.params]
    lr = np.float32(cfg.learning_rate)
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            loss, grads = model.loss_and_grads([x[idx] for x in xs], labels[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch {bi}")
            total += loss * len(idx)
            step += 1
            c1 = 1 - cfg.beta1**step
            c2 = 1 - cfg.beta2**step
            for p, g, mi, vi in zip(model.params, grads, m, v):
                mi *= cfg.beta1
                mi += (1 - cfg.beta1) * g
                vi *= cfg.beta2
                vi += (1 - cfg.beta2) * g * g
                p -= lr * (mi / c1) / (np.sqrt(vi / c2) + cfg.eps)
        log.debug("epoch %d loss %.5f", epoch + 1, total / max(n, 1))
    return model


def gradient_check(model: DenseClassifier, inputs, label, step: float = 1e-5, floor: float = 1e-7) -> float:
    """Max relative error between backprop and central differences, in float64.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``; the floor keeps
    parameters with vanishing gradient from dividing round-off by ~0.
    """
    shadow = model.astype(np.float64)
    label = np.atleast_1d(label)
    _, grads = shadow.loss_and_grads(inputs, label)
    worst = 0.0
    for p, g in zip(shadow.params, grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up, _ = shadow.loss_and_grads(inputs, label)
            flat[k] = orig - step
            down, _ = shadow.loss_and_grads(inputs, label)
            flat[k] = orig
            num = (up - down) / (2 * step)
            err = abs(gflat[k] - num) / max(abs(gflat[k]), abs(num), floor)
            worst = max(worst, err)
    return worst


class FeatureSource(Protocol):
    def split(self, train_idx: np.ndarray, test_idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...


class ArrayFeatures:
    """Fixed features, e.g. flattened pixels."""

    def __init__(self, matrix: np.ndarray, tag: str = "image"):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.tag = tag

    def __len__(self) -> int:
        return len(self.matrix)

    def split(self, train_idx, test_idx):
        return self.matrix[train_idx], self.matrix[test_idx]


class Standardizer:
    """Per-feature z-scoring; near-constant features are only centred.

    Gaussian-tail features can have a training spread of 1e-200; dividing by
    it would turn any test value into an overflow, hence ``min_std``.
    """

    def __init__(self, min_std: float = 1e-6):
        self.min_std = min_std

    def fit(self, x: np.ndarray) -> "Standardizer":
        self.mean = x.mean(axis=0)
        std = x.std(axis=0)
        self.scale = np.where(std > self.min_std, std, 1.0)
        return self

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.scale


def stratified_folds(labels: np.ndarray, folds: int, seed: int) -> list[np.ndarray]:
    """Test-index sets of ``folds`` stratified folds; sizes differ by at most one per class."""
    labels = np.asarray(labels)
    if len(labels) < folds:
        raise ValueError(f"{len(labels)} samples cannot fill {folds} folds")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(folds)]
    k = 0
    for c in np.unique(labels):
        for i in rng.permutation(np.flatnonzero(labels == c)):
            buckets[k % folds].append(int(i))
            k += 1
    return [np.sort(np.asarray(b, dtype=np.int64)) for b in buckets]


@dataclass
class EvalReport:
    fold_accuracies: list[float]
    confusion: np.ndarray
    architecture: str
    vectorizer: str = "-"
    strategy: str = "-"
    mean: float = field(init=False)
    std: float = field(init=False)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        acc = np.asarray(self.fold_accuracies, dtype=np.float64)
        self.mean = float(acc.mean())
        self.std = float(acc.std())
        self.confusion = np.asarray(self.confusion, dtype=np.int64)

    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture,
            "vectorizer": self.vectorizer,
            "strategy": self.strategy,
            "fold_accuracies": self.fold_accuracies,
            "mean": self.mean,
            "std": self.std,
            "confusion": self.confusion.tolist(),
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(d["fold_accuracies"], np.asarray(d["confusion"]), d["architecture"],
                   d.get("vectorizer", "-"), d.get("strategy", "-"), config=d.get("config", {}))

    def table(self) -> str:
        lines = [f"{'fold':<6}{'accuracy':>10}"]
        lines += [f"{i + 1:<6}{a:>10.5f}" for i, a in enumerate(self.fold_accuracies)]
        lines.append(f"{'mean':<6}{self.mean:>10.5f} +/- {self.std:.5f}")
        head = f"{self.architecture}  vectorizer={self.vectorizer}  strategy={self.strategy}"
        return "\n".join([head] + lines)


def crossvalidate(sources: Sequence, labels: np.ndarray, arch: str, cfg: TrainConfig | None = None,
                  folds: int = 10, seed: int = 0, vectorizer: str = "-", strategy: str = "-") -> EvalReport:
    """Stratified k-fold accuracy of one architecture.

    ``sources`` holds one feature source per stream in the order of
    ``ARCHITECTURES[arch]``. Each source sees only the training indices when
    fitting (sample ranges, then z-scoring).
    """
    if arch not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {arch!r}; valid: {', '.join(ARCHITECTURES)}")
    if len(sources) != len(ARCHITECTURES[arch]):
        raise ValueError(f"{arch} takes {len(ARCHITECTURES[arch])} input(s), got {len(sources)}")
    cfg = cfg or TrainConfig()
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    test_sets = stratified_folds(labels, folds, seed)
    accs = []
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for k, test_idx in enumerate(test_sets):
        train_idx = np.setdiff1d(np.arange(n), test_idx)
        xtr, xte = [], []
        for src in sources:
            a, b = src.split(train_idx, test_idx)
            scaler = Standardizer().fit(a)
            xtr.append(scaler.transform(a))
            xte.append(scaler.transform(b))
        model = DenseClassifier([x.shape[1] for x in xtr], seed=cfg.seed + k)
        fold_cfg = TrainConfig(**{**cfg.to_dict(), "seed": cfg.seed + k})
        model = train(model, xtr, labels[train_idx], fold_cfg)
        pred = model.predict(xte)
        accs.append(float(np.mean(pred == labels[test_idx])))
        np.add.at(confusion, (labels[test_idx], pred), 1)
        log.info("%s fold %d/%d accuracy %.5f", arch, k + 1, folds, accs[-1])
    return EvalReport(accs, confusion, arch, vectorizer, strategy,
                      config={"train": cfg.to_dict(), "folds": folds, "seed": seed})
