"""Four from-scratch classifiers with a uniform score interface.

All models consume a float64 feature matrix (normalized upstream) and
binary targets, and emit a score in [0, 1] per row; the hard label is
score > 0.5, so an exact tie (even k-nearest vote, split forest vote,
zero SVM margin) resolves to the negative class: inspections are costly
and a coin-flip candidate is not worth a visit.

* logistic: L2-regularized mean cross-entropy, minibatch gradient
  descent, score = sigmoid(w.x + b).
* svm_linear: L2-regularized mean hinge loss, subgradient minibatch
  descent on {-1,+1} targets; ranking score is the margin squashed
  through a sigmoid (rank-preserving, keeps the common [0, 1] range),
  and label decisions happen at margin 0 = score 0.5.
* knn: exact brute-force neighbor search (euclidean, manhattan or
  cosine), score = positive fraction among the k nearest.
* forest: bagged Gini decision trees on bootstrap samples, ceil(sqrt(d))
  random feature candidates per split, unlimited depth; score = fraction
  of trees voting positive.

Gradient-descent training is deterministic for a fixed seed at
workers=1; with more workers the per-shard reduction order may perturb
float sums, which is documented nondeterminism. Forest training and KNN
prediction are deterministic for any worker count (per-tree seeds,
row-independent queries). Models serialize to a line-oriented text
format ("gridntl-model v1") that round-trips exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, DivergenceError, ParseError, ShapeError
from .rng import STAGE_TRAIN, STAGE_TREE, derive_seed

MODEL_KINDS = ("logistic", "svm_linear", "knn", "forest")
KNN_DISTANCES = tuple(kernels.METRIC_CODES)

FORMAT_HEADER = "gridntl-model v1"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 64
    epochs: int = 100
    tolerance: float = 1e-6
    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.tolerance < 0:
            raise ConfigError(f"tolerance must be >= 0, got {self.tolerance}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")


@dataclass
class LinearModel:
    kind: str   # logistic | svm_linear
    weights: np.ndarray
    bias: float
    C: float
    final_loss: float
    loss_history: list = field(default=None, repr=False, compare=False)


@dataclass
class KnnModel:
    kind: str
    train: np.ndarray
    labels: np.ndarray
    k: int
    distance: str


@dataclass
class ForestModel:
    kind: str
    trees: list   # (feature i32, threshold f64, left i32, right i32, value f64)
    n_features: int
    max_features: int
    bootstrap_count: int
    seed: int


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def labels_from_scores(scores: np.ndarray) -> np.ndarray:
    """Hard labels; a score of exactly 0.5 counts as negative."""
    return (np.asarray(scores) > 0.5).astype(np.int64)


def _check_xy(X, y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2:
        raise ShapeError(f"feature matrix must be 2-d, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise ShapeError(f"targets shape {y.shape} does not match {X.shape[0]} rows")
    if not np.isin(y, (0, 1)).all():
        raise ShapeError("targets must be 0/1")
    return X, y


def _check_width(X, d, kind):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != d:
        raise ShapeError(f"{kind} model expects {d} columns, got matrix shape {X.shape}")
    return X


# --- objectives (exposed for gradient checking) ---

def logistic_objective(w, b, X, y, C):
    """(objective, grad_w, grad_b): mean cross-entropy + ||w||^2 / (2C)."""
    z = X @ w + b
    p = sigmoid(z)
    # stable cross-entropy: log(1+exp(-|z|)) + max(z,0) - z*y
    ce = np.logaddexp(0.0, -np.abs(z)) + np.maximum(z, 0.0) - z * y
    obj = float(ce.mean()) + float(w @ w) / (2.0 * C)
    r = p - y
    grad_w = X.T @ r / len(y) + w / C
    grad_b = float(r.mean())
    return obj, grad_w, grad_b


def hinge_objective(w, b, X, y, C):
    """(objective, grad_w, grad_b): mean hinge on {-1,+1} + ||w||^2 / (2C).

    Subgradient: rows with margin exactly 1 contribute zero (the kink).
    """
    t = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
    m = t * (X @ w + b)
    losses = np.maximum(0.0, 1.0 - m)
    obj = float(losses.mean()) + float(w @ w) / (2.0 * C)
    active = m < 1.0
    grad_w = -(X[active].T @ t[active]) / len(y) + w / C
    grad_b = -float(t[active].sum()) / len(y)
    return obj, grad_w, grad_b


def _train_linear(kind, objective, X, y, C, config):
    config.validate()
    if C <= 0:
        raise ConfigError(f"C must be > 0, got {C}")
    X, y = _check_xy(X, y)
    n, d = X.shape
    if n == 0:
        raise ShapeError("cannot train on an empty matrix")
    w = np.zeros(d)
    b = 0.0
    rng = np.random.default_rng(derive_seed(config.seed, STAGE_TRAIN))
    obj0, _, _ = objective(w, b, X, y, C)
    history = [obj0]
    workers = min(config.workers, max(1, n // config.batch_size)) if n else 1
    pool = ThreadPoolExecutor(max_workers=workers) if config.workers > 1 else None
    # overflow in a diverging run must surface as DivergenceError, not a warning
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            for epoch in range(1, config.epochs + 1):
                lr = config.learning_rate / math.sqrt(epoch)
                perm = rng.permutation(n)
                for start in range(0, n, config.batch_size):
                    batch = perm[start:start + config.batch_size]
                    if pool is not None and len(batch) >= 2 * config.workers:
                        shards = np.array_split(batch, config.workers)
                        parts = list(pool.map(
                            lambda s: objective(w, b, X[s], y[s], C), shards))
                        sizes = [len(s) for s in shards]
                        # each shard objective adds w/C to its gradient; the
                        # size-weighted average keeps exactly one such term
                        gw = sum(p[1] * sz for p, sz in zip(parts, sizes)) / len(batch)
                        gb = sum(p[2] * sz for p, sz in zip(parts, sizes)) / len(batch)
                    else:
                        _, gw, gb = objective(w, b, X[batch], y[batch], C)
                    w = w - lr * gw
                    b = b - lr * gb
                obj, _, _ = objective(w, b, X, y, C)
                if not math.isfinite(obj):
                    raise DivergenceError(epoch)
                history.append(obj)
                if abs(history[-2] - obj) < config.tolerance:
                    break
    finally:
        if pool is not None:
            pool.shutdown()
    return LinearModel(kind=kind, weights=w, bias=float(b), C=float(C),
                       final_loss=history[-1], loss_history=history)


def train_logistic(X, y, C: float = 1.0, config: TrainConfig = TrainConfig()):
    return _train_linear("logistic", logistic_objective, X, y, C, config)


def train_svm_linear(X, y, C: float = 1.0, config: TrainConfig = TrainConfig()):
    return _train_linear("svm_linear", hinge_objective, X, y, C, config)


def decision_values(model: LinearModel, X) -> np.ndarray:
    X = _check_width(X, len(model.weights), model.kind)
    return X @ model.weights + model.bias


def predict_logistic(model: LinearModel, X) -> np.ndarray:
    return sigmoid(decision_values(model, X))


def predict_svm_linear(model: LinearModel, X) -> np.ndarray:
    return sigmoid(decision_values(model, X))


# --- k-nearest neighbors ---

def train_knn(X, y, k: int = 100, distance: str = "euclidean") -> KnnModel:
    X, y = _check_xy(X, y)
    if distance not in kernels.METRIC_CODES:
        raise ConfigError(f"distance must be one of {KNN_DISTANCES}, got {distance!r}")
    if not 1 <= k <= X.shape[0]:
        raise ConfigError(f"k must be in [1, {X.shape[0]}], got {k}")
    return KnnModel("knn", X.copy(), y.copy(), int(k), distance)


def predict_knn(model: KnnModel, X, workers: int = 1) -> np.ndarray:
    X = _check_width(X, model.train.shape[1], "knn")
    metric = kernels.METRIC_CODES[model.distance]

    def run(chunk):
        idx = kernels.knn_neighbors(model.train, chunk, model.k, metric)
        return model.labels[idx].sum(axis=1)

    if workers > 1 and X.shape[0] >= 2 * workers:
        chunks = np.array_split(X, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = np.concatenate(list(pool.map(run, chunks)))
    else:
        counts = run(X)
    return counts / model.k


# --- random forest ---

def train_forest(X, y, tree_count: int = 100,
                 config: TrainConfig = TrainConfig()) -> ForestModel:
    """Bagged Gini trees; per-tree seeds make the result independent of
    the worker count."""
    config.validate()
    if tree_count < 1:
        raise ConfigError(f"tree_count must be >= 1, got {tree_count}")
    X, y = _check_xy(X, y)
    n, d = X.shape
    if n == 0:
        raise ShapeError("cannot train a forest on an empty matrix")
    max_features = math.isqrt(d) if math.isqrt(d) ** 2 == d else math.isqrt(d) + 1
    seeds = [derive_seed(config.seed, STAGE_TREE, t) for t in range(tree_count)]

    def grow(ts):
        return kernels.grow_tree(X, y, ts, max_features, n)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            trees = list(pool.map(grow, seeds))
    else:
        trees = [grow(ts) for ts in seeds]
    return ForestModel("forest", trees, d, max_features, n, config.seed)


def predict_forest(model: ForestModel, X, workers: int = 1) -> np.ndarray:
    X = _check_width(X, model.n_features, "forest")

    def votes(tree):
        values = kernels.tree_apply(*tree, X)
        return (values > 0.5).astype(np.int64)

    if workers > 1 and len(model.trees) >= 2:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            total = sum(pool.map(votes, model.trees))
    else:
        total = sum(votes(t) for t in model.trees)
    return total / len(model.trees)


# --- uniform dispatch ---

def train_model(kind: str, X, y, config: TrainConfig = TrainConfig(),
                C: float = 1.0, k: int = 100, distance: str = "euclidean",
                tree_count: int = 100):
    if kind == "logistic":
        return train_logistic(X, y, C=C, config=config)
    if kind == "svm_linear":
        return train_svm_linear(X, y, C=C, config=config)
    if kind == "knn":
        return train_knn(X, y, k=min(k, len(y)), distance=distance)
    if kind == "forest":
        return train_forest(X, y, tree_count=tree_count, config=config)
    raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def predict_scores(model, X, workers: int = 1) -> np.ndarray:
    if isinstance(model, LinearModel):
        if model.kind == "logistic":
            return predict_logistic(model, X)
        return predict_svm_linear(model, X)
    if isinstance(model, KnnModel):
        return predict_knn(model, X, workers=workers)
    if isinstance(model, ForestModel):
        return predict_forest(model, X, workers=workers)
    raise ConfigError(f"unknown model object {type(model).__name__}")


# --- serialization (format v1: line-oriented text, exact round-trip) ---

def _floats_line(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def serialize_model(model) -> str:
    lines = [FORMAT_HEADER, f"kind {model.kind}"]
    if isinstance(model, LinearModel):
        lines.append(f"C {model.C!r}")
        lines.append(f"final_loss {model.final_loss!r}")
        lines.append(f"bias {model.bias!r}")
        lines.append(f"weights {_floats_line(model.weights)}")
    elif isinstance(model, KnnModel):
        lines.append(f"k {model.k}")
        lines.append(f"distance {model.distance}")
        lines.append(f"shape {model.train.shape[0]} {model.train.shape[1]}")
        lines.append("labels " + " ".join(str(int(v)) for v in model.labels))
        for row in model.train:
            lines.append("row " + _floats_line(row))
    elif isinstance(model, ForestModel):
        lines.append(f"trees {len(model.trees)}")
        lines.append(f"n_features {model.n_features}")
        lines.append(f"max_features {model.max_features}")
        lines.append(f"bootstrap {model.bootstrap_count}")
        lines.append(f"seed {model.seed}")
        for tree in model.trees:
            feature, threshold, left, right, value = tree
            lines.append(f"tree {len(feature)}")
            for k in range(len(feature)):
                lines.append(f"node {int(feature[k])} {float(threshold[k])!r} "
                             f"{int(left[k])} {int(right[k])} {float(value[k])!r}")
    else:
        raise ConfigError(f"cannot serialize {type(model).__name__}")
    lines.append("end")
    return "\n".join(lines) + "\n"


class _LineReader:
    def __init__(self, text, source):
        self.lines = text.splitlines()
        self.pos = 0
        self.source = source

    def next(self, expect_key=None):
        if self.pos >= len(self.lines):
            raise ParseError(self.source, self.pos + 1, "unexpected end of model file")
        line = self.lines[self.pos]
        self.pos += 1
        if expect_key is not None:
            key, _, rest = line.partition(" ")
            if key != expect_key:
                raise ParseError(self.source, self.pos,
                                 f"expected {expect_key!r} line, got {line[:40]!r}")
            return rest
        return line


def deserialize_model(text: str, source: str = "<model>"):
    r = _LineReader(text, source)
    if r.next() != FORMAT_HEADER:
        raise ParseError(source, 1, f"not a {FORMAT_HEADER!r} file")
    kind = r.next(expect_key="kind")
    if kind in ("logistic", "svm_linear"):
        C = float(r.next(expect_key="C"))
        final_loss = float(r.next(expect_key="final_loss"))
        bias = float(r.next(expect_key="bias"))
        weights = np.array([float(v) for v in r.next(expect_key="weights").split()],
                           dtype=np.float64)
        model = LinearModel(kind, weights, bias, C, final_loss)
    elif kind == "knn":
        k = int(r.next(expect_key="k"))
        distance = r.next(expect_key="distance")
        n, d = (int(v) for v in r.next(expect_key="shape").split())
        labels = np.array([int(v) for v in r.next(expect_key="labels").split()],
                          dtype=np.int64)
        if len(labels) != n:
            raise ParseError(source, r.pos, f"expected {n} labels, got {len(labels)}")
        rows = np.empty((n, d), dtype=np.float64)
        for i in range(n):
            vals = [float(v) for v in r.next(expect_key="row").split()]
            if len(vals) != d:
                raise ParseError(source, r.pos, f"expected {d} values in row {i}")
            rows[i] = vals
        model = KnnModel(kind, rows, labels, k, distance)
    elif kind == "forest":
        n_trees = int(r.next(expect_key="trees"))
        n_features = int(r.next(expect_key="n_features"))
        max_features = int(r.next(expect_key="max_features"))
        bootstrap = int(r.next(expect_key="bootstrap"))
        seed = int(r.next(expect_key="seed"))
        trees = []
        for _ in range(n_trees):
            n_nodes = int(r.next(expect_key="tree"))
            feature = np.empty(n_nodes, dtype=np.int32)
            threshold = np.empty(n_nodes, dtype=np.float64)
            left = np.empty(n_nodes, dtype=np.int32)
            right = np.empty(n_nodes, dtype=np.int32)
            value = np.empty(n_nodes, dtype=np.float64)
            for k in range(n_nodes):
                parts = r.next(expect_key="node").split()
                if len(parts) != 5:
                    raise ParseError(source, r.pos, "node line needs 5 fields")
                feature[k] = int(parts[0])
                threshold[k] = float(parts[1])
                left[k] = int(parts[2])
                right[k] = int(parts[3])
                value[k] = float(parts[4])
            trees.append((feature, threshold, left, right, value))
        model = ForestModel(kind, trees, n_features, max_features, bootstrap, seed)
    else:
        raise ParseError(source, 2, f"unknown model kind {kind!r}")
    if r.next() != "end":
        raise ParseError(source, r.pos, "missing end marker")
    return model


def write_model(path, model) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_model(model))


def read_model(path):
    with open(path, encoding="utf-8") as fh:
        return deserialize_model(fh.read(), source=str(path))
