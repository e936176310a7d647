"""Classical baseline classifiers over feature vectors, written from scratch.

All models take a float matrix ``X`` (n_samples, n_features) and an integer
label vector ``y`` holding indices into ``LABELS``. Ties between classes are
always resolved toward the lexicographically smallest label name.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ..core import LABELS, AnomalyLabel

N_CLASSES = len(LABELS)
# Class indices ranked by label name, used for every tie-break.
_TIE_RANK = np.argsort(np.argsort([lab.value for lab in LABELS]))


class BaselineKind(str, enum.Enum):
    LR = "LR"
    NB = "NB"
    DT = "DT"
    RF = "RF"


def _argmax_ties_lexicographic(scores: np.ndarray) -> np.ndarray:
    """Row-wise argmax preferring the smaller label name among exact ties."""
    scores = np.atleast_2d(scores)
    best = scores.max(axis=1, keepdims=True)
    tied = scores == best
    ranks = np.where(tied, _TIE_RANK[None, :], N_CLASSES + 1)
    return ranks.argmin(axis=1)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class LogisticRegressionSGD:
    """Multinomial logistic regression trained by per-sample SGD on cross-entropy."""

    learning_rate: float = 0.01
    epochs: int = 200
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None

    def fit(self, X, y, rng: np.random.Generator):
        n, d = X.shape
        W = np.zeros((d, N_CLASSES))
        b = np.zeros(N_CLASSES)
        onehot = np.eye(N_CLASSES)[y]
        for _ in range(self.epochs):
            for i in rng.permutation(n):
                x = X[i]
                grad = _softmax(x @ W + b) - onehot[i]
                W -= self.learning_rate * np.outer(x, grad)
                b -= self.learning_rate * grad
        self.weights, self.bias = W, b
        return self

    def decision(self, X) -> np.ndarray:
        return np.atleast_2d(X) @ self.weights + self.bias

    def predict(self, X) -> np.ndarray:
        return _argmax_ties_lexicographic(self.decision(X))

    def to_dict(self):
        return {"learning_rate": self.learning_rate, "epochs": self.epochs,
                "weights": self.weights.tolist(), "bias": self.bias.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["learning_rate"], d["epochs"], np.array(d["weights"]), np.array(d["bias"]))


@dataclass
class GaussianNaiveBayes:
    var_floor: float = 1e-9
    log_prior: np.ndarray | None = None
    means: np.ndarray | None = None
    variances: np.ndarray | None = None

    def fit(self, X, y, rng=None):
        d = X.shape[1]
        self.means = np.zeros((N_CLASSES, d))
        self.variances = np.ones((N_CLASSES, d))
        self.log_prior = np.full(N_CLASSES, -np.inf)
        for k in range(N_CLASSES):
            rows = X[y == k]
            if len(rows) == 0:
                continue
            self.means[k] = rows.mean(axis=0)
            self.variances[k] = np.maximum(rows.var(axis=0), self.var_floor)
            self.log_prior[k] = math.log(len(rows) / len(X))
        return self

    def log_posterior(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        diff = X[:, None, :] - self.means[None, :, :]
        ll = -0.5 * (np.log(2 * np.pi * self.variances)[None] + diff**2 / self.variances[None]).sum(axis=2)
        return ll + self.log_prior[None, :]

    def predict(self, X) -> np.ndarray:
        return _argmax_ties_lexicographic(self.log_posterior(X))

    def to_dict(self):
        return {"var_floor": self.var_floor, "log_prior": [float(v) for v in self.log_prior],
                "means": self.means.tolist(), "variances": self.variances.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["var_floor"], np.array(d["log_prior"], dtype=float), np.array(d["means"]),
                   np.array(d["variances"]))


def _gini(counts: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=-1, keepdims=True)
    p = counts / np.where(totals == 0, 1, totals)
    return 1.0 - (p**2).sum(axis=-1)


@dataclass
class DecisionTree:
    """CART with Gini impurity and exhaustive midpoint threshold search.

    Nodes live in parallel lists; ``feature == -1`` marks a leaf. Samples with
    ``x[feature] <= threshold`` go left.
    """

    max_depth: int = 8
    min_leaf: int = 2
    max_features: int | None = None
    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    counts: list = field(default_factory=list)

    def fit(self, X, y, rng: np.random.Generator | None = None):
        self.feature, self.threshold, self.left, self.right, self.counts = [], [], [], [], []
        self._grow(np.asarray(X, dtype=float), np.asarray(y), 0, rng)
        return self

    def _new_node(self, counts) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.counts.append([int(c) for c in counts])
        return len(self.feature) - 1

    def _best_split(self, X, y, rng):
        n, d = X.shape
        features = np.arange(d)
        if self.max_features is not None and self.max_features < d:
            features = np.sort(rng.choice(d, self.max_features, replace=False))
        onehot = np.eye(N_CLASSES, dtype=np.int64)[y]
        total = onehot.sum(axis=0)
        best = None  # (impurity, threshold, feature)
        for f in features:
            order = np.argsort(X[:, f], kind="stable")
            xs = X[order, f]
            left = np.cumsum(onehot[order], axis=0)[:-1]
            right = total - left
            n_left = np.arange(1, n)
            valid = (xs[:-1] < xs[1:]) & (n_left >= self.min_leaf) & (n - n_left >= self.min_leaf)
            if not valid.any():
                continue
            imp = (n_left * _gini(left) + (n - n_left) * _gini(right)) / n
            imp = np.where(valid, imp, np.inf)
            # argmin returns the first minimum: the lowest threshold for this feature.
            i = int(np.argmin(imp))
            thr = 0.5 * (xs[i] + xs[i + 1])
            cand = (float(imp[i]), float(thr), int(f))
            if best is None or cand[0] < best[0] - 1e-12 or (abs(cand[0] - best[0]) <= 1e-12 and cand[1] < best[1]):
                best = cand
        return best

    def _grow(self, X, y, depth, rng) -> int:
        counts = np.bincount(y, minlength=N_CLASSES)
        node = self._new_node(counts)
        if depth >= self.max_depth or np.count_nonzero(counts) <= 1 or len(y) < 2 * self.min_leaf:
            return node
        split = self._best_split(X, y, rng)
        if split is None or split[0] >= _gini(counts.astype(float)) - 1e-12:
            return node
        _, thr, f = split
        mask = X[:, f] <= thr
        self.feature[node], self.threshold[node] = f, thr
        self.left[node] = self._grow(X[mask], y[mask], depth + 1, rng)
        self.right[node] = self._grow(X[~mask], y[~mask], depth + 1, rng)
        return node

    def leaf_counts(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.zeros((len(X), N_CLASSES))
        for r, x in enumerate(X):
            node = 0
            while self.feature[node] != -1:
                node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
            out[r] = self.counts[node]
        return out

    def predict(self, X) -> np.ndarray:
        return _argmax_ties_lexicographic(self.leaf_counts(X))

    def to_dict(self):
        return {"max_depth": self.max_depth, "min_leaf": self.min_leaf, "max_features": self.max_features,
                "feature": self.feature, "threshold": self.threshold, "left": self.left,
                "right": self.right, "counts": self.counts}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class RandomForest:
    n_trees: int = 50
    max_depth: int = 8
    min_leaf: int = 2
    trees: list = field(default_factory=list)

    def fit(self, X, y, rng: np.random.Generator):
        n, d = X.shape
        max_features = math.ceil(math.sqrt(d))
        self.trees = []
        for _ in range(self.n_trees):
            rows = rng.integers(0, n, n)
            tree = DecisionTree(self.max_depth, self.min_leaf, max_features)
            self.trees.append(tree.fit(X[rows], y[rows], rng))
        return self

    def votes(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        tally = np.zeros((len(X), N_CLASSES))
        for tree in self.trees:
            tally[np.arange(len(X)), tree.predict(X)] += 1
        return tally

    def predict(self, X) -> np.ndarray:
        return _argmax_ties_lexicographic(self.votes(X))

    def to_dict(self):
        return {"n_trees": self.n_trees, "max_depth": self.max_depth, "min_leaf": self.min_leaf,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["n_trees"], d["max_depth"], d["min_leaf"], [DecisionTree.from_dict(t) for t in d["trees"]])


_MODELS = {
    BaselineKind.LR: LogisticRegressionSGD,
    BaselineKind.NB: GaussianNaiveBayes,
    BaselineKind.DT: DecisionTree,
    BaselineKind.RF: RandomForest,
}


@dataclass
class BaselineModel:
    kind: BaselineKind
    model: object
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None

    def _prepare(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.mean is not None:
            X = (X - self.mean) / self.scale
        return X

    def predict(self, X) -> list[AnomalyLabel]:
        return [LABELS[i] for i in self.model.predict(self._prepare(X))]

    def to_dict(self):
        out = {"kind": self.kind.value, "model": self.model.to_dict()}
        if self.mean is not None:
            out["standardize"] = {"mean": self.mean.tolist(), "scale": self.scale.tolist()}
        return out

    @classmethod
    def from_dict(cls, d):
        kind = BaselineKind(d["kind"])
        std = d.get("standardize")
        mean = np.array(std["mean"]) if std else None
        scale = np.array(std["scale"]) if std else None
        return cls(kind, _MODELS[kind].from_dict(d["model"]), mean, scale)


def fit_baseline(kind, X, labels, hyper: dict | None = None, seed: int = 0) -> BaselineModel:
    """Fit one baseline on feature rows ``X`` with ``AnomalyLabel`` targets."""
    kind = BaselineKind(kind)
    X = np.asarray(X, dtype=float)
    y = np.array([LABELS.index(AnomalyLabel(lab)) for lab in labels], dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain at least two classes")
    mean = scale = None
    if kind is BaselineKind.LR:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        X = (X - mean) / scale
    model = _MODELS[kind](**(hyper or {}))
    model.fit(X, y, np.random.default_rng(seed))
    return BaselineModel(kind, model, mean, scale)
