"""CART trees (Gini) and a bagged random forest for the Real-vs-Simulated task.

Class 1 is Real. Leaves store the fraction of Real training rows, so
``predict_proba`` of a forest is the mean leaf fraction over its trees.
Splits send ``x <= threshold`` left; thresholds are midpoints between
consecutive distinct values.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, InputError
from ..seeding import derive

FORMAT = "noisebench-forest"
VERSION = 1


def gini(y) -> float:
    y = np.asarray(y)
    if y.size == 0:
        return 0.0
    p = y.mean()
    return 2.0 * p * (1.0 - p)


def best_split(X, y, features, min_samples_leaf=1):
    """Best Gini split over ``features``: (weighted impurity, feature, threshold) or None.

    Earlier features and lower thresholds win exact ties.
    """
    n = y.size
    total = y.sum()
    n_left = np.arange(1, n)
    n_right = n - n_left
    size_ok = (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
    best = None
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        valid = size_ok & (xs[:-1] < xs[1:])
        if not valid.any():
            continue
        pos_left = np.cumsum(y[order])[:-1]
        p_l = pos_left / n_left
        p_r = (total - pos_left) / n_right
        imp = (n_left * 2 * p_l * (1 - p_l) + n_right * 2 * p_r * (1 - p_r)) / n
        imp = np.where(valid, imp, np.inf)
        j = int(np.argmin(imp))
        if best is None or imp[j] < best[0]:
            thr = 0.5 * (xs[j] + xs[j + 1])
            if not xs[j] <= thr < xs[j + 1]:
                thr = xs[j]
            best = (float(imp[j]), int(f), float(thr))
    return best


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    min_samples_leaf: int = 2
    max_features: object = "sqrt"
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ConfigError("n_trees, max_depth and min_samples_leaf must be >= 1")
        if not (self.max_features in ("sqrt", "all") or (isinstance(self.max_features, int) and self.max_features >= 1)):
            raise ConfigError("max_features must be 'sqrt', 'all' or a positive int")

    def n_features(self, k: int) -> int:
        if self.max_features == "all":
            return k
        if self.max_features == "sqrt":
            return max(1, int(math.sqrt(k)))
        return min(k, int(self.max_features))

    @classmethod
    def decision_tree(cls, **kw) -> "ForestParams":
        kw.setdefault("n_trees", 1)
        kw.setdefault("max_features", "all")
        kw.setdefault("bootstrap", False)
        return cls(**kw)


class Tree:
    """Array-backed binary tree. ``feature[i] < 0`` marks a leaf."""

    def __init__(self, feature, threshold, left, right, value, n_samples):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        self.n_samples = np.asarray(n_samples, dtype=np.int64)

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def used_features(self) -> set:
        return set(self.feature[self.feature >= 0].tolist())

    @classmethod
    def grow(cls, X, y, params: ForestParams, rng: np.random.Generator) -> "Tree":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        k = X.shape[1]
        n_try = params.n_features(k)
        feature, threshold, left, right, value, counts = [], [], [], [], [], []

        def new_node(idx):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(y[idx].mean()))
            counts.append(int(idx.size))
            return len(feature) - 1

        stack = [(new_node(np.arange(y.size)), np.arange(y.size), 0)]
        while stack:
            node, idx, depth = stack.pop()
            yn = y[idx]
            pos = yn.sum()
            if depth >= params.max_depth or idx.size < 2 * params.min_samples_leaf or pos == 0 or pos == idx.size:
                continue
            feats = np.arange(k) if n_try == k else np.sort(rng.choice(k, size=n_try, replace=False))
            split = best_split(X[idx], yn, feats, params.min_samples_leaf)
            if split is None or split[0] >= gini(yn) - 1e-12:
                continue
            _, f, thr = split
            go_left = X[idx, f] <= thr
            li, ri = idx[go_left], idx[~go_left]
            feature[node], threshold[node] = f, thr
            left[node] = new_node(li)
            right[node] = new_node(ri)
            stack.append((right[node], ri, depth + 1))
            stack.append((left[node], li, depth + 1))
        return cls(feature, threshold, left, right, value, counts)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            go_left = X[rows, np.where(inner, f, 0)] <= self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)

    def predict_proba(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self, names, i=0) -> dict:
        if self.feature[i] < 0:
            return {"leaf": float(self.value[i]), "n": int(self.n_samples[i])}
        return {
            "feature": names[self.feature[i]],
            "threshold": float(self.threshold[i]),
            "n": int(self.n_samples[i]),
            "left": self.to_dict(names, self.left[i]),
            "right": self.to_dict(names, self.right[i]),
        }

    @classmethod
    def from_dict(cls, doc, names) -> "Tree":
        index = {n: j for j, n in enumerate(names)}
        feature, threshold, left, right, value, counts = [], [], [], [], [], []

        def visit(d):
            i = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            counts.append(int(d.get("n", 0)))
            if "leaf" in d:
                value.append(float(d["leaf"]))
                return i
            value.append(float("nan"))
            if d["feature"] not in index:
                raise InputError(f"tree splits on unknown feature {d['feature']!r}")
            feature[i] = index[d["feature"]]
            threshold[i] = float(d["threshold"])
            left[i] = visit(d["left"])
            right[i] = visit(d["right"])
            return i

        visit(doc)
        return cls(feature, threshold, left, right, value, counts)


@dataclass
class ForestModel:
    trees: list
    feature_order: list
    params: ForestParams = field(default_factory=ForestParams)
    train_metadata: dict = field(default_factory=dict)

    @classmethod
    def fit(cls, X, y, feature_order, params: ForestParams = ForestParams(), train_metadata=None) -> "ForestModel":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or X.shape[0] != y.size or X.shape[1] != len(feature_order):
            raise InputError("feature matrix does not match labels / feature names")
        if y.min() == y.max():
            raise InputError("training data must contain both classes")
        trees = []
        n = y.size
        for t in range(params.n_trees):
            rng = np.random.default_rng(derive(params.seed, "tree", t))
            idx = rng.integers(0, n, n) if params.bootstrap else np.arange(n)
            trees.append(Tree.grow(X[idx], y[idx], params, rng))
        return cls(trees, list(feature_order), params, dict(train_metadata or {}))

    def matrix(self, data) -> np.ndarray:
        """Pull ``feature_order`` columns out of a DataFrame, mapping or FeatureVector."""
        if hasattr(data, "values") and isinstance(getattr(data, "values"), dict):
            data = data.values
        if isinstance(data, dict):
            missing = [f for f in self.feature_order if f not in data]
            if missing:
                raise InputError(f"missing features: {missing}")
            return np.array([[float(data[f]) for f in self.feature_order]])
        if hasattr(data, "columns"):
            missing = [f for f in self.feature_order if f not in data.columns]
            if missing:
                raise InputError(f"missing features: {missing}")
            return data[self.feature_order].to_numpy(dtype=float)
        X = np.atleast_2d(np.asarray(data, dtype=float))
        if X.shape[1] != len(self.feature_order):
            raise InputError("feature matrix has the wrong number of columns")
        return X

    def predict_proba(self, data) -> np.ndarray:
        X = self.matrix(data)
        return np.mean([t.predict_proba(X) for t in self.trees], axis=0)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "feature_order": list(self.feature_order),
            "params": asdict(self.params),
            "train_metadata": self.train_metadata,
            "trees": [t.to_dict(self.feature_order) for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def from_dict(cls, doc) -> "ForestModel":
        if doc.get("format") != FORMAT or doc.get("version") != VERSION:
            raise InputError(f"not a {FORMAT} v{VERSION} document")
        names = list(doc["feature_order"])
        return cls(
            [Tree.from_dict(t, names) for t in doc["trees"]],
            names,
            ForestParams(**doc.get("params", {})),
            doc.get("train_metadata", {}),
        )

    @classmethod
    def load(cls, path) -> "ForestModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
