"""Train/test partitioning, class balancing and the recall metric."""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from ..core import Label
from ..errors import ConfigError, InputError
from ..features import feature_columns, rank_features
from .smote import smote_array
from .tree import ForestModel, ForestParams

REAL = Label.REAL.value


@dataclass(frozen=True)
class SplitPolicy:
    real_train_frac: float = 0.9
    real_test_frac: float = 0.1
    sim_train_frac: float = 0.3
    sim_test_frac: float = 0.35
    stratify_by: str = "source_tag"
    balance_ratio: float = 1.0
    smote_k: int = 5
    seed: int = 0

    def __post_init__(self):
        fracs = (self.real_train_frac, self.real_test_frac, self.sim_train_frac, self.sim_test_frac)
        if any(not 0 < f <= 1 for f in fracs):
            raise ConfigError("split fractions must lie in (0, 1]")
        if self.real_train_frac + self.real_test_frac > 1 + 1e-12 or self.sim_train_frac + self.sim_test_frac > 1 + 1e-12:
            raise ConfigError("train and test fractions overlap")
        if not self.balance_ratio > 0:
            raise ConfigError("balance_ratio must be positive")


@dataclass
class TrainResult:
    model: ForestModel
    train: pd.DataFrame
    test: pd.DataFrame


def _take(n, train_frac, test_frac, rng):
    perm = rng.permutation(n)
    n_test = min(n, int(round(test_frac * n)))
    n_train = min(n - n_test, int(round(train_frac * n)))
    return perm[n_test : n_test + n_train], perm[:n_test]


def split(table: pd.DataFrame, policy: SplitPolicy) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Random real split plus per-source stratified simulated split (window-disjoint)."""
    rng = np.random.default_rng(policy.seed)
    is_real = (table["label"] == REAL).to_numpy()
    train_idx, test_idx = [], []
    real_rows = np.flatnonzero(is_real)
    tr, te = _take(real_rows.size, policy.real_train_frac, policy.real_test_frac, rng)
    train_idx.append(real_rows[tr])
    test_idx.append(real_rows[te])
    sim = table[~is_real]
    for _, group in sorted(sim.groupby(policy.stratify_by, sort=True), key=lambda kv: str(kv[0])):
        rows = table.index.get_indexer(group.index)
        tr, te = _take(rows.size, policy.sim_train_frac, policy.sim_test_frac, rng)
        train_idx.append(rows[tr])
        test_idx.append(rows[te])
    train = table.iloc[np.concatenate(train_idx)].reset_index(drop=True)
    test = table.iloc[np.concatenate(test_idx)].reset_index(drop=True)
    for part, name in ((train, "training"), (test, "test")):
        labels = set(part["label"])
        if REAL not in labels or len(labels) < 2:
            raise InputError(f"{name} partition lacks one of the classes")
    return train, test


def balance(train: pd.DataFrame, features, policy: SplitPolicy) -> pd.DataFrame:
    """Resize the Real rows to ``balance_ratio * n_simulated``.

    Real rows are oversampled with SMOTE when short and subsampled when in
    excess; synthetic rows are flagged in the ``synthetic`` column.
    """
    rng = np.random.default_rng([policy.seed, 1])
    real = train[train["label"] == REAL]
    sim = train[train["label"] != REAL]
    target = max(1, int(round(policy.balance_ratio * len(sim))))
    if target > len(real):
        X = real[features].to_numpy(dtype=float)
        rows, base, _, _ = smote_array(X, target - len(real), policy.smote_k, rng)
        extra = real.iloc[base].copy()
        extra[features] = rows
        extra["synthetic"] = True
        real = pd.concat([real, extra], ignore_index=True)
    elif target < len(real):
        keep = np.sort(rng.choice(len(real), size=target, replace=False))
        real = real.iloc[keep]
    return pd.concat([real, sim], ignore_index=True)


def train(
    table: pd.DataFrame,
    policy: SplitPolicy = SplitPolicy(),
    hyper: ForestParams = ForestParams(),
    features=None,
    top_k: int | None = None,
) -> TrainResult:
    """Split, balance and fit a forest; the returned test set contains no synthetic rows.

    With ``top_k`` the features are first ranked on the (unaugmented) training
    partition and only the best ``top_k`` are used.
    """
    features = list(features) if features is not None else feature_columns(table)
    labels = set(table["label"])
    if REAL not in labels or len(labels) < 2:
        raise InputError("training needs both Real and Simulated rows")
    train_part, test_part = split(table, policy)
    if top_k is not None:
        features = rank_features(train_part, top_k, features)
    fit_part = balance(train_part, features, policy)
    X = fit_part[features].to_numpy(dtype=float)
    y = (fit_part["label"] == REAL).to_numpy(dtype=float)
    meta = {
        "split": asdict(policy),
        "n_train": int(len(fit_part)),
        "n_train_real": int(y.sum()),
        "n_synthetic": int(fit_part["synthetic"].sum()),
        "n_test": int(len(test_part)),
    }
    model = ForestModel.fit(X, y, features, hyper, meta)
    return TrainResult(model, fit_part, test_part)


def predict_proba(model: ForestModel, data):
    """Probability of Real; a float for a single vector/mapping, an array otherwise."""
    p = model.predict_proba(data)
    if isinstance(data, pd.DataFrame) or (isinstance(data, np.ndarray) and data.ndim == 2):
        return p
    return float(p[0])


def recall(model: ForestModel, test: pd.DataFrame, threshold: float = 0.5) -> float:
    """TP / (TP + FN) on the Real rows; a Real row counts as TP when p >= threshold."""
    real = test[test["label"] == REAL]
    if len(real) == 0:
        raise InputError("recall needs at least one Real sample")
    return float(np.mean(model.predict_proba(real) >= threshold))


def grid_search(table: pd.DataFrame, policy: SplitPolicy, grid: dict, base: ForestParams = ForestParams(), features=None):
    """Exhaustive search over ``grid`` (param -> values) maximising held-out recall.

    Returns (best params, best recall, list of (params, recall)).
    """
    keys = sorted(grid)
    results = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        params = ForestParams(**{**asdict(base), **dict(zip(keys, combo))})
        res = train(table, policy, params, features)
        results.append((params, recall(res.model, res.test)))
    best = max(results, key=lambda pr: pr[1])
    return best[0], best[1], results
