"""SMOTE oversampling of the minority (Real) class."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..errors import InputError


def nearest_neighbours(X, k: int) -> np.ndarray:
    """Indices of the k nearest other rows (Euclidean), shape (n, k)."""
    X = np.asarray(X, dtype=float)
    sq = (X * X).sum(axis=1)
    out = np.empty((X.shape[0], k), dtype=np.int64)
    for start in range(0, X.shape[0], 512):
        block = X[start : start + 512]
        d2 = sq[start : start + 512, None] - 2.0 * block @ X.T + sq[None, :]
        d2[np.arange(block.shape[0]), np.arange(start, start + block.shape[0])] = np.inf
        nn = np.argpartition(d2, k - 1, axis=1)[:, :k] if k < X.shape[0] - 1 else np.argsort(d2, axis=1)[:, :k]
        order = np.argsort(np.take_along_axis(d2, nn, axis=1), axis=1, kind="stable")
        out[start : start + block.shape[0]] = np.take_along_axis(nn, order, axis=1)
    return out


def smote_array(X, n_new: int, k: int, rng: np.random.Generator):
    """Synthesize ``n_new`` rows; returns (rows, base index, neighbour index, step)."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] <= k:
        raise InputError(f"SMOTE needs more than k={k} minority samples, got {X.shape[0]}")
    if n_new <= 0:
        return np.empty((0, X.shape[1])), np.empty(0, int), np.empty(0, int), np.empty(0)
    nn = nearest_neighbours(X, k)
    base = rng.integers(0, X.shape[0], n_new)
    partner = nn[base, rng.integers(0, k, n_new)]
    step = rng.uniform(np.nextafter(0.0, 1.0), 1.0, n_new)
    rows = X[base] + step[:, None] * (X[partner] - X[base])
    return rows, base, partner, step


def smote(minority, target_count: int, k: int = 5, rng=None, feature_names=None):
    """Oversample a list of FeatureVector up to ``target_count`` rows.

    The originals come first, unchanged; synthetic vectors carry
    ``synthetic=True`` and the label/tags of their base vector.
    """
    minority = list(minority)
    if len(minority) <= k:
        raise InputError(f"SMOTE needs more than k={k} minority samples, got {len(minority)}")
    if target_count < len(minority):
        raise InputError("target_count is smaller than the minority set")
    rng = rng if rng is not None else np.random.default_rng(0)
    names = list(feature_names or minority[0].values)
    X = np.array([[v.values[f] for f in names] for v in minority])
    rows, base, _, _ = smote_array(X, target_count - len(minority), k, rng)
    synthetic = [
        replace(minority[b], values=dict(zip(names, map(float, row))), synthetic=True, imputed=())
        for row, b in zip(rows, base)
    ]
    return minority + synthetic
