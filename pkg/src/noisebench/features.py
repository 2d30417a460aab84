"""Window features, relevance ranking and top-K selection.

Raw-signal windows only get features that describe variation around the
process value (no mean, min, max or energy); the two ratio features are

    std_mean_ratio = sigma / mu        var_mean_ratio = sigma**2 / mu

with the sample (n - 1) standard deviation. Noise-estimate windows get the
same set plus location/energy statistics, prefixed ``noise_``.

Undefined values (zero-variance windows, zero means in ratios) are imputed
as 0 and the feature name is recorded in ``FeatureVector.imputed``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import mannwhitneyu

from .core import Label
from .errors import ConfigError, InputError
from .windowing import WindowPair

MIN_WINDOW = 4

RAW_FEATURES = (
    "approximate_entropy",
    "kurtosis",
    "lempel_ziv_complexity",
    "longest_strike_above_mean",
    "longest_strike_below_mean",
    "number_peaks",
    "permutation_entropy",
    "skewness",
    "autocorrelation",
    "std_mean_ratio",
    "var_mean_ratio",
)
NOISE_EXTRA = ("mean", "std", "variance", "abs_energy", "min", "max")
LOCATION_FEATURES = frozenset(NOISE_EXTRA)
META_COLUMNS = ("label", "source_tag", "channel", "origin", "synthetic")


# --- batch kernels: each takes an (n_windows, N) matrix -----------------------


def _rows(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


def _flat(x):
    return np.max(x, axis=1) == np.min(x, axis=1)


def batch_skewness(x):
    """Adjusted Fisher-Pearson G1; NaN for constant rows."""
    x = _rows(x)
    n = x.shape[1]
    d = x - x.mean(axis=1, keepdims=True)
    m2 = (d**2).mean(axis=1)
    m3 = (d**3).mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        g1 = m3 / m2**1.5
        out = math.sqrt(n * (n - 1)) / (n - 2) * g1
    return np.where(_flat(x), np.nan, out)


def batch_kurtosis(x):
    """Adjusted Fisher-Pearson G2 (excess); NaN for constant rows."""
    x = _rows(x)
    n = x.shape[1]
    d = x - x.mean(axis=1, keepdims=True)
    m2 = (d**2).mean(axis=1)
    m4 = (d**4).mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        g2 = m4 / m2**2 - 3.0
        out = (n - 1) / ((n - 2) * (n - 3)) * ((n + 1) * g2 + 6.0)
    return np.where(_flat(x), np.nan, out)


def batch_autocorrelation(x, lag=1):
    x = _rows(x)
    n = x.shape[1]
    if lag >= n:
        return np.full(x.shape[0], np.nan)
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1)
    s = ((x[:, : n - lag] - mu) * (x[:, lag:] - mu)).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = s / ((n - lag) * var)
    return np.where(_flat(x), np.nan, out)


def batch_std_mean_ratio(x):
    x = _rows(x)
    sd = x.std(axis=1, ddof=1)
    mu = x.mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = sd / mu
    return np.where(sd == 0, 0.0, out)


def batch_var_mean_ratio(x):
    x = _rows(x)
    var = x.var(axis=1, ddof=1)
    mu = x.mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = var / mu
    return np.where(var == 0, 0.0, out)


def _longest_run(mask):
    best = np.zeros(mask.shape[0], dtype=int)
    cur = np.zeros(mask.shape[0], dtype=int)
    for j in range(mask.shape[1]):
        cur = np.where(mask[:, j], cur + 1, 0)
        best = np.maximum(best, cur)
    return best.astype(float)


def batch_longest_strike_above_mean(x):
    x = _rows(x)
    return _longest_run(x > x.mean(axis=1, keepdims=True))


def batch_longest_strike_below_mean(x):
    x = _rows(x)
    return _longest_run(x < x.mean(axis=1, keepdims=True))


def batch_number_peaks(x, n=3):
    x = _rows(x)
    length = x.shape[1]
    if length <= 2 * n:
        return np.zeros(x.shape[0])
    centre = x[:, n : length - n]
    peak = np.ones_like(centre, dtype=bool)
    for k in range(1, n + 1):
        peak &= centre > x[:, n - k : length - n - k]
        peak &= centre > x[:, n + k : length - n + k]
    return peak.sum(axis=1).astype(float)


def batch_permutation_entropy(x, tau=1, d=3):
    x = _rows(x)
    span = (d - 1) * tau
    if x.shape[1] < d * tau + 1:
        raise InputError(f"permutation entropy needs at least {d * tau + 1} samples")
    emb = sliding_window_view(x, span + 1, axis=1)[:, :, ::tau]
    ranks = np.argsort(emb, axis=2, kind="stable")
    codes = (ranks * (d ** np.arange(d))).sum(axis=2)
    out = np.empty(x.shape[0])
    for i, row in enumerate(codes):
        _, counts = np.unique(row, return_counts=True)
        p = counts / counts.sum()
        out[i] = -(p * np.log(p)).sum()
    return out


def _phi(x, m, r):
    emb = sliding_window_view(x, m, axis=1)
    dist = np.max(np.abs(emb[:, :, None, :] - emb[:, None, :, :]), axis=3)
    c = (dist <= r[:, None, None]).mean(axis=2)
    return np.log(c).mean(axis=1)


def batch_approximate_entropy(x, m=2, r=None, r_factor=0.2):
    """ApEn with Chebyshev distance and self-matches; ``r`` defaults to r_factor * sample std."""
    x = _rows(x)
    if x.shape[1] <= m + 1:
        raise InputError(f"approximate entropy needs more than {m + 1} samples")
    if r is None:
        r = r_factor * x.std(axis=1, ddof=1)
    r = np.broadcast_to(np.asarray(r, dtype=float), (x.shape[0],))
    ok = r > 0
    out = np.full(x.shape[0], np.nan)
    if ok.any():
        out[ok] = _phi(x[ok], m, r[ok]) - _phi(x[ok], m + 1, r[ok])
    return out


def discretize(x, bins=10) -> np.ndarray:
    """Equal-width bin index over [min, max]; the top edge belongs to the last bin."""
    x = np.asarray(x, dtype=float)
    edges = np.linspace(x.min(), x.max(), bins + 1)
    return np.clip(np.searchsorted(edges[1:-1], x, side="right"), 0, bins - 1)


def lz76_phrases(symbols: Sequence) -> int:
    """Number of phrases in the Lempel-Ziv (1976) parse (Kaspar-Schuster scan)."""
    s = list(symbols)
    n = len(s)
    if n == 0:
        return 0
    if n == 1:
        return 1
    c, ell, i, k, k_max = 1, 1, 0, 1, 1
    while True:
        if s[i + k - 1] == s[ell + k - 1]:
            k += 1
            if ell + k > n:
                c += 1
                break
        else:
            k_max = max(k, k_max)
            i += 1
            if i == ell:
                c += 1
                ell += k_max
                if ell + 1 > n:
                    break
                i, k, k_max = 0, 1, 1
            else:
                k = 1
    return c


def batch_discretize(x, bins=10) -> np.ndarray:
    x = _rows(x)
    lo = x.min(axis=1, keepdims=True)
    hi = x.max(axis=1, keepdims=True)
    edges = lo + (hi - lo) * np.linspace(0.0, 1.0, bins + 1)[None, 1:-1]
    return (x[:, :, None] >= edges[:, None, :]).sum(axis=2)


def batch_lempel_ziv_complexity(x, bins=10):
    x = _rows(x)
    symbols = batch_discretize(x, bins)
    return np.array([lz76_phrases(row.tolist()) / row.size for row in symbols])


# --- single-window API ---------------------------------------------------------


def _one(fn, x, *args, **kwargs) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputError("expected a one-dimensional window")
    return float(fn(x[None, :], *args, **kwargs)[0])


def skewness(x):
    return _one(batch_skewness, x)


def kurtosis(x):
    return _one(batch_kurtosis, x)


def autocorrelation(x, lag=1):
    return _one(batch_autocorrelation, x, lag)


def std_mean_ratio(x):
    return _one(batch_std_mean_ratio, x)


def var_mean_ratio(x):
    return _one(batch_var_mean_ratio, x)


def longest_strike_above_mean(x):
    return _one(batch_longest_strike_above_mean, x)


def longest_strike_below_mean(x):
    return _one(batch_longest_strike_below_mean, x)


def number_peaks(x, n=3):
    return _one(batch_number_peaks, x, n)


def permutation_entropy(x, tau=1, d=3):
    return _one(batch_permutation_entropy, x, tau, d)


def approximate_entropy(x, m=2, r=0.2):
    """ApEn with an absolute radius ``r``."""
    if not r > 0:
        raise InputError("approximate entropy radius must be positive")
    return _one(batch_approximate_entropy, x, m, r)


def lempel_ziv_complexity(x, bins=10):
    x = np.asarray(x, dtype=float)
    if x.size < 2 or bins < 2:
        raise InputError("Lempel-Ziv complexity needs >= 2 samples and >= 2 bins")
    return _one(batch_lempel_ziv_complexity, x, bins)


# --- catalog --------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureCatalog:
    raw_features: tuple = RAW_FEATURES
    noise_features: tuple = RAW_FEATURES + NOISE_EXTRA
    apen_m: int = 2
    apen_r_factor: float = 0.2
    lz_bins: int = 10
    peaks_n: int = 3
    perm_tau: int = 1
    perm_d: int = 3
    autocorr_lag: int = 1

    def __post_init__(self):
        object.__setattr__(self, "raw_features", tuple(self.raw_features))
        object.__setattr__(self, "noise_features", tuple(self.noise_features))
        leaked = LOCATION_FEATURES.intersection(self.raw_features)
        if leaked:
            raise ConfigError(f"raw-signal features must not describe the process level: {sorted(leaked)}")
        unknown = set(self.raw_features + self.noise_features) - set(RAW_FEATURES + NOISE_EXTRA)
        if unknown:
            raise ConfigError(f"unknown features: {sorted(unknown)}")

    @property
    def names(self) -> list[str]:
        return list(self.raw_features) + ["noise_" + f for f in self.noise_features]

    def _kernel(self, name, x):
        if name == "approximate_entropy":
            return batch_approximate_entropy(x, self.apen_m, r_factor=self.apen_r_factor)
        if name == "kurtosis":
            return batch_kurtosis(x)
        if name == "lempel_ziv_complexity":
            return batch_lempel_ziv_complexity(x, self.lz_bins)
        if name == "longest_strike_above_mean":
            return batch_longest_strike_above_mean(x)
        if name == "longest_strike_below_mean":
            return batch_longest_strike_below_mean(x)
        if name == "number_peaks":
            return batch_number_peaks(x, self.peaks_n)
        if name == "permutation_entropy":
            return batch_permutation_entropy(x, self.perm_tau, self.perm_d)
        if name == "skewness":
            return batch_skewness(x)
        if name == "autocorrelation":
            return batch_autocorrelation(x, self.autocorr_lag)
        if name == "std_mean_ratio":
            return batch_std_mean_ratio(x)
        if name == "var_mean_ratio":
            return batch_var_mean_ratio(x)
        if name == "mean":
            return x.mean(axis=1)
        if name == "std":
            return x.std(axis=1, ddof=1)
        if name == "variance":
            return x.var(axis=1, ddof=1)
        if name == "abs_energy":
            return (x * x).sum(axis=1)
        if name == "min":
            return x.min(axis=1)
        if name == "max":
            return x.max(axis=1)
        raise ConfigError(f"unknown feature {name!r}")

    def matrix(self, raw, noise) -> tuple[np.ndarray, np.ndarray]:
        """Feature matrix for paired (n_windows, N) raw and noise arrays.

        Returns ``(values, imputed)`` where ``imputed`` is a boolean mask of the
        entries that were undefined and set to 0.
        """
        raw, noise = _rows(raw), _rows(noise)
        if raw.shape != noise.shape:
            raise InputError("raw and noise windows differ in shape")
        if raw.shape[1] < MIN_WINDOW:
            raise InputError(f"windows must have at least {MIN_WINDOW} samples")
        cols = [self._kernel(f, raw) for f in self.raw_features]
        cols += [self._kernel(f, noise) for f in self.noise_features]
        values = np.column_stack(cols) if cols else np.empty((raw.shape[0], 0))
        bad = ~np.isfinite(values)
        values = np.where(bad, 0.0, values)
        return values, bad


@dataclass
class FeatureVector:
    values: dict
    label: Label = Label.SIMULATED
    source_tag: str = ""
    channel: str = ""
    origin: int = 0
    imputed: tuple = ()
    synthetic: bool = False

    def __getitem__(self, name):
        return self.values[name]


def extract_features(pair: WindowPair, catalog: FeatureCatalog = FeatureCatalog()) -> FeatureVector:
    values, bad = catalog.matrix(pair.raw, pair.noise)
    names = catalog.names
    return FeatureVector(
        values={n: float(v) for n, v in zip(names, values[0])},
        label=Label.parse(pair.label),
        source_tag=pair.source_tag,
        channel=pair.channel,
        origin=pair.origin,
        imputed=tuple(n for n, b in zip(names, bad[0]) if b),
    )


def feature_frame(raw, noise, catalog: FeatureCatalog, *, label, source_tag, channel, origins) -> pd.DataFrame:
    """Feature table for many windows of one source/channel."""
    values, _ = catalog.matrix(raw, noise)
    df = pd.DataFrame(values, columns=catalog.names)
    df["label"] = Label.parse(label).value
    df["source_tag"] = source_tag
    df["channel"] = channel
    df["origin"] = np.asarray(origins, dtype=int)
    df["synthetic"] = False
    return df


def to_table(vectors: Iterable[FeatureVector]) -> pd.DataFrame:
    rows = []
    for v in vectors:
        row = dict(v.values)
        row.update(label=Label.parse(v.label).value, source_tag=v.source_tag, channel=v.channel, origin=v.origin, synthetic=v.synthetic)
        rows.append(row)
    return pd.DataFrame(rows)


def feature_columns(table: pd.DataFrame) -> list[str]:
    return [c for c in table.columns if c not in META_COLUMNS]


def feature_pvalues(table: pd.DataFrame, features=None) -> dict[str, tuple[float, float]]:
    """Two-sided Mann-Whitney U test of each feature between Real and Simulated rows.

    Returns ``{feature: (p_value, auc)}`` where ``auc = U / (n_real * n_sim)``.
    """
    features = feature_columns(table) if features is None else list(features)
    is_real = (table["label"] == Label.REAL.value).to_numpy()
    if is_real.all() or not is_real.any():
        raise InputError("feature ranking needs both Real and Simulated rows")
    out = {}
    for f in features:
        col = table[f].to_numpy(dtype=float)
        a, b = col[is_real], col[~is_real]
        if np.all(col == col[0]):
            out[f] = (1.0, 0.5)
            continue
        res = mannwhitneyu(a, b, alternative="two-sided")
        p = float(res.pvalue) if np.isfinite(res.pvalue) else 1.0
        out[f] = (p, float(res.statistic) / (a.size * b.size))
    return out


def rank_features(table: pd.DataFrame, top_k: int = 11, features=None) -> list[str]:
    """Feature names ordered by ascending p-value, truncated to ``top_k``.

    p-values underflow to 0 for well separated features, so ties are broken by
    the distance of the AUC from 0.5 (larger first) and then by name.
    """
    stats = feature_pvalues(table, features)
    ordered = sorted(stats, key=lambda f: (stats[f][0], -abs(stats[f][1] - 0.5), f))
    return ordered[:top_k]
