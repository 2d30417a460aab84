import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisebench import features as F
from noisebench.core import Label
from noisebench.errors import ConfigError, InputError
from noisebench.features import FeatureCatalog
from noisebench.windowing import WindowPair

# --- brute-force oracles ---------------------------------------------------------


def bf_moments(x):
    n = len(x)
    mu = sum(x) / n
    m2 = sum((v - mu) ** 2 for v in x) / n
    m3 = sum((v - mu) ** 3 for v in x) / n
    m4 = sum((v - mu) ** 4 for v in x) / n
    g1 = m3 / m2**1.5 * math.sqrt(n * (n - 1)) / (n - 2)
    g2 = (n - 1) / ((n - 2) * (n - 3)) * ((n + 1) * m4 / m2**2 - 3 * (n - 1))
    return g1, g2


def bf_autocorr(x, lag):
    n = len(x)
    mu = sum(x) / n
    var = sum((v - mu) ** 2 for v in x) / n
    return sum((x[t] - mu) * (x[t + lag] - mu) for t in range(n - lag)) / ((n - lag) * var)


def bf_ratios(x):
    n = len(x)
    mu = sum(x) / n
    var = sum((v - mu) ** 2 for v in x) / (n - 1)
    return math.sqrt(var) / mu, var / mu


def bf_apen(x, m, r):
    n = len(x)

    def phi(mm):
        templ = [x[i : i + mm] for i in range(n - mm + 1)]
        total = 0.0
        for a in templ:
            c = sum(1 for b in templ if max(abs(p - q) for p, q in zip(a, b)) <= r)
            total += math.log(c / len(templ))
        return total / len(templ)

    return phi(m) - phi(m + 1)


def bf_lz76(s):
    """Exhaustive-history parse: each phrase is the longest prefix seen before, plus one symbol."""
    s = list(s)
    i, count = 0, 0
    while i < len(s):
        ell = 0
        while i + ell < len(s) and any(s[j : j + ell + 1] == s[i : i + ell + 1] for j in range(i)):
            ell += 1
        count += 1
        i += ell + 1
    return count


def bf_peaks(x, n):
    return sum(
        1 for i in range(n, len(x) - n) if all(x[i] > x[i - k] and x[i] > x[i + k] for k in range(1, n + 1))
    )


def bf_strike(x, above):
    mu = sum(x) / len(x)
    best = run = 0
    for v in x:
        run = run + 1 if (v > mu if above else v < mu) else 0
        best = max(best, run)
    return best


def windows(seed, count=100, n=20):
    r = np.random.default_rng(seed)
    return [r.normal(r.uniform(-50, 250), r.uniform(0.01, 5), n) for _ in range(count)]


# --- oracle agreement -------------------------------------------------------------


def test_moments_match_brute_force_and_pandas():
    for w in windows(1):
        g1, g2 = bf_moments(list(w))
        assert F.skewness(w) == pytest.approx(g1, abs=1e-10)
        assert F.kurtosis(w) == pytest.approx(g2, abs=1e-10)
        s = pd.Series(w)
        assert F.skewness(w) == pytest.approx(s.skew(), abs=1e-10)
        assert F.kurtosis(w) == pytest.approx(s.kurt(), abs=1e-10)


def test_autocorrelation_and_ratios_match_brute_force():
    for w in windows(2):
        assert F.autocorrelation(w, 1) == pytest.approx(bf_autocorr(list(w), 1), abs=1e-10)
        assert F.autocorrelation(w, 3) == pytest.approx(bf_autocorr(list(w), 3), abs=1e-10)
        sm, vm = bf_ratios(list(w))
        assert F.std_mean_ratio(w) == pytest.approx(sm, abs=1e-10, rel=1e-12)
        assert F.var_mean_ratio(w) == pytest.approx(vm, abs=1e-10, rel=1e-12)


def test_autocorrelation_lag_zero_is_one():
    for w in windows(3, 10):
        assert F.autocorrelation(w, 0) == pytest.approx(1.0, abs=1e-12)


def test_counts_match_brute_force():
    r = np.random.default_rng(4)
    for _ in range(100):
        w = r.integers(0, 5, 20).astype(float)
        assert F.number_peaks(w, 3) == bf_peaks(list(w), 3)
        assert F.number_peaks(w, 1) == bf_peaks(list(w), 1)
        assert F.longest_strike_above_mean(w) == bf_strike(list(w), True)
        assert F.longest_strike_below_mean(w) == bf_strike(list(w), False)


def test_apen_matches_brute_force():
    for w in windows(5, 30):
        r = 0.2 * w.std(ddof=1)
        assert F.approximate_entropy(w, 2, r) == pytest.approx(bf_apen(list(w), 2, r), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=40))
def test_lz76_matches_exhaustive_parse(symbols):
    assert F.lz76_phrases(symbols) == bf_lz76(symbols)


def test_batch_discretize_matches_single():
    for w in windows(6, 50):
        np.testing.assert_array_equal(F.batch_discretize(w[None, :])[0], F.discretize(w))


# --- hand-derived cases -----------------------------------------------------------


def test_permutation_entropy_cases():
    assert F.permutation_entropy(np.arange(20.0)) == 0.0
    assert F.permutation_entropy(np.full(20, 3.0)) == 0.0
    alt = np.array([1, 3, 2, 4, 3, 5, 4, 6, 5, 7, 6, 8], dtype=float)
    assert F.permutation_entropy(alt) == pytest.approx(math.log(2), abs=1e-15)
    with pytest.raises(InputError):
        F.permutation_entropy(np.arange(3.0))


def test_permutation_entropy_all_patterns_once():
    x = np.array([0, 1, 5, 4, 3, 7, 2, 6], dtype=float)
    pats = {tuple(np.argsort(x[i : i + 3])) for i in range(6)}
    assert len(pats) == 6
    assert F.permutation_entropy(x) == pytest.approx(math.log(6), abs=1e-15)


def test_apen_cases():
    assert F.approximate_entropy(np.full(30, 7.0), 2, 0.1) == 0.0
    periodic = np.tile([0.0, 1.0], 50)
    value = F.approximate_entropy(periodic, 2, 0.5)
    assert value == pytest.approx(bf_apen(list(periodic), 2, 0.5), abs=1e-15)
    assert 0 <= value < 1e-4
    u = np.random.default_rng(0).random(200)
    assert F.approximate_entropy(u, 2, 0.2 * u.std(ddof=1)) > 0.3
    with pytest.raises(InputError):
        F.approximate_entropy(u, 2, 0.0)


def test_lz_cases():
    assert F.lempel_ziv_complexity(np.full(20, 4.0)) == pytest.approx(2 / 20)
    # 0 | 1 | 010101
    assert F.lempel_ziv_complexity(np.tile([0.0, 1.0], 4)) == pytest.approx(3 / 8)
    u = np.random.default_rng(0).random(100)
    assert F.lempel_ziv_complexity(u, 10) > F.lempel_ziv_complexity(np.tile([0.0, 1.0], 50), 10)


def test_ratio_and_peak_examples():
    assert F.std_mean_ratio([1.0, 3.0]) == pytest.approx(math.sqrt(2) / 2)
    assert F.var_mean_ratio([1.0, 3.0]) == pytest.approx(1.0)
    assert F.number_peaks([1.0, 3.0, 1.0], 1) == 1


# --- catalog ----------------------------------------------------------------------


def test_constant_window_features():
    pair = WindowPair(np.full(20, 240.0), np.zeros(20), "V1", 0)
    fv = F.extract_features(pair)
    for name in ("std_mean_ratio", "var_mean_ratio", "permutation_entropy", "approximate_entropy", "autocorrelation"):
        assert fv[name] == 0.0
    assert "autocorrelation" in fv.imputed and "skewness" in fv.imputed
    assert all(np.isfinite(v) for v in fv.values.values())


def test_catalog_names_and_no_location_on_raw():
    cat = FeatureCatalog()
    assert len(cat.raw_features) == 11
    assert set(cat.raw_features).isdisjoint({"mean", "min", "max", "abs_energy"})
    assert cat.names[11:] == ["noise_" + f for f in cat.noise_features]
    with pytest.raises(ConfigError):
        FeatureCatalog(raw_features=("mean",))


def test_offset_invariance_of_raw_features(rng):
    cat = FeatureCatalog()
    w = 100 + rng.normal(0, 1, 20)
    c = 37.5
    a, _ = cat.matrix(w, w)
    b, _ = cat.matrix(w + c, w)
    a, b = dict(zip(cat.names, a[0])), dict(zip(cat.names, b[0]))
    for name in cat.raw_features:
        if name.endswith("mean_ratio"):
            continue
        assert b[name] == pytest.approx(a[name], abs=1e-9)
    sd, var, mu = w.std(ddof=1), w.var(ddof=1), w.mean()
    assert b["std_mean_ratio"] == pytest.approx(sd / (mu + c), rel=1e-12)
    assert b["var_mean_ratio"] == pytest.approx(var / (mu + c), rel=1e-12)


def test_short_window_rejected():
    with pytest.raises(InputError):
        F.extract_features(WindowPair(np.ones(3), np.ones(3), "V1", 0))


def _table(seed, n=200):
    r = np.random.default_rng(seed)
    labels = np.r_[np.full(n, Label.REAL.value), np.full(n, Label.SIMULATED.value)]
    informative = np.r_[r.normal(0.6, 1, n), r.normal(0, 1, n)]
    df = pd.DataFrame({f"noise{i}": r.normal(0, 1, 2 * n) for i in range(9)})
    df["signal"] = informative
    df["label"] = labels
    df["source_tag"] = "x"
    return df


def test_ranking_monte_carlo():
    hits = sum(F.rank_features(_table(s), top_k=1)[0] == "signal" for s in range(100))
    assert hits >= 95


def test_ranking_extremes():
    df = _table(0)
    df["const"] = 1.0
    df["perfect"] = np.r_[np.ones(200), np.zeros(200)]
    order = F.rank_features(df, top_k=100)
    assert order[0] == "perfect"
    assert order[-1] == "const"
    assert F.feature_pvalues(df)["const"][0] == 1.0


def test_ranking_needs_both_labels():
    df = _table(0)
    df["label"] = Label.REAL.value
    with pytest.raises(InputError):
        F.rank_features(df)


def test_feature_frame_has_no_nan(plain_frame):
    from noisebench import estimation, windowing

    noise = estimation.estimate_frame(plain_frame)
    origins = windowing.candidate_origins(len(plain_frame), 20, 4)
    raw = windowing.window_matrix(plain_frame.values("V1"), origins, 20)
    res = windowing.window_matrix(noise.values("V1"), origins, 20)
    df = F.feature_frame(raw, res, FeatureCatalog(), label="simulated", source_tag="plain", channel="V1", origins=origins)
    assert not df[F.feature_columns(df)].isna().any().any()
