"""Noise estimation as the residual of a causal scalar Kalman filter.

The filter tracks a random-walk state::

    predict:  x_k^- = x_{k-1},   P_k^- = P_{k-1} + q
    update:   K = P_k^- / (P_k^- + r)
              x_k = x_k^- + K (z_k - x_k^-),   P_k = (1 - K) P_k^-

starting from the first sample with variance ``initial_var``. The noise
estimate is ``z - filtered``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ChannelFrame, TimeSeries
from .errors import ConfigError, InputError


@dataclass(frozen=True)
class KalmanParams:
    process_var_q: float = 1e-5
    measurement_var_r: float = 1e-2
    initial_var: float = 1.0

    def __post_init__(self):
        if not (self.process_var_q > 0 and self.measurement_var_r > 0 and self.initial_var > 0):
            raise ConfigError("Kalman q, r and initial variance must all be positive")


def kalman_gains(n: int, params: KalmanParams) -> np.ndarray:
    """Gain sequence K_1..K_{n-1}; independent of the data for this model."""
    q, r = params.process_var_q, params.measurement_var_r
    p = params.initial_var
    gains = np.empty(max(n - 1, 0))
    for k in range(gains.size):
        p_minus = p + q
        gain = p_minus / (p_minus + r)
        gains[k] = gain
        p = (1.0 - gain) * p_minus
    return gains


def _as_array(series):
    if isinstance(series, TimeSeries):
        return series.values
    return np.asarray(series, dtype=float)


def kalman_filter(values, params: KalmanParams = KalmanParams()) -> np.ndarray:
    z = _as_array(values)
    if z.ndim != 1 or z.size < 2:
        raise InputError("Kalman filtering needs at least two samples")
    gains = kalman_gains(z.size, params)
    out = np.empty_like(z)
    x = float(z[0])
    out[0] = x
    zs = z.tolist()
    for k, gain in enumerate(gains.tolist(), start=1):
        x = x + gain * (zs[k] - x)
        out[k] = x
    return out


def kalman_smooth(series: TimeSeries, params: KalmanParams = KalmanParams()) -> TimeSeries:
    """Posterior state estimates (forward pass only)."""
    return series.with_values(kalman_filter(series.values, params))


def estimate_noise(series: TimeSeries, params: KalmanParams = KalmanParams()) -> TimeSeries:
    return series.with_values(series.values - kalman_filter(series.values, params))


def estimate_frame(frame: ChannelFrame, params: KalmanParams = KalmanParams()) -> ChannelFrame:
    """Residual channels for every channel of ``frame`` (same tags and layout)."""
    arrays = {name: frame.values(name) - kalman_filter(frame.values(name), params) for name in frame.names}
    return frame.replace(arrays, meta={**frame.meta, "residual_of": frame.source_tag})
