"""Sliding windows with mean-band pruning.

A window ``w`` of length N is kept when every sample lies in the band around
its own mean ``mu``::

    mu (1 - eps) <= w_i <= mu (1 + eps)

For negative means the band is mirrored (bounds swap) so that it always has
width ``2 eps |mu|``; for ``|mu| < 1e-9`` the window is kept only if it is
flat to within 1e-9. Noise windows follow their raw partner unconditionally.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ChannelFrame, Label, TimeSeries
from .errors import ConfigError, InputError

OVERLAP = 0.8
ZERO_MEAN_TOL = 1e-9


@dataclass(frozen=True)
class PruneConfig:
    epsilon_single: float = 0.1
    epsilon_joint: float = 0.3
    window_len: int = 20
    overlap_frac: float = OVERLAP

    def __post_init__(self):
        for eps in (self.epsilon_single, self.epsilon_joint):
            if not 0 < eps < 1:
                raise ConfigError("pruning epsilon must lie in (0, 1)")
        if int(self.window_len) != self.window_len or self.window_len < 2:
            raise ConfigError("window_len must be an integer >= 2")
        if self.overlap_frac != OVERLAP:
            raise ConfigError("overlap is fixed at 0.8")

    @property
    def stride(self) -> int:
        return max(1, round(self.window_len * (1 - self.overlap_frac)))


@dataclass(frozen=True, eq=False)
class WindowPair:
    raw: np.ndarray
    noise: np.ndarray
    channel: str
    origin: int
    source_tag: str = ""
    label: Label = Label.SIMULATED

    def __post_init__(self):
        if len(self.raw) != len(self.noise):
            raise InputError("raw and noise windows differ in length")


def candidate_origins(n: int, window_len: int, stride: int) -> np.ndarray:
    if n < window_len:
        raise InputError(f"series of length {n} is shorter than the window ({window_len})")
    return np.arange(0, n - window_len + 1, stride)


def window_matrix(values, origins, window_len: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return values[np.asarray(origins)[:, None] + np.arange(window_len)]


def band_mask(windows: np.ndarray, eps: float) -> np.ndarray:
    """Row-wise pruning decision for a (n_windows, N) matrix; True means keep."""
    windows = np.atleast_2d(np.asarray(windows, dtype=float))
    mu = windows.mean(axis=1)
    lo = np.where(mu >= 0, mu * (1 - eps), mu * (1 + eps))
    hi = np.where(mu >= 0, mu * (1 + eps), mu * (1 - eps))
    inside = np.all((windows >= lo[:, None]) & (windows <= hi[:, None]), axis=1)
    flat = np.max(np.abs(windows - mu[:, None]), axis=1) < ZERO_MEAN_TOL
    return np.where(np.abs(mu) < ZERO_MEAN_TOL, flat, inside)


def keep_window(window, eps: float) -> bool:
    return bool(band_mask(np.asarray(window, dtype=float)[None, :], eps)[0])


def _values(x):
    return x.values if isinstance(x, TimeSeries) else np.asarray(x, dtype=float)


def extract_windows(raw, noise, cfg: PruneConfig = PruneConfig(), source_tag="", label=Label.SIMULATED, eps=None) -> list[WindowPair]:
    """Windows of ``raw`` that pass pruning, each paired with the same slice of ``noise``."""
    r, z = _values(raw), _values(noise)
    if r.shape != z.shape:
        raise InputError("raw and noise series differ in length")
    channel = raw.channel if isinstance(raw, TimeSeries) else ""
    n = cfg.window_len
    origins = candidate_origins(r.size, n, cfg.stride)
    keep = band_mask(window_matrix(r, origins, n), cfg.epsilon_single if eps is None else eps)
    return [
        WindowPair(r[o : o + n], z[o : o + n], channel, int(o), source_tag, label)
        for o in origins[keep]
    ]


def joint_origins(frame: ChannelFrame, cfg: PruneConfig = PruneConfig()) -> np.ndarray:
    """Origins whose window passes pruning (at epsilon_joint) in every channel."""
    origins = candidate_origins(len(frame), cfg.window_len, cfg.stride)
    keep = np.ones(origins.size, dtype=bool)
    for name in frame.names:
        keep &= band_mask(window_matrix(frame.values(name), origins, cfg.window_len), cfg.epsilon_joint)
    return origins[keep]


def extract_joint(frame: ChannelFrame, noise_frame: ChannelFrame, cfg: PruneConfig = PruneConfig()) -> dict[str, list[WindowPair]]:
    """Index-synchronised windows for all channels of ``frame``."""
    if frame.names != noise_frame.names or len(frame) != len(noise_frame) or frame.start_epoch != noise_frame.start_epoch:
        raise InputError("signal and noise frames are not aligned")
    origins = joint_origins(frame, cfg)
    if origins.size == 0:
        warnings.warn(f"no window of {frame.source_tag!r} survives joint pruning", RuntimeWarning, stacklevel=2)
    n = cfg.window_len
    out = {}
    for name in frame.names:
        r, z = frame.values(name), noise_frame.values(name)
        out[name] = [WindowPair(r[o : o + n], z[o : o + n], name, int(o), frame.source_tag, frame.label) for o in origins]
    return out


def dump_windows(pairs: list[WindowPair], path, which="raw") -> None:
    """One window per row, columns w0..w{N-1}."""
    if not pairs:
        Path(path).write_text("")
        return
    n = len(pairs[0].raw)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["origin", *(f"w{i}" for i in range(n))])
        for p in pairs:
            writer.writerow([p.origin, *(repr(float(v)) for v in getattr(p, which))])
