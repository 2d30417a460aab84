"""Steady-state three-phase grid signal generator.

Produces noise-free, piecewise-constant traces for the ten measurement
channels. Power channels follow

    S = sqrt(3) * V * I,   P = S * cos(phi),   Q = S * sin(phi)

with V and I the three-phase averages and phi in degrees. S is written to
``power_apparent``, P to ``power_real`` and Q to ``power_reactive``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import CHANNELS, ChannelFrame, Label, read_config
from .errors import ConfigError


@dataclass(frozen=True)
class LoadEvent:
    at_s: int
    delta_current: float


@dataclass(frozen=True)
class GridConfig:
    base_voltage: float = 240.0
    base_current: float = 20.0
    base_frequency: float = 50.0
    phase_phi: float = 120.0
    duration_s: int = 1800
    events: tuple = ()
    start_epoch: int = 0

    def __post_init__(self):
        events = tuple(e if isinstance(e, LoadEvent) else LoadEvent(**e) for e in self.events)
        object.__setattr__(self, "events", events)
        if min(self.base_voltage, self.base_current, self.base_frequency) <= 0:
            raise ConfigError("base voltage, current and frequency must be positive")
        if not 0 < self.phase_phi < 180:
            raise ConfigError("phase_phi must lie in (0, 180) degrees")
        if int(self.duration_s) != self.duration_s or self.duration_s < 1:
            raise ConfigError("duration_s must be a positive integer")
        for ev in events:
            if not 0 <= ev.at_s < self.duration_s:
                raise ConfigError(f"event at {ev.at_s}s outside [0, {self.duration_s})")

    @classmethod
    def from_dict(cls, d) -> "GridConfig":
        d = dict(d)
        d["events"] = tuple(LoadEvent(**e) for e in d.get("events", ()))
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad grid config: {exc}") from None

    @classmethod
    def from_json(cls, path) -> "GridConfig":
        return cls.from_dict(read_config(path))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["events"] = [asdict(e) for e in self.events]
        return d

    def with_events(self, events) -> "GridConfig":
        d = self.to_dict()
        d["events"] = [e if isinstance(e, dict) else asdict(e) for e in events]
        return GridConfig.from_dict(d)


def power_triplet(v_mean, i_mean, phi_deg):
    """Return (S, P, Q) for averaged phase voltage and current."""
    phi = math.radians(phi_deg)
    s = math.sqrt(3.0) * np.asarray(v_mean, dtype=float) * np.asarray(i_mean, dtype=float)
    return s, s * math.cos(phi), s * math.sin(phi)


def current_profile(config: GridConfig) -> np.ndarray:
    current = np.full(int(config.duration_s), float(config.base_current))
    for ev in sorted(config.events, key=lambda e: e.at_s):
        current[int(ev.at_s):] += ev.delta_current
    if np.any(current <= 0):
        raise ConfigError("load events drive the total current to zero or below")
    return current


def simulate(config: GridConfig, source_tag="plain") -> ChannelFrame:
    n = int(config.duration_s)
    voltage = np.full(n, float(config.base_voltage))
    current = current_profile(config)
    v_mean = (voltage + voltage + voltage) / 3.0
    i_mean = (current + current + current) / 3.0
    s, p, q = power_triplet(v_mean, i_mean, config.phase_phi)
    arrays = {
        "V1": voltage,
        "V2": voltage.copy(),
        "V3": voltage.copy(),
        "I1": current,
        "I2": current.copy(),
        "I3": current.copy(),
        "frequency": np.full(n, float(config.base_frequency)),
        "power_real": p,
        "power_reactive": q,
        "power_apparent": s,
    }
    return ChannelFrame.from_arrays(
        arrays,
        start_epoch=config.start_epoch,
        source_tag=source_tag,
        label=Label.SIMULATED,
        meta={"grid": config.to_dict()},
    )


def nominal_values(config: GridConfig) -> dict:
    """Per-channel base magnitudes (event-free) used to scale per-unit noise."""
    s, p, q = power_triplet(config.base_voltage, config.base_current, config.phase_phi)
    base = {
        "V1": config.base_voltage,
        "V2": config.base_voltage,
        "V3": config.base_voltage,
        "I1": config.base_current,
        "I2": config.base_current,
        "I3": config.base_current,
        "frequency": config.base_frequency,
        "power_real": float(p),
        "power_reactive": float(q),
        "power_apparent": float(s),
    }
    return {name: abs(float(base[name])) for name in CHANNELS}
