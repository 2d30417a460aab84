"""Measurement traces, labels and the on-disk CSV dataset format.

A dataset file is plain UTF-8 CSV with LF line endings::

    timestamp,V1,V2,V3,I1,I2,I3,frequency,power_real,power_reactive,power_apparent
    1700000000,240.0,240.0,...

``timestamp`` is mandatory and first; any subset of the channel columns may
follow. Rows are one second apart. Labels are not stored in the CSV, they come
from a JSON manifest mapping CSV paths to ``{"source_tag", "label"}``.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigError, EmptyDataError, FormatError, InvariantError, IoError, ManifestError, ParseError

CHANNELS = (
    "V1",
    "V2",
    "V3",
    "I1",
    "I2",
    "I3",
    "frequency",
    "power_real",
    "power_reactive",
    "power_apparent",
)


class Label(str, enum.Enum):
    REAL = "real"
    SIMULATED = "simulated"

    @classmethod
    def parse(cls, value) -> "Label":
        if isinstance(value, Label):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ManifestError(f"unknown label {value!r}; expected 'real' or 'simulated'") from None


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """One channel sampled at 1 Hz."""

    channel: str
    start_epoch: int
    values: np.ndarray
    rate_hz: float = 1.0

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.ndim != 1 or values.size < 1:
            raise EmptyDataError(f"channel {self.channel!r} has no samples")
        if not np.all(np.isfinite(values)):
            raise InvariantError(f"channel {self.channel!r} contains non-finite values")
        if self.rate_hz != 1.0:
            raise InvariantError("only 1 Hz traces are supported")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "start_epoch", int(self.start_epoch))

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            self.channel == other.channel
            and self.start_epoch == other.start_epoch
            and np.array_equal(self.values, other.values)
        )

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(self.channel, self.start_epoch, values)


@dataclass(frozen=True, eq=False)
class ChannelFrame:
    """Aligned multi-channel trace with its provenance."""

    channels: Mapping[str, TimeSeries]
    source_tag: str = "unknown"
    label: Label = Label.SIMULATED
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        channels = dict(self.channels)
        if not channels:
            raise EmptyDataError("frame has no channels")
        unknown = set(channels) - set(CHANNELS)
        if unknown:
            raise InvariantError(f"unknown channels: {sorted(unknown)}")
        for name, ts in channels.items():
            if ts.channel != name:
                raise InvariantError(f"channel key {name!r} holds series named {ts.channel!r}")
        lengths = {len(ts) for ts in channels.values()}
        starts = {ts.start_epoch for ts in channels.values()}
        if len(lengths) != 1:
            raise InvariantError(f"channels have mismatched lengths {sorted(lengths)}")
        if len(starts) != 1:
            raise InvariantError("channels have mismatched start epochs")
        ordered = {name: channels[name] for name in CHANNELS if name in channels}
        object.__setattr__(self, "channels", ordered)
        object.__setattr__(self, "label", Label.parse(self.label))
        object.__setattr__(self, "meta", dict(self.meta))

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray], start_epoch=0, **kwargs) -> "ChannelFrame":
        return cls({name: TimeSeries(name, start_epoch, vals) for name, vals in arrays.items()}, **kwargs)

    @property
    def names(self) -> list[str]:
        return list(self.channels)

    @property
    def start_epoch(self) -> int:
        return next(iter(self.channels.values())).start_epoch

    def __len__(self):
        return len(next(iter(self.channels.values())))

    def __getitem__(self, name) -> TimeSeries:
        return self.channels[name]

    def values(self, name) -> np.ndarray:
        return self.channels[name].values

    def replace(self, arrays=None, **changes) -> "ChannelFrame":
        channels = dict(self.channels)
        for name, vals in (arrays or {}).items():
            channels[name] = channels[name].with_values(vals)
        kwargs = dict(source_tag=self.source_tag, label=self.label, meta=self.meta)
        kwargs.update(changes)
        return ChannelFrame(channels, **kwargs)

    def __eq__(self, other):
        if not isinstance(other, ChannelFrame):
            return NotImplemented
        return (
            self.names == other.names
            and self.source_tag == other.source_tag
            and self.label == other.label
            and all(self.channels[n] == other.channels[n] for n in self.names)
        )


def _format_value(x: float) -> str:
    # repr is the shortest string that round-trips exactly
    return repr(float(x))


def write_csv(frame: ChannelFrame, path) -> None:
    if not isinstance(frame, ChannelFrame):
        raise InvariantError("write_csv expects a ChannelFrame")
    if len(frame) == 0:
        raise EmptyDataError("refusing to write an empty frame")
    names = frame.names
    columns = [frame.values(n) for n in names]
    start = frame.start_epoch
    lines = [",".join(["timestamp", *names])]
    for i in range(len(frame)):
        lines.append(",".join([str(start + i), *(_format_value(col[i]) for col in columns)]))
    try:
        Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_csv(path, source_tag=None, label=Label.SIMULATED) -> ChannelFrame:
    """Read a dataset CSV into a frame. Row indices in errors are 1-based data rows."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise FormatError(f"{path}: missing header")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "timestamp":
        raise FormatError(f"{path}: first column must be 'timestamp', got {header[:1]}")
    names = header[1:]
    if not names:
        raise FormatError(f"{path}: no channel columns")
    bad = [n for n in names if n not in CHANNELS]
    if bad:
        raise FormatError(f"{path}: unknown columns {bad}")
    if len(set(names)) != len(names):
        raise FormatError(f"{path}: duplicate columns")
    body = [r for r in rows[1:] if r]
    if not body:
        raise EmptyDataError(f"{path}: header only, no samples")

    stamps = np.empty(len(body), dtype=np.int64)
    data = np.empty((len(body), len(names)))
    for i, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise FormatError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
        try:
            stamps[i - 1] = int(row[0])
        except ValueError:
            raise ParseError(f"{path}: bad timestamp {row[0]!r} at row {i}", row=i, column="timestamp") from None
        for j, cell in enumerate(row[1:]):
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(f"{path}: non-numeric {cell!r} at row {i}, column {names[j]}", row=i, column=names[j]) from None
            if not math.isfinite(value):
                raise ParseError(f"{path}: non-finite value at row {i}, column {names[j]}", row=i, column=names[j])
            data[i - 1, j] = value
    if np.any(np.diff(stamps) != 1):
        raise FormatError(f"{path}: timestamps must increase by one second per row")

    return ChannelFrame(
        {n: TimeSeries(n, int(stamps[0]), data[:, j]) for j, n in enumerate(names)},
        source_tag=source_tag if source_tag is not None else path.stem,
        label=label,
    )


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    source_tag: str
    label: Label


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not doc:
        raise ManifestError(f"{path}: expected a non-empty object mapping CSV paths to metadata")
    entries = []
    for csv_path, meta in doc.items():
        if not isinstance(meta, dict) or "label" not in meta:
            raise ManifestError(f"{path}: entry {csv_path!r} needs a 'label'")
        resolved = (path.parent / csv_path).resolve()
        if not resolved.is_file():
            raise ManifestError(f"{path}: referenced file missing: {csv_path}")
        entries.append(ManifestEntry(resolved, str(meta.get("source_tag", Path(csv_path).stem)), Label.parse(meta["label"])))
    return entries


def write_manifest(path, entries: Mapping[str, Mapping[str, str]]) -> None:
    Path(path).write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_manifest(path) -> list[ChannelFrame]:
    return [load_csv(e.path, source_tag=e.source_tag, label=e.label) for e in read_manifest(path)]


def read_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return doc
