"""Fidelity scores: mean probability of being classified Real, per source."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import InputError
from .learn.tree import ForestModel


@dataclass(frozen=True)
class SourceScore:
    mean_p_real: float
    std_error: float
    n_windows: int
    single_window: bool = False

    @classmethod
    def from_probs(cls, probs) -> "SourceScore":
        p = np.asarray(probs, dtype=float)
        if p.size == 0:
            raise InputError("cannot score an empty group")
        if p.size == 1:
            return cls(float(p[0]), 0.0, 1, True)
        return cls(float(p.mean()), float(p.std(ddof=1) / math.sqrt(p.size)), int(p.size))

    def to_dict(self) -> dict:
        d = {"mean_p_real": self.mean_p_real, "std_error": self.std_error, "n_windows": self.n_windows}
        if self.single_window:
            d["single_window"] = True
        return d

    @classmethod
    def from_dict(cls, d) -> "SourceScore":
        return cls(float(d["mean_p_real"]), float(d["std_error"]), int(d["n_windows"]), bool(d.get("single_window", False)))


def rank_sources(per_source: dict) -> list[str]:
    return sorted(per_source, key=lambda s: (-per_source[s].mean_p_real, s))


@dataclass
class FidelityReport:
    channel: str
    per_source: dict
    ranking: list
    model_fingerprint: str = ""
    reference: SourceScore | None = None
    recall: float | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def top(self) -> str:
        return self.ranking[0]

    def global_mean(self) -> float:
        n = sum(s.n_windows for s in self.per_source.values())
        return sum(s.mean_p_real * s.n_windows for s in self.per_source.values()) / n

    def to_dict(self) -> dict:
        return {
            "channel": self.channel,
            "model_fingerprint": self.model_fingerprint,
            "per_source": {k: self.per_source[k].to_dict() for k in sorted(self.per_source)},
            "ranking": list(self.ranking),
            "recall": self.recall,
            "reference": None if self.reference is None else self.reference.to_dict(),
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d) -> "FidelityReport":
        per = {k: SourceScore.from_dict(v) for k, v in d["per_source"].items()}
        ref = d.get("reference")
        return cls(
            channel=d["channel"],
            per_source=per,
            ranking=list(d["ranking"]),
            model_fingerprint=d.get("model_fingerprint", ""),
            reference=None if ref is None else SourceScore.from_dict(ref),
            recall=d.get("recall"),
            provenance=d.get("provenance", {}),
        )

    def table(self) -> str:
        """Aligned-column text rendering, best source first."""
        rows = [(s, self.per_source[s]) for s in self.ranking]
        if self.reference is not None:
            rows.append(("(real test)", self.reference))
        width = max(len("source"), *(len(r[0]) for r in rows))
        lines = [f"channel: {self.channel}", f"{'rank':>4}  {'source':<{width}}  {'p_real':>8}  {'std_err':>8}  {'windows':>7}"]
        for i, (name, sc) in enumerate(rows, start=1):
            rank = str(i) if name in self.per_source else "-"
            lines.append(f"{rank:>4}  {name:<{width}}  {sc.mean_p_real:8.4f}  {sc.std_error:8.4f}  {sc.n_windows:7d}")
        if self.recall is not None:
            lines.append(f"recall (real): {self.recall:.4f}")
        return "\n".join(lines) + "\n"


def score(model: ForestModel, windows: pd.DataFrame, channel: str = "", group_by: str = "source_tag", **extra) -> FidelityReport:
    """Average the model's Real probability over every window of each source."""
    if len(windows) == 0:
        raise InputError("no windows to score")
    probs = model.predict_proba(windows)
    per_source = {}
    for tag, idx in windows.groupby(group_by, sort=True).indices.items():
        per_source[str(tag)] = SourceScore.from_probs(probs[idx])
    return FidelityReport(
        channel=channel,
        per_source=per_source,
        ranking=rank_sources(per_source),
        model_fingerprint=model.fingerprint(),
        **extra,
    )


@dataclass
class DeltaReport:
    channel: str
    deltas: dict
    baseline_top: str
    dynamic_top: str

    @property
    def argmax_preserved(self) -> bool:
        return self.baseline_top == self.dynamic_top

    @property
    def mean_abs_delta(self) -> float:
        return float(np.mean([abs(v) for v in self.deltas.values()]))

    def to_dict(self) -> dict:
        return {
            "channel": self.channel,
            "deltas": {k: self.deltas[k] for k in sorted(self.deltas)},
            "baseline_top": self.baseline_top,
            "dynamic_top": self.dynamic_top,
            "argmax_preserved": self.argmax_preserved,
            "mean_abs_delta": self.mean_abs_delta,
        }


def delta(baseline: FidelityReport, dynamic: FidelityReport) -> DeltaReport:
    """Per-source change in mean Real probability from baseline to dynamic data."""
    if set(baseline.per_source) != set(dynamic.per_source):
        raise InputError("baseline and dynamic reports cover different sources")
    if baseline.model_fingerprint and dynamic.model_fingerprint and baseline.model_fingerprint != dynamic.model_fingerprint:
        raise InputError("dynamic report was not produced with the baseline model")
    deltas = {s: dynamic.per_source[s].mean_p_real - baseline.per_source[s].mean_p_real for s in baseline.per_source}
    return DeltaReport(baseline.channel, deltas, baseline.top, dynamic.top)


def delta_table(deltas: list[DeltaReport], baselines: dict) -> str:
    width = max([len("value")] + [len(d.channel) for d in deltas])
    src_w = max([len("best noise")] + [len(d.baseline_top) for d in deltas])
    lines = [f"{'value':<{width}}  {'best noise':<{src_w}}  {'prob':>6}  {'delta':>7}  kept"]
    for d in deltas:
        prob = baselines[d.channel].per_source[d.baseline_top].mean_p_real
        lines.append(
            f"{d.channel:<{width}}  {d.baseline_top:<{src_w}}  {prob:6.3f}  {d.deltas[d.baseline_top]:+7.3f}  {'yes' if d.argmax_preserved else 'no'}"
        )
    return "\n".join(lines) + "\n"
