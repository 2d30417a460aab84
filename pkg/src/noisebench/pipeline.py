"""End-to-end benchmark: simulate, perturb, estimate, window, extract, train, score.

One model is trained per channel (windows pruned at ``epsilon_single``) plus
an ``allvalues`` model on index-synchronised windows of every channel (pruned
at ``epsilon_joint``) whose features are the per-channel features
concatenated and prefixed ``<channel>.``.
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import core, estimation, gridsim, noisegen, windowing
from .core import CHANNELS, ChannelFrame, Label, read_config
from .errors import ConfigError, InputError, ManifestError, NoiseBenchError, StageError
from .estimation import KalmanParams
from .features import META_COLUMNS, FeatureCatalog, feature_frame
from .gridsim import GridConfig, LoadEvent
from .learn import ForestParams, SplitPolicy, recall, train
from .noisegen import NoiseSpec
from .scoring import SourceScore, delta, delta_table, score
from .seeding import derive
from .windowing import PruneConfig

log = logging.getLogger(__name__)

ALLVALUES = "allvalues"
PLAIN = "plain"


@dataclass(frozen=True)
class NoiseEntry:
    """A candidate noise: either a fixed spec or a GMM fitted on the real residuals."""

    name: str
    spec: NoiseSpec | None = None
    fit_k: int | None = None

    def __post_init__(self):
        if (self.spec is None) == (self.fit_k is None):
            raise ConfigError(f"noise {self.name!r} needs exactly one of a spec or a GMM fit")

    @classmethod
    def from_dict(cls, d) -> "NoiseEntry":
        d = dict(d)
        if "preset" in d:
            spec = noisegen.preset(d["preset"])
            return cls(d.get("name", d["preset"]), spec=spec)
        name = d.pop("name", None) or d.get("kind")
        if d.get("fit_from") is not None:
            if str(d["fit_from"]).lower() != "real":
                raise ConfigError("fit_from only supports 'real'")
            return cls(name, fit_k=int(d.get("k", 3)))
        return cls(name, spec=NoiseSpec.from_dict({**d, "name": name}))

    def to_dict(self) -> dict:
        if self.spec is None:
            return {"name": self.name, "kind": "gmm", "fit_from": "real", "k": self.fit_k}
        return {**self.spec.to_dict(), "name": self.name}


@dataclass(frozen=True)
class PipelineConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    noises: tuple = ()
    prune: PruneConfig = field(default_factory=PruneConfig)
    kalman: KalmanParams = field(default_factory=KalmanParams)
    split: SplitPolicy = field(default_factory=SplitPolicy)
    catalog: FeatureCatalog = field(default_factory=FeatureCatalog)
    forest: ForestParams = field(default_factory=ForestParams)
    top_k: int = 11
    seed: int = 0
    dynamic_events: tuple = ()
    channels: tuple = CHANNELS
    allvalues: bool = True

    def __post_init__(self):
        names = [n.name for n in self.noises]
        if len(set(names)) != len(names) or PLAIN in names:
            raise ConfigError("noise names must be unique and not 'plain'")
        if self.top_k < 1:
            raise ConfigError("top_k must be positive")
        bad = set(self.channels) - set(CHANNELS)
        if bad:
            raise ConfigError(f"unknown channels {sorted(bad)}")

    @classmethod
    def from_dict(cls, d) -> "PipelineConfig":
        d = dict(d)
        if "seed" not in d:
            raise ConfigError("pipeline config needs a seed")
        try:
            return cls(
                grid=GridConfig.from_dict(d.get("grid", {})),
                noises=tuple(NoiseEntry.from_dict(n) for n in d.get("noises", ())),
                prune=PruneConfig(**d.get("prune", {})),
                kalman=KalmanParams(**d.get("kalman", {})),
                split=SplitPolicy(**d.get("split", {})),
                catalog=FeatureCatalog(**d.get("catalog", {})),
                forest=ForestParams(**d.get("forest", {})),
                top_k=int(d.get("top_k", 11)),
                seed=int(d["seed"]),
                dynamic_events=tuple(LoadEvent(**e) for e in d.get("dynamic_events", ())),
                channels=tuple(d.get("channels", CHANNELS)),
                allvalues=bool(d.get("allvalues", True)),
            )
        except TypeError as exc:
            raise ConfigError(f"bad pipeline config: {exc}") from None

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        return cls.from_dict(read_config(path))

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "noises": [n.to_dict() for n in self.noises],
            "prune": asdict(self.prune),
            "kalman": asdict(self.kalman),
            "split": asdict(self.split),
            "catalog": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.catalog).items()},
            "forest": asdict(self.forest),
            "top_k": self.top_k,
            "seed": self.seed,
            "dynamic_events": [asdict(e) for e in self.dynamic_events],
            "channels": list(self.channels),
            "allvalues": self.allvalues,
        }

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass
class PipelineResult:
    reports: dict
    models: dict
    recalls: dict
    dynamic_reports: dict = field(default_factory=dict)
    deltas: dict = field(default_factory=dict)
    gmm_specs: dict = field(default_factory=dict)
    run_dir: Path | None = None


@contextlib.contextmanager
def stage(name, subject):
    try:
        yield
    except StageError:
        raise
    except NoiseBenchError as exc:
        raise StageError(name, subject, exc) from exc


def _hash_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class _Writer:
    def __init__(self, run_dir):
        self.root = None if run_dir is None else Path(run_dir)
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)

    def path(self, *parts) -> Path | None:
        if self.root is None:
            return None
        p = self.root.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def frame(self, frame, *parts):
        p = self.path(*parts)
        if p is not None:
            core.write_csv(frame, p)

    def text(self, text, *parts):
        p = self.path(*parts)
        if p is not None:
            p.write_text(text, encoding="utf-8")

    def table(self, df, *parts):
        p = self.path(*parts)
        if p is not None:
            df.to_csv(p, index=False, lineterminator="\n")


class FrameFeatures:
    """All-origin windows of one source, computed once and reused by every pruning mode."""

    def __init__(self, frame: ChannelFrame, noise: ChannelFrame, channels, cfg: PruneConfig, catalog: FeatureCatalog):
        self.source_tag = frame.source_tag
        self.label = frame.label
        self.origins = windowing.candidate_origins(len(frame), cfg.window_len, cfg.stride)
        self.single = {}
        self.tables = {}
        joint = np.ones(self.origins.size, dtype=bool)
        for ch in channels:
            raw = windowing.window_matrix(frame.values(ch), self.origins, cfg.window_len)
            res = windowing.window_matrix(noise.values(ch), self.origins, cfg.window_len)
            self.single[ch] = windowing.band_mask(raw, cfg.epsilon_single)
            joint &= windowing.band_mask(raw, cfg.epsilon_joint)
            self.tables[ch] = feature_frame(
                raw, res, catalog, label=frame.label, source_tag=frame.source_tag, channel=ch, origins=self.origins
            )
        self.joint = joint

    def channel_table(self, ch) -> pd.DataFrame:
        return self.tables[ch][self.single[ch]]

    def joint_table(self, channels) -> pd.DataFrame:
        parts = []
        for ch in channels:
            t = self.tables[ch][self.joint]
            feats = t.drop(columns=list(META_COLUMNS))
            parts.append(feats.add_prefix(f"{ch}."))
        out = pd.concat(parts, axis=1).reset_index(drop=True)
        out["label"] = Label.parse(self.label).value
        out["source_tag"] = self.source_tag
        out["channel"] = ALLVALUES
        out["origin"] = self.origins[self.joint]
        out["synthetic"] = False
        return out


def build_candidates(config: PipelineConfig, plain: ChannelFrame, real_frames, channels, seed_key="noise", gmm_specs=None):
    """Perturbed copies of ``plain``, one per configured noise, plus ``plain`` itself."""
    scales = gridsim.nominal_values(config.grid)
    gmm_specs = {} if gmm_specs is None else gmm_specs
    out = [plain]
    for entry in config.noises:
        with stage("perturb", entry.name):
            if entry.spec is not None:
                spec = entry.spec.with_seed(derive(config.seed, seed_key, entry.name))
                per_channel = {ch: spec for ch in channels}
            else:
                if entry.name not in gmm_specs:
                    gmm_specs[entry.name] = fit_real_gmm(real_frames, channels, entry, config)
                per_channel = {
                    ch: s.with_seed(derive(config.seed, seed_key, entry.name)) for ch, s in gmm_specs[entry.name].items()
                }
            out.append(noisegen.perturb(plain, per_channel, scales=scales, source_tag=entry.name))
    return out, gmm_specs


def real_residuals(frames, channel, kalman: KalmanParams = KalmanParams()) -> np.ndarray:
    """Kalman residuals of ``channel`` over every frame, concatenated."""
    return np.concatenate([f.values(channel) - estimation.kalman_filter(f.values(channel), kalman) for f in frames])


def fit_real_gmm(real_frames, channels, entry: NoiseEntry, config: PipelineConfig) -> dict:
    """Per-channel GMM on the per-unit Kalman residuals of the real traces."""
    scales = gridsim.nominal_values(config.grid)
    specs = {}
    for ch in channels:
        fit = noisegen.fit_gmm(real_residuals(real_frames, ch, config.kalman) / scales[ch], k=entry.fit_k, name=entry.name)
        specs[ch] = fit.spec
    return specs


def _fit_channel(table, config, subject, key):
    policy = SplitPolicy(**{**asdict(config.split), "seed": derive(config.seed, "split", key)})
    hyper = ForestParams(**{**asdict(config.forest), "seed": derive(config.seed, "forest", key)})
    with stage("rank+train", subject):
        return train(table, policy, hyper, top_k=config.top_k)


def _score_baseline(res, key, provenance):
    test = res.test
    real = test[test["label"] == Label.REAL.value]
    sim = test[test["label"] != Label.REAL.value]
    model = res.model
    rep = score(model, sim, channel=key, provenance=provenance)
    rep.reference = SourceScore.from_probs(model.predict_proba(real))
    rep.recall = recall(model, test)
    return rep


def run_pipeline(config: PipelineConfig, real_manifest, run_dir=None) -> PipelineResult:
    """Run every stage; artifacts go to ``run_dir`` when given."""
    entries = core.read_manifest(real_manifest)
    out = _Writer(run_dir)
    out.text(json.dumps(config.to_dict(), sort_keys=True, indent=2) + "\n", "config.json")

    with stage("load", str(real_manifest)):
        loaded = [core.load_csv(e.path, source_tag=e.source_tag, label=e.label) for e in entries]
    real_frames = [f for f in loaded if f.label == Label.REAL]
    extra_sims = [f for f in loaded if f.label != Label.REAL]
    if not real_frames:
        raise ManifestError(f"{real_manifest}: no frame labelled real")
    channels = [c for c in config.channels if all(c in f.channels for f in loaded)]
    if not channels:
        raise InputError("no channel is shared by the configuration and every manifest entry")

    grid = config.grid
    with stage("simulate", "grid"):
        plain = gridsim.simulate(grid, source_tag=PLAIN)
        plain = plain.replace({}, meta={})
    candidates, gmm_specs = build_candidates(config, plain, real_frames, channels)
    candidates += extra_sims
    for f in candidates:
        out.frame(f, "frames", f"{f.source_tag}.csv")

    sources = real_frames + candidates
    tags = [f.source_tag for f in sources]
    if len(set(tags)) != len(tags):
        raise ConfigError(f"duplicate source tags: {tags}")

    feats = []
    for f in sources:
        with stage("estimate", f.source_tag):
            noise = estimation.estimate_frame(f, config.kalman)
        out.frame(noise, "residuals", f"{f.source_tag}.csv")
        with stage("extract", f.source_tag):
            feats.append(FrameFeatures(f, noise, channels, config.prune, config.catalog))

    provenance = {
        "config_sha256": config.fingerprint(),
        "seed": config.seed,
        "inputs": {e.source_tag: _hash_file(e.path) for e in entries},
        "gmm": {name: {ch: s.to_dict() for ch, s in specs.items()} for name, specs in gmm_specs.items()},
    }

    keys = list(channels) + ([ALLVALUES] if config.allvalues and len(channels) > 1 else [])
    reports, models, recalls = {}, {}, {}
    for key in keys:
        if key == ALLVALUES:
            table = pd.concat([ff.joint_table(channels) for ff in feats], ignore_index=True)
        else:
            table = pd.concat([ff.channel_table(key) for ff in feats], ignore_index=True)
        out.table(table, "features", f"{key}.csv")
        res = _fit_channel(table, config, key, key)
        models[key] = res.model
        with stage("score", key):
            rep = _score_baseline(res, key, provenance)
        reports[key] = rep
        recalls[key] = rep.recall
        p = out.path("models", f"{key}.json")
        if p is not None:
            res.model.save(p)
        out.text(rep.to_json(), "reports", f"{key}.json")
        log.info("%s: recall %.3f, best %s", key, rep.recall, rep.top)
    out.text("\n".join(reports[k].table() for k in keys), "reports", "summary.txt")

    result = PipelineResult(reports, models, recalls, gmm_specs=gmm_specs, run_dir=out.root)
    if config.dynamic_events:
        run_dynamic(config, result, channels, real_frames, out, provenance)
    return result


def run_dynamic(config, result: PipelineResult, channels, real_frames, out, provenance):
    """Score candidates regenerated with load events using the frozen baseline models."""
    grid = config.grid.with_events(config.dynamic_events)
    with stage("simulate", "dynamic grid"):
        plain = gridsim.simulate(grid, source_tag=PLAIN).replace({}, meta={})
    candidates, _ = build_candidates(config, plain, real_frames, channels, seed_key="dynamic", gmm_specs=result.gmm_specs)
    feats = []
    for f in candidates:
        out.frame(f, "dynamic", "frames", f"{f.source_tag}.csv")
        with stage("estimate", f"dynamic {f.source_tag}"):
            noise = estimation.estimate_frame(f, config.kalman)
        with stage("extract", f"dynamic {f.source_tag}"):
            feats.append(FrameFeatures(f, noise, channels, config.prune, config.catalog))
    prov = {**provenance, "dynamic_events": [asdict(e) for e in config.dynamic_events]}
    for key, model in result.models.items():
        if key == ALLVALUES:
            table = pd.concat([ff.joint_table(channels) for ff in feats], ignore_index=True)
        else:
            table = pd.concat([ff.channel_table(key) for ff in feats], ignore_index=True)
        baseline = result.reports[key]
        with stage("score", f"dynamic {key}"):
            missing = set(baseline.per_source) - set(table["source_tag"])
            if missing:
                raise InputError(f"no dynamic window survives pruning for {sorted(missing)}")
            rep = score(model, table, channel=key, provenance=prov)
            result.dynamic_reports[key] = rep
            result.deltas[key] = delta(baseline, rep)
        out.text(rep.to_json(), "dynamic", "reports", f"{key}.json")
    out.text(
        json.dumps({k: d.to_dict() for k, d in result.deltas.items()}, sort_keys=True, indent=2) + "\n",
        "dynamic",
        "deltas.json",
    )
    out.text(delta_table(list(result.deltas.values()), result.reports), "dynamic", "deltas.txt")
