"""Parametric zero-mean noise generators, GMM fitting and additive perturbation.

Every kind is calibrated so that ``sigma`` is the target standard deviation in
per-unit; ``sample`` multiplies it by the channel base value ``scale``:

* uniform  -- support +/- sqrt(3) * sigma
* gaussian -- N(0, sigma^2)
* laplace  -- scale b = sigma / sqrt(2)
* poisson  -- sigma * (Pois(lam) - lam) / sqrt(lam)
* pink     -- Voss-McCartney (16 rows) standardised to exactly sigma
* gmm      -- fitted mixture, re-centred on its own mean
* sum      -- independent parts added together

New kinds (e.g. a learned generator) plug in through ``register_generator``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy.special import logsumexp

from .core import ChannelFrame, Label
from .errors import ConfigError, InputError
from .seeding import derive

VOSS_ROWS = 16
VAR_FLOOR = 1e-10


@dataclass(frozen=True)
class GmmComponent:
    weight: float
    mean: float
    std: float


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    sigma: float | None = None
    lam: float | None = None
    components: tuple = ()
    parts: tuple = ()
    seed: int = 0
    name: str | None = None

    def __post_init__(self):
        kind = str(self.kind).lower()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(
            self, "components", tuple(c if isinstance(c, GmmComponent) else GmmComponent(*c) for c in self.components)
        )
        object.__setattr__(self, "parts", tuple(self.parts))
        if kind not in _GENERATORS:
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if kind in ("uniform", "gaussian", "laplace", "pink", "poisson"):
            if self.sigma is None or not self.sigma > 0:
                raise ConfigError(f"{kind} noise needs sigma > 0")
        if kind == "poisson" and (self.lam is None or not self.lam > 0):
            raise ConfigError("poisson noise needs lam > 0")
        if kind == "gmm":
            if not self.components:
                raise ConfigError("gmm noise needs at least one component")
            weights = np.array([c.weight for c in self.components])
            if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-9:
                raise ConfigError("gmm weights must be positive and sum to 1")
            if any(not c.std > 0 for c in self.components):
                raise ConfigError("gmm component std must be positive")
        if kind == "sum" and len(self.parts) < 2:
            raise ConfigError("sum noise needs at least two parts")

    @property
    def label(self) -> str:
        return self.name or self.kind

    def with_seed(self, seed) -> "NoiseSpec":
        return replace(self, seed=int(seed))

    def target_std(self) -> float:
        """Per-unit standard deviation the generator is calibrated to."""
        if self.kind == "gmm":
            w = np.array([c.weight for c in self.components])
            mu = np.array([c.mean for c in self.components])
            sd = np.array([c.std for c in self.components])
            mean = w @ mu
            return float(np.sqrt(w @ (sd**2 + (mu - mean) ** 2)))
        if self.kind == "sum":
            return float(math.sqrt(sum(p.target_std() ** 2 for p in self.parts)))
        if self.sigma is None:
            raise ConfigError(f"{self.kind} noise has no calibrated std")
        return float(self.sigma)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "seed": self.seed}
        if self.name is not None:
            d["name"] = self.name
        if self.sigma is not None:
            d["sigma"] = self.sigma
        if self.lam is not None:
            d["lam"] = self.lam
        if self.components:
            d["components"] = [[c.weight, c.mean, c.std] for c in self.components]
        if self.parts:
            d["parts"] = [p.to_dict() for p in self.parts]
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "NoiseSpec":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        d["parts"] = tuple(cls.from_dict(p) for p in d.get("parts", ()))
        d["components"] = tuple(GmmComponent(*c) for c in d.get("components", ()))
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad noise spec: {exc}") from None


Generator = Callable[[NoiseSpec, int, float, np.random.Generator], np.ndarray]
_GENERATORS: dict[str, Generator] = {}


def register_generator(kind: str, fn: Generator = None):
    """Register a sampler ``fn(spec, n, scale, rng) -> array``; usable as a decorator."""

    def deco(f):
        _GENERATORS[kind.lower()] = f
        return f

    return deco(fn) if fn is not None else deco


@register_generator("gaussian")
def _gaussian(spec, n, scale, rng):
    return rng.normal(0.0, spec.sigma * scale, n)


@register_generator("uniform")
def _uniform(spec, n, scale, rng):
    half = math.sqrt(3.0) * spec.sigma * scale
    return rng.uniform(-half, half, n)


@register_generator("laplace")
def _laplace(spec, n, scale, rng):
    return rng.laplace(0.0, spec.sigma * scale / math.sqrt(2.0), n)


@register_generator("poisson")
def _poisson(spec, n, scale, rng):
    lam = spec.lam
    return spec.sigma * scale * (rng.poisson(lam, n) - lam) / math.sqrt(lam)


def voss_mccartney(n: int, rng: np.random.Generator, rows: int = VOSS_ROWS) -> np.ndarray:
    """Unnormalised 1/f sequence: row k is redrawn every 2**(k+1) samples, plus a white row."""
    t = np.arange(n)
    total = rng.standard_normal(n)
    for k in range(rows):
        idx = (t + (1 << k)) >> (k + 1)
        total += rng.standard_normal(int(idx[-1]) + 1)[idx]
    return total


@register_generator("pink")
def _pink(spec, n, scale, rng):
    x = voss_mccartney(n, rng)
    if n < 2:
        return np.zeros(n)
    x = x - x.mean()
    return x / x.std() * spec.sigma * scale


@register_generator("gmm")
def _gmm(spec, n, scale, rng):
    w = np.array([c.weight for c in spec.components])
    mu = np.array([c.mean for c in spec.components])
    sd = np.array([c.std for c in spec.components])
    comp = rng.choice(len(w), size=n, p=w / w.sum())
    x = rng.normal(mu[comp], sd[comp])
    return (x - w @ mu) * scale


@register_generator("sum")
def _sum(spec, n, scale, rng):
    out = np.zeros(n)
    for i, part in enumerate(spec.parts):
        out += sample(part.with_seed(derive(spec.seed, "part", i)), n, scale)
    return out


def sample(spec: NoiseSpec, n: int, scale: float = 1.0) -> np.ndarray:
    if not isinstance(spec, NoiseSpec):
        raise ConfigError("sample expects a NoiseSpec")
    if int(n) != n or n < 1:
        raise ConfigError("n must be a positive integer")
    if not scale > 0:
        raise ConfigError("scale must be positive")
    rng = np.random.default_rng(spec.seed)
    return np.asarray(_GENERATORS[spec.kind](spec, int(n), float(scale), rng), dtype=float)


def channel_noise(spec: NoiseSpec, channel: str, n: int, scale: float) -> np.ndarray:
    """The exact sequence ``perturb`` adds to ``channel``."""
    return sample(spec.with_seed(derive(spec.seed, "channel", channel)), n, scale)


def perturb(frame: ChannelFrame, spec_per_channel: Mapping[str, NoiseSpec], scales=None, source_tag=None) -> ChannelFrame:
    """Add independent noise to each listed channel; others pass through untouched.

    ``scales`` maps channel -> base value; it defaults to the absolute channel mean.
    """
    if frame.label != Label.SIMULATED:
        raise InputError("perturb expects a simulated frame")
    unknown = [c for c in spec_per_channel if c not in frame.channels]
    if unknown:
        raise ConfigError(f"noise given for channels not in frame: {unknown}")
    arrays = {}
    names = set()
    for channel, spec in spec_per_channel.items():
        x = frame.values(channel)
        scale = abs(float(x.mean())) if scales is None else float(scales[channel])
        arrays[channel] = x + channel_noise(spec, channel, len(x), scale)
        names.add(spec.label)
    if source_tag is None:
        source_tag = "+".join([frame.source_tag, *sorted(names)]) if names else frame.source_tag
    meta = dict(frame.meta)
    meta["noise"] = {c: s.to_dict() for c, s in spec_per_channel.items()}
    return frame.replace(arrays, source_tag=source_tag, meta=meta)


@dataclass
class GmmFit:
    spec: NoiseSpec
    log_likelihoods: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    floored: list = field(default_factory=list)


def _component_loglik(x, w, mu, var):
    return np.log(w) - 0.5 * (np.log(2 * np.pi * var) + (x[:, None] - mu) ** 2 / var)


def fit_gmm(residuals, k: int = 3, max_iter: int = 200, tol: float = 1e-6, name="gmm", seed=0) -> GmmFit:
    """Fit a 1-D Gaussian mixture by EM.

    Components are initialised from k contiguous chunks of the sorted data, so
    the fit is deterministic. Convergence is declared when the mean per-sample
    log-likelihood improves by less than ``tol``. Variances are floored at
    1e-10; floored components are listed in ``GmmFit.floored``.
    """
    x = np.asarray(residuals, dtype=float).ravel()
    if k < 1:
        raise ConfigError("k must be at least 1")
    if x.size < 10 * k:
        raise InputError(f"need at least {10 * k} residuals to fit {k} components, got {x.size}")
    chunks = np.array_split(np.sort(x), k)
    w = np.array([c.size for c in chunks], dtype=float) / x.size
    mu = np.array([c.mean() for c in chunks])
    var = np.array([c.var() for c in chunks])
    floored = set(np.flatnonzero(var < VAR_FLOOR).tolist())
    var = np.maximum(var, VAR_FLOOR)

    lls = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        logp = _component_loglik(x, w, mu, var)
        norm = logsumexp(logp, axis=1)
        lls.append(float(norm.mean()))
        if len(lls) > 1 and lls[-1] - lls[-2] < tol:
            converged = True
            break
        resp = np.exp(logp - norm[:, None])
        nk = resp.sum(axis=0)
        live = nk > 0
        mu = np.where(live, (resp * x[:, None]).sum(axis=0) / np.where(live, nk, 1.0), mu)
        var = np.where(live, (resp * (x[:, None] - mu) ** 2).sum(axis=0) / np.where(live, nk, 1.0), var)
        low = var < VAR_FLOOR
        floored.update(np.flatnonzero(low).tolist())
        var = np.maximum(var, VAR_FLOOR)
        w = np.maximum(nk / x.size, np.finfo(float).tiny)
        w = w / w.sum()
    if not converged:
        # likelihood of the final parameters
        lls.append(float(logsumexp(_component_loglik(x, w, mu, var), axis=1).mean()))
    if floored:
        warnings.warn(f"GMM variance floored at {VAR_FLOOR} for components {sorted(floored)}", RuntimeWarning, stacklevel=2)

    w = w / w.sum()
    comps = tuple(GmmComponent(float(a), float(b), float(math.sqrt(c))) for a, b, c in zip(w, mu, var))
    spec = NoiseSpec("gmm", components=comps, seed=seed, name=name)
    return GmmFit(spec=spec, log_likelihoods=lls, n_iter=it, converged=converged, floored=sorted(floored))


def _preset_gmm(seed):
    # heavy-tailed zero-mean mixture normalised to an overall std of 0.02
    weights, stds = (0.5, 0.3, 0.2), (0.75, 1.0, 1.5)
    total = math.sqrt(sum(w * s * s for w, s in zip(weights, stds)))
    comps = tuple(GmmComponent(w, 0.0, 0.02 * s / total) for w, s in zip(weights, stds))
    return NoiseSpec("gmm", components=comps, seed=seed, name="gmm")


def _pair(name, a, b):
    return lambda seed: NoiseSpec("sum", parts=(a(0), b(0)), seed=seed, name=name)


_BASIC = {
    "uniform": lambda seed: NoiseSpec("uniform", sigma=0.01, seed=seed, name="uniform"),
    "gaussian1": lambda seed: NoiseSpec("gaussian", sigma=0.01, seed=seed, name="gaussian1"),
    "gaussian2": lambda seed: NoiseSpec("gaussian", sigma=0.05, seed=seed, name="gaussian2"),
    "poisson": lambda seed: NoiseSpec("poisson", sigma=0.01, lam=1.5, seed=seed, name="poisson"),
    "laplace": lambda seed: NoiseSpec("laplace", sigma=0.01, seed=seed, name="laplace"),
    "pink": lambda seed: NoiseSpec("pink", sigma=0.01, seed=seed, name="pink"),
    "gmm": _preset_gmm,
}

PRESETS = dict(_BASIC)
PRESETS["gaussian+uniform"] = _pair("gaussian+uniform", _BASIC["gaussian1"], _BASIC["uniform"])
PRESETS["laplace+uniform"] = _pair("laplace+uniform", _BASIC["laplace"], _BASIC["uniform"])
PRESETS["laplace+poisson"] = _pair("laplace+poisson", _BASIC["laplace"], _BASIC["poisson"])


def preset(name: str, seed: int = 0) -> NoiseSpec:
    try:
        return PRESETS[name](seed)
    except KeyError:
        raise ConfigError(f"unknown noise preset {name!r}; choose from {sorted(PRESETS)}") from None


def load_noise(value, seed=None) -> NoiseSpec:
    """Resolve a preset name, a JSON file path, or an already-parsed mapping."""
    if isinstance(value, NoiseSpec):
        spec = value
    elif isinstance(value, Mapping):
        spec = NoiseSpec.from_dict(value)
    elif str(value) in PRESETS:
        spec = preset(str(value))
    else:
        path = Path(value)
        if not path.is_file():
            raise ConfigError(f"{value!r} is neither a preset nor a noise-spec file")
        spec = NoiseSpec.from_dict(json.loads(path.read_text()))
    return spec if seed is None else spec.with_seed(seed)
