"""Noise-fidelity benchmark for simulated industrial control processes."""

from .core import CHANNELS, ChannelFrame, Label, TimeSeries, load_csv, load_manifest, write_csv
from .errors import NoiseBenchError
from .estimation import KalmanParams, estimate_noise, kalman_smooth
from .gridsim import GridConfig, LoadEvent, simulate
from .noisegen import NoiseSpec, fit_gmm, perturb, preset
from .pipeline import PipelineConfig, run_pipeline
from .scoring import FidelityReport, delta, score

__version__ = "0.1.0"

__all__ = [
    "CHANNELS",
    "ChannelFrame",
    "FidelityReport",
    "GridConfig",
    "KalmanParams",
    "Label",
    "LoadEvent",
    "NoiseBenchError",
    "NoiseSpec",
    "PipelineConfig",
    "TimeSeries",
    "delta",
    "estimate_noise",
    "fit_gmm",
    "kalman_smooth",
    "load_csv",
    "load_manifest",
    "perturb",
    "preset",
    "run_pipeline",
    "score",
    "simulate",
    "write_csv",
]
