"""Active noise cancellation benchmark toolkit.

Acoustic scene simulation (image-source room responses, saturating
loudspeaker), classical FxLMS baselines, a near-optimal anti-signal solver,
a toy multi-band masking network and a reproducible benchmark harness.
"""

from .errors import (
    AncError,
    ConfigurationError,
    DatasetError,
    DesignError,
    DivergenceError,
    UndefinedReferenceError,
)
from .loudspeaker import LoudspeakerModel
from .signal import DEFAULT_METRIC, ImpulseResponse, MetricOptions, Signal, convolve, nmse, nmse_over_time, resample
from .system import AcousticScene, simulate, vad_masked_nmse

__version__ = "0.1.0"

__all__ = [
    "AcousticScene", "AncError", "ConfigurationError", "DEFAULT_METRIC", "DatasetError", "DesignError",
    "DivergenceError", "ImpulseResponse", "LoudspeakerModel", "MetricOptions", "Signal",
    "UndefinedReferenceError", "convolve", "nmse", "nmse_over_time", "resample", "simulate", "vad_masked_nmse",
]
