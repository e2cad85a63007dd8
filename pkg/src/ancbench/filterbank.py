"""Even-band windowed-sinc FIR filter bank with an unfiltered full band."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import ConfigurationError, DesignError
from .signal import ImpulseResponse, Signal, conv_full, conv_truncated

# Transition width (in units of fs / num_taps) of each window, used to size designs.
_TRANSITION_FACTOR = {"hann": 3.1, "hamming": 3.3, "blackman": 5.5}


@dataclass(frozen=True)
class FilterBankSpec:
    q: int = 2
    num_taps: int = 127
    sample_rate_hz: int = 16000
    window: Literal["hamming", "hann", "blackman"] = "hamming"
    compensate_delay: bool = True

    def __post_init__(self):
        if self.q < 1:
            raise ConfigurationError("q must be >= 1")
        if self.num_taps < 11 or self.num_taps % 2 == 0:
            raise ConfigurationError("num_taps must be odd and >= 11")
        if self.window not in _TRANSITION_FACTOR:
            raise ConfigurationError(f"unknown window {self.window!r}")
        if self.sample_rate_hz <= 0:
            raise ConfigurationError("sample_rate_hz must be positive")

    @property
    def nyquist_hz(self) -> float:
        return self.sample_rate_hz / 2.0

    @property
    def delay(self) -> int:
        return (self.num_taps - 1) // 2


@dataclass(frozen=True, eq=False)
class BandSignals:
    bands: tuple[Signal, ...]

    def __post_init__(self):
        if len({len(b) for b in self.bands}) != 1 or len({b.sample_rate_hz for b in self.bands}) != 1:
            raise ConfigurationError("all bands must share length and sample rate")

    @property
    def q(self) -> int:
        return len(self.bands) - 1

    def __getitem__(self, i: int) -> Signal:
        return self.bands[i]

    def __len__(self) -> int:
        return len(self.bands)


def band_edges(spec: FilterBankSpec, i: int) -> tuple[float, float]:
    """``((i-1) F / Q, i F / Q)`` with ``F`` the Nyquist frequency."""
    if not 1 <= i <= spec.q:
        raise ConfigurationError(f"band index {i} outside 1..{spec.q}")
    F = spec.nyquist_hz
    return ((i - 1) * F / spec.q, i * F / spec.q)


def _window(name: str, n: int) -> np.ndarray:
    k = np.arange(n)
    x = 2.0 * np.pi * k / (n - 1)
    if name == "hamming":
        return 0.54 - 0.46 * np.cos(x)
    if name == "hann":
        return 0.5 - 0.5 * np.cos(x)
    return 0.42 - 0.5 * np.cos(x) + 0.08 * np.cos(2.0 * x)


def required_taps(spec: FilterBankSpec) -> int:
    """Smallest odd tap count whose transition band fits in half a band width."""
    half_band = spec.nyquist_hz / spec.q / 2.0
    n = math.ceil(_TRANSITION_FACTOR[spec.window] * spec.sample_rate_hz / half_band)
    return max(11, n | 1)


def _design(spec: FilterBankSpec, i: int) -> np.ndarray:
    lo, hi = band_edges(spec, i)
    n = spec.num_taps
    t = np.arange(n) - spec.delay
    fs = spec.sample_rate_hz

    def lowpass(fc):
        c = 2.0 * fc / fs
        return c * np.sinc(c * t)

    if spec.q == 1:
        h = np.zeros(n)
        h[spec.delay] = 1.0
        return h
    if i == 1:
        ideal, f_norm = lowpass(hi), 0.0
    elif i == spec.q:
        delta = np.zeros(n)
        delta[spec.delay] = 1.0
        ideal, f_norm = delta - lowpass(lo), spec.nyquist_hz
    else:
        ideal, f_norm = lowpass(hi) - lowpass(lo), 0.5 * (lo + hi)
    h = ideal * _window(spec.window, n)
    # unity gain at the band's reference frequency
    gain = np.abs(np.sum(h * np.exp(-2j * np.pi * f_norm / fs * t)))
    return h / gain


@lru_cache(maxsize=64)
def _design_cached(spec: FilterBankSpec, i: int) -> ImpulseResponse:
    return ImpulseResponse(_design(spec, i), spec.sample_rate_hz)


def design_band_filter(spec: FilterBankSpec, i: int) -> ImpulseResponse:
    """Linear-phase windowed-sinc filter for band ``i``.

    Band 1 is a low-pass at its upper edge, band Q a high-pass at its lower
    edge, interior bands are band-passes; with ``q == 1`` the filter is a pure
    delay (the band is the whole spectrum).
    """
    band_edges(spec, i)
    need = required_taps(spec)
    if spec.q > 1 and spec.num_taps < need:
        raise DesignError(
            f"{spec.num_taps} taps cannot separate {spec.q} bands at {spec.sample_rate_hz} Hz "
            f"with a {spec.window} window; use num_taps >= {need}"
        )
    return _design_cached(spec, i)


def apply_band_filter(spec: FilterBankSpec, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    if spec.compensate_delay:
        return conv_full(x, h)[spec.delay : spec.delay + x.shape[0]]
    return conv_truncated(x, h)


def split(spec: FilterBankSpec, x: Signal) -> BandSignals:
    """``bands[0]`` is ``x`` itself; ``bands[i]`` the delay-aligned band ``i``."""
    if x.sample_rate_hz != spec.sample_rate_hz:
        raise ConfigurationError(f"signal rate {x.sample_rate_hz} Hz does not match filter bank {spec.sample_rate_hz} Hz")
    bands = [x]
    for i in range(1, spec.q + 1):
        h = design_band_filter(spec, i).taps
        bands.append(Signal(apply_band_filter(spec, x.samples, h), x.sample_rate_hz))
    return BandSignals(tuple(bands))


def export_filters(spec: FilterBankSpec, path) -> Path:
    path = Path(path)
    filters = []
    for i in range(1, spec.q + 1):
        lo, hi = band_edges(spec, i)
        filters.append({"band": i, "lo_hz": lo, "hi_hz": hi, "taps": design_band_filter(spec, i).taps.tolist()})
    path.write_text(json.dumps({"q": spec.q, "num_taps": spec.num_taps, "window": spec.window,
                                "sample_rate_hz": spec.sample_rate_hz, "filters": filters}, indent=1))
    return path
