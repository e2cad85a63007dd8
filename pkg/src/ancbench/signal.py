"""Waveform and FIR value types, convolution, resampling and the NMSE family."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np
from scipy import signal as sp_signal

from .errors import ConfigurationError, UndefinedReferenceError

# Above this many multiply-adds the FFT path is used for linear convolution.
_DIRECT_CONV_LIMIT = 200_000


def _frozen_array(values, what: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    if arr.size == 0:
        raise ConfigurationError(f"{what} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{what} contains NaN or Inf")
    arr.setflags(write=False)
    return arr


def _check_rate(rate) -> int:
    if int(rate) != rate or rate <= 0:
        raise ConfigurationError(f"sample rate must be a positive integer, got {rate!r}")
    return int(rate)


@dataclass(frozen=True, eq=False)
class Signal:
    """A finite, uniformly sampled real waveform."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen_array(self.samples, "Signal samples"))
        object.__setattr__(self, "sample_rate_hz", _check_rate(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def energy(self) -> float:
        return float(np.dot(self.samples, self.samples))

    def with_samples(self, samples) -> "Signal":
        return Signal(samples, self.sample_rate_hz)

    @classmethod
    def zeros(cls, n: int, sample_rate_hz: int) -> "Signal":
        return cls(np.zeros(n), sample_rate_hz)


@dataclass(frozen=True, eq=False)
class ImpulseResponse:
    """FIR tap vector, e.g. an acoustic path or a band filter."""

    taps: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        object.__setattr__(self, "taps", _frozen_array(self.taps, "ImpulseResponse taps"))
        object.__setattr__(self, "sample_rate_hz", _check_rate(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.taps.shape[0]

    @classmethod
    def unit(cls, sample_rate_hz: int, delay: int = 0) -> "ImpulseResponse":
        taps = np.zeros(delay + 1)
        taps[delay] = 1.0
        return cls(taps, sample_rate_hz)


@dataclass(frozen=True)
class MetricOptions:
    db_floor: float = -120.0
    epsilon: float = 1e-12

    def __post_init__(self):
        if not self.db_floor < 0:
            raise ConfigurationError("db_floor must be negative")
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")


DEFAULT_METRIC = MetricOptions()


# ---------------------------------------------------------------------------
# convolution


def conv_full(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Full linear convolution of two 1-D float arrays."""
    if x.shape[0] * h.shape[0] <= _DIRECT_CONV_LIMIT:
        return np.convolve(x, h)
    return sp_signal.fftconvolve(x, h)


def conv_truncated(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """First ``len(x)`` samples of the causal full convolution."""
    return conv_full(x, h)[: x.shape[0]]


def corr_truncated(r: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`conv_truncated` with respect to ``x``.

    Returns ``g[m] = sum_k h[k] * r[m + k]`` restricted to ``m + k < len(r)``.
    """
    m = r.shape[0]
    return conv_full(r[::-1], h)[:m][::-1]


def convolve(x: Signal, h: ImpulseResponse, mode: Literal["full", "truncated"] = "truncated") -> Signal:
    if x.sample_rate_hz != h.sample_rate_hz:
        raise ConfigurationError(
            f"sample-rate mismatch: signal {x.sample_rate_hz} Hz vs filter {h.sample_rate_hz} Hz"
        )
    if mode == "full":
        out = conv_full(x.samples, h.taps)
    elif mode == "truncated":
        out = conv_truncated(x.samples, h.taps)
    else:
        raise ConfigurationError(f"unknown convolution mode {mode!r}")
    return Signal(out, x.sample_rate_hz)


# ---------------------------------------------------------------------------
# NMSE family


def nmse_arrays(u: np.ndarray, v: np.ndarray, opts: MetricOptions = DEFAULT_METRIC) -> float:
    """NMSE in dB on raw arrays; see :func:`nmse`."""
    if u.shape != v.shape:
        raise ConfigurationError(f"length mismatch: {u.shape[0]} vs {v.shape[0]}")
    den = float(np.dot(u, u))
    if den == 0.0:
        raise UndefinedReferenceError("reference signal is identically zero")
    diff = u - v
    num = float(np.dot(diff, diff))
    if num == 0.0:
        return opts.db_floor
    return max(10.0 * math.log10(num / den), opts.db_floor)


def nmse(u: Signal, v: Signal, opts: MetricOptions = DEFAULT_METRIC) -> float:
    """``10*log10(sum((u - v)^2) / sum(u^2))`` clamped below at ``opts.db_floor``.

    ``u`` is the reference (target) and must carry energy.
    """
    if u.sample_rate_hz != v.sample_rate_hz:
        raise ConfigurationError("sample-rate mismatch between NMSE operands")
    return nmse_arrays(u.samples, v.samples, opts)


class WindowedNmse(NamedTuple):
    time_s: float
    nmse_db: float
    low_energy: bool


def nmse_over_time(
    u: Signal,
    v: Signal,
    window_s: float = 1.0,
    hop_s: float = 0.1,
    opts: MetricOptions = DEFAULT_METRIC,
) -> list[WindowedNmse]:
    """Sliding-window NMSE.

    ``time_s`` is the window centre. A window whose reference energy is below
    ``opts.epsilon`` reports the floor with ``low_energy`` set. If the window is
    longer than the signal a single full-signal value is returned.
    """
    if u.sample_rate_hz != v.sample_rate_hz or len(u) != len(v):
        raise ConfigurationError("NMSE operands must share length and sample rate")
    rate = u.sample_rate_hz
    win = int(round(window_s * rate))
    hop = int(round(hop_s * rate))
    if win < 1:
        raise ConfigurationError("window must span at least one sample")
    if hop_s <= 0 or hop < 1:
        raise ConfigurationError("hop must be positive")
    n = len(u)
    if win >= n:
        win, starts = n, [0]
    else:
        starts = range(0, n - win + 1, hop)
    out = []
    for s in starts:
        us = u.samples[s : s + win]
        vs = v.samples[s : s + win]
        t = (s + win / 2) / rate
        if float(np.dot(us, us)) < opts.epsilon:
            out.append(WindowedNmse(t, opts.db_floor, True))
        else:
            out.append(WindowedNmse(t, nmse_arrays(us, vs, opts), False))
    return out


# ---------------------------------------------------------------------------
# resampling


def resampling_filter(up: int, down: int, source_hz: int, target_hz: int) -> np.ndarray:
    """Kaiser-windowed sinc anti-alias/anti-image filter for ``resample_poly``.

    Designed at the intermediate rate ``up * source_hz`` with the -6 dB point at
    0.475 of the lower rate, transition width 0.05 of the lower rate and 90 dB
    stopband, which keeps ripple far under 0.1 dB up to 0.45 of the lower rate.
    """
    fs_mid = up * source_hz
    low = min(source_hz, target_hz)
    width = 0.05 * low
    numtaps, beta = sp_signal.kaiserord(90.0, width / (0.5 * fs_mid))
    numtaps |= 1
    # resample_poly applies the gain of `up` itself
    return sp_signal.firwin(numtaps, 0.475 * low, window=("kaiser", beta), fs=fs_mid)


def resample(x: Signal, target_hz: int) -> Signal:
    """Polyphase windowed-sinc resampling to ``target_hz``.

    Output length is ``floor(len(x) * target_hz / source_hz)``.
    """
    target_hz = _check_rate(target_hz)
    src = x.sample_rate_hz
    if target_hz == src:
        return x
    g = math.gcd(src, target_hz)
    up, down = target_hz // g, src // g
    h = resampling_filter(up, down, src, target_hz)
    y = sp_signal.resample_poly(x.samples, up, down, window=h)
    n_out = (len(x) * target_hz) // src
    return Signal(y[:n_out], target_hz)
