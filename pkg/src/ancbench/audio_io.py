"""WAV reading and writing (PCM16 and 32-bit float)."""

from __future__ import annotations

import logging
import warnings
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from scipy.io import wavfile

from .errors import ConfigurationError
from .signal import Signal

log = logging.getLogger(__name__)

_PCM_SCALE = {np.dtype(np.int16): 32768.0, np.dtype(np.int32): 2147483648.0, np.dtype(np.uint8): 128.0}


def _to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype.kind == "f":
        return data.astype(np.float64)
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype in _PCM_SCALE:
        return data.astype(np.float64) / _PCM_SCALE[data.dtype]
    raise ConfigurationError(f"unsupported WAV sample type {data.dtype}")


def read_wav(path) -> Signal:
    """Read a mono WAV; multichannel files keep channel 0 with a warning."""
    rate, data = wavfile.read(str(path))
    if data.ndim > 1:
        warnings.warn(f"{path}: {data.shape[1]} channels, using channel 0", stacklevel=2)
        data = data[:, 0]
    return Signal(_to_float(data), int(rate))


def read_wav_channels(path) -> tuple[int, np.ndarray]:
    """All channels as a ``(channels, samples)`` float array."""
    rate, data = wavfile.read(str(path))
    data = _to_float(data)
    if data.ndim == 1:
        data = data[None, :]
    else:
        data = data.T
    return int(rate), data


def write_wav(path, x: Signal | np.ndarray, sample_rate_hz: int | None = None,
              fmt: Literal["float32", "pcm16"] = "float32") -> Path:
    """Write one signal, or a ``(channels, samples)`` array, to ``path``."""
    if isinstance(x, Signal):
        data, rate = x.samples, x.sample_rate_hz
    else:
        if sample_rate_hz is None:
            raise ConfigurationError("sample_rate_hz is required for raw arrays")
        data, rate = np.asarray(x, dtype=np.float64), sample_rate_hz
    if data.ndim == 2:
        data = data.T
    if fmt == "float32":
        out = data.astype(np.float32)
    elif fmt == "pcm16":
        peak = float(np.max(np.abs(data), initial=0.0))
        if peak > 1.0:
            log.warning("%s: clipping %.3f peak to PCM16 full scale", path, peak)
        out = np.round(np.clip(data, -1.0, 32767.0 / 32768.0) * 32768.0).astype(np.int16)
    else:
        raise ConfigurationError(f"unknown WAV format {fmt!r}")
    path = Path(path)
    wavfile.write(str(path), int(rate), out)
    return path


def write_multichannel(path, signals: Sequence[Signal], fmt: Literal["float32", "pcm16"] = "float32") -> Path:
    rates = {s.sample_rate_hz for s in signals}
    lengths = {len(s) for s in signals}
    if len(rates) != 1 or len(lengths) != 1:
        raise ConfigurationError("channels must share sample rate and length")
    return write_wav(path, np.stack([s.samples for s in signals]), rates.pop(), fmt)
