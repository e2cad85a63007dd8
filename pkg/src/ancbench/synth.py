"""Synthetic noise and speech-like test signals.

Stand-ins for the NoiseX-92 / speech corpora, which are not redistributed.
All generators are deterministic given ``seed``.
"""

from __future__ import annotations

import numpy as np
from scipy import signal as sp_signal

from .signal import Signal


def _normalize(x: np.ndarray, peak: float) -> np.ndarray:
    m = np.max(np.abs(x))
    return x if m == 0 else x * (peak / m)


def tone(freq_hz: float, seconds: float, sample_rate_hz: int = 16000, amplitude: float = 1.0,
         phase: float = 0.0) -> Signal:
    t = np.arange(int(round(seconds * sample_rate_hz))) / sample_rate_hz
    return Signal(amplitude * np.sin(2 * np.pi * freq_hz * t + phase), sample_rate_hz)


def white_noise(seconds: float, sample_rate_hz: int = 16000, std: float = 0.1, seed: int = 0) -> Signal:
    rng = np.random.default_rng(seed)
    return Signal(std * rng.standard_normal(int(round(seconds * sample_rate_hz))), sample_rate_hz)


def engine_noise(seconds: float, sample_rate_hz: int = 16000, seed: int = 0, peak: float = 0.5) -> Signal:
    """Harmonic series on a slowly wandering firing frequency plus a little broadband rumble."""
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate_hz))
    f0 = rng.uniform(40.0, 70.0)
    drift = np.cumsum(rng.standard_normal(n)) / np.sqrt(n) * 0.02
    phase = 2 * np.pi * np.cumsum(f0 * (1.0 + drift)) / sample_rate_hz
    x = np.zeros(n)
    for k in range(1, 16):
        x += rng.uniform(0.3, 1.0) / k**0.7 * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    b, a = sp_signal.butter(2, 800.0, fs=sample_rate_hz)
    x += 0.2 * sp_signal.lfilter(b, a, rng.standard_normal(n))
    return Signal(_normalize(x, peak), sample_rate_hz)


def _talker(n: int, sample_rate_hz: int, rng: np.random.Generator) -> np.ndarray:
    b, a = sp_signal.butter(2, [250.0, 3400.0], btype="bandpass", fs=sample_rate_hz)
    carrier = sp_signal.lfilter(b, a, rng.standard_normal(n))
    # voiced component: pitch pulses through the same spectral shaping
    f0 = rng.uniform(90.0, 220.0)
    t = np.arange(n) / sample_rate_hz
    voiced = sum(np.sin(2 * np.pi * f0 * k * t + rng.uniform(0, 2 * np.pi)) / k for k in range(1, 12))
    rate = rng.uniform(3.0, 6.0)
    env = np.clip(np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)), 0.0, None) ** 1.5
    return env * (0.6 * carrier / np.std(carrier) + 0.4 * voiced / np.std(voiced))


def babble_noise(seconds: float, sample_rate_hz: int = 16000, seed: int = 0, talkers: int = 6,
                 peak: float = 0.5) -> Signal:
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate_hz))
    x = sum(_talker(n, sample_rate_hz, rng) for _ in range(talkers))
    return Signal(_normalize(x, peak), sample_rate_hz)


def factory_noise(seconds: float, sample_rate_hz: int = 16000, seed: int = 0, peak: float = 0.5) -> Signal:
    """Machinery hum, periodic impacts and broadband noise."""
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz
    hum = sum(np.sin(2 * np.pi * f * t) / (i + 1) for i, f in enumerate((100.0, 200.0, 300.0, 1250.0)))
    impacts = np.zeros(n)
    period = int(sample_rate_hz / rng.uniform(2.0, 5.0))
    impacts[rng.integers(0, period) :: period] = 1.0
    ring = np.exp(-np.arange(800) / 120.0) * np.sin(2 * np.pi * 2300.0 * np.arange(800) / sample_rate_hz)
    x = 0.5 * hum + 2.0 * np.convolve(impacts, ring)[:n] + 0.3 * rng.standard_normal(n)
    return Signal(_normalize(x, peak), sample_rate_hz)


def speech_like_burst(burst_s: float = 1.0, pad_s: float = 1.0, sample_rate_hz: int = 16000, seed: int = 0,
                      peak: float = 0.5) -> tuple[Signal, tuple[int, int]]:
    """A speech-shaped burst with ``pad_s`` of digital silence on each side.

    Returns the signal and the ``(start, stop)`` sample indices of the burst.
    """
    rng = np.random.default_rng(seed)
    nb = int(round(burst_s * sample_rate_hz))
    npad = int(round(pad_s * sample_rate_hz))
    burst = _talker(nb, sample_rate_hz, rng)
    # keep the syllabic modulation but avoid long internal silences
    burst = burst + 0.3 * np.std(burst) * rng.standard_normal(nb)
    x = np.concatenate([np.zeros(npad), _normalize(burst, peak), np.zeros(npad)])
    return Signal(x, sample_rate_hz), (npad, npad + nb)


GENERATORS = {"engine": engine_noise, "babble": babble_noise, "factory": factory_noise}
