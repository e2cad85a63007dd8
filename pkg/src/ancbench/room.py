"""Image-source room impulse responses for a shoebox room.

Follows the classic Allen & Berkley construction as popularised by Habets'
generator: uniform wall reflection coefficient from Sabine's formula,
fractional-delay images realised with a Hann-windowed sinc, optional
high-pass post filter.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import signal as sp_signal

from .errors import ConfigurationError
from .signal import ImpulseResponse

ROOM_DIMENSIONS_M = (3.0, 4.0, 2.0)
TRAIN_T60_SET = (0.15, 0.175, 0.2, 0.225, 0.25)
TEST_T60 = 0.2
RIR_TAPS = 512
SOUND_SPEED = 343.0

FRACTIONAL_DELAY_TAPS = 81
HIGHPASS_CUTOFF_HZ = 100.0
HIGHPASS_ORDER = 4


def _triple(v, what: str) -> tuple[float, float, float]:
    t = tuple(float(c) for c in v)
    if len(t) != 3:
        raise ConfigurationError(f"{what} must have three coordinates")
    return t


@dataclass(frozen=True)
class RoomSpec:
    dimensions_m: tuple[float, float, float]
    source_pos_m: tuple[float, float, float]
    mic_pos_m: tuple[float, float, float]
    t60_s: float
    rir_taps: int = RIR_TAPS
    sample_rate_hz: int = 16000
    sound_speed_mps: float = SOUND_SPEED
    highpass_enabled: bool = True

    def __post_init__(self):
        dims = _triple(self.dimensions_m, "dimensions_m")
        src = _triple(self.source_pos_m, "source_pos_m")
        mic = _triple(self.mic_pos_m, "mic_pos_m")
        object.__setattr__(self, "dimensions_m", dims)
        object.__setattr__(self, "source_pos_m", src)
        object.__setattr__(self, "mic_pos_m", mic)
        if any(d <= 0 for d in dims):
            raise ConfigurationError("room dimensions must be positive")
        for name, p in (("source", src), ("microphone", mic)):
            if not all(0.0 < c < d for c, d in zip(p, dims)):
                raise ConfigurationError(f"{name} position {p} is not strictly inside room {dims}")
        if self.rir_taps < 1:
            raise ConfigurationError("rir_taps must be >= 1")
        if self.t60_s < 0:
            raise ConfigurationError("t60_s must be non-negative")
        if self.sample_rate_hz <= 0 or self.sound_speed_mps <= 0:
            raise ConfigurationError("sample rate and sound speed must be positive")


@dataclass(frozen=True)
class SceneGeometry:
    noise_source_pos_m: tuple[float, float, float] = (1.5, 1.0, 1.0)
    reference_mic_pos_m: tuple[float, float, float] = (1.5, 1.0, 1.0)
    error_mic_pos_m: tuple[float, float, float] = (1.5, 3.0, 1.0)
    loudspeaker_pos_m: tuple[float, float, float] = (1.5, 2.5, 1.0)
    room_dimensions_m: tuple[float, float, float] = field(default=ROOM_DIMENSIONS_M)

    def __post_init__(self):
        dims = _triple(self.room_dimensions_m, "room_dimensions_m")
        object.__setattr__(self, "room_dimensions_m", dims)
        for name in ("noise_source_pos_m", "reference_mic_pos_m", "error_mic_pos_m", "loudspeaker_pos_m"):
            p = _triple(getattr(self, name), name)
            object.__setattr__(self, name, p)
            if not all(0.0 < c < d for c, d in zip(p, dims)):
                raise ConfigurationError(f"{name}={p} is outside room {dims}")


REFERENCE_GEOMETRY = SceneGeometry()


def sabine_reflection(dimensions_m: Sequence[float], t60_s: float, sound_speed: float = SOUND_SPEED) -> float:
    """Uniform wall reflection coefficient for a target T60, clamped to [0, 1)."""
    if t60_s <= 0:
        return 0.0
    lx, ly, lz = dimensions_m
    volume = lx * ly * lz
    surface = 2.0 * (lx * ly + lx * lz + ly * lz)
    alpha = 24.0 * volume * math.log(10.0) / (sound_speed * t60_s * surface)
    if alpha >= 1.0:
        return 0.0
    return min(math.sqrt(1.0 - alpha), np.nextafter(1.0, 0.0))


def _image_sources(spec: RoomSpec) -> tuple[np.ndarray, np.ndarray]:
    """Distances (samples) and gains of every image within the RIR window."""
    fs, c = spec.sample_rate_hz, spec.sound_speed_mps
    beta = sabine_reflection(spec.dimensions_m, spec.t60_s, c)
    L = np.array(spec.dimensions_m) * fs / c
    s = np.array(spec.source_pos_m) * fs / c
    r = np.array(spec.mic_pos_m) * fs / c
    # Reach one period past the window so the farthest contributing image is included.
    reach = spec.rir_taps + FRACTIONAL_DELAY_TAPS // 2
    orders = [int(math.ceil(reach / (2.0 * Li))) + 1 for Li in L]

    axes_pos, axes_exp = [], []
    for axis in range(3):
        m = np.arange(-orders[axis], orders[axis] + 1)
        q = np.array([0, 1])
        mm, qq = np.meshgrid(m, q, indexing="ij")
        mm, qq = mm.ravel(), qq.ravel()
        axes_pos.append((1 - 2 * qq) * s[axis] - r[axis] + 2 * mm * L[axis])
        axes_exp.append(np.abs(mm - qq) + np.abs(mm))

    px, py, pz = np.meshgrid(*axes_pos, indexing="ij")
    ex, ey, ez = np.meshgrid(*axes_exp, indexing="ij")
    dist = np.sqrt(px**2 + py**2 + pz**2).ravel()
    n_refl = (ex + ey + ez).ravel()
    if beta == 0.0:
        refl = (n_refl == 0).astype(np.float64)
    else:
        refl = beta ** n_refl.astype(np.float64)
    keep = (dist < reach) & (refl > 0)
    dist = dist[keep]
    gain = refl[keep] / (4.0 * math.pi * dist * c / fs)
    return dist, gain


def fractional_delay_kernel(frac: np.ndarray) -> np.ndarray:
    """Hann-windowed sinc taps for offsets ``-40..40`` around ``floor(delay)``.

    ``frac`` in [0, 1) is the sub-sample part of the delay; returns ``(len(frac), 81)``.
    """
    half = FRACTIONAL_DELAY_TAPS // 2
    t = np.arange(-half, half + 1)[None, :] - np.asarray(frac)[:, None]
    window = 0.5 * (1.0 + np.cos(np.pi * t / (half + 1)))
    return window * np.sinc(t)


def highpass(taps: np.ndarray, sample_rate_hz: int) -> np.ndarray:
    sos = sp_signal.butter(HIGHPASS_ORDER, HIGHPASS_CUTOFF_HZ, btype="highpass", fs=sample_rate_hz, output="sos")
    return sp_signal.sosfilt(sos, taps)


def simulate_rir(spec: RoomSpec) -> ImpulseResponse:
    dist, gain = _image_sources(spec)
    n = spec.rir_taps
    half = FRACTIONAL_DELAY_TAPS // 2
    base = np.floor(dist).astype(np.int64)
    kernel = fractional_delay_kernel(dist - base) * gain[:, None]
    idx = base[:, None] + np.arange(-half, half + 1)[None, :]
    valid = (idx >= 0) & (idx < n)
    h = np.zeros(n)
    # fixed accumulation order keeps results bit-reproducible
    np.add.at(h, idx[valid], kernel[valid])
    if spec.highpass_enabled:
        h = highpass(h, spec.sample_rate_hz)
    return ImpulseResponse(h, spec.sample_rate_hz)


def direct_arrival_index(spec: RoomSpec) -> int:
    d = math.dist(spec.source_pos_m, spec.mic_pos_m)
    return int(round(d / spec.sound_speed_mps * spec.sample_rate_hz))


def direct_arrival_peak(h: ImpulseResponse | np.ndarray, onset_fraction: float = 0.25, search: int = 4) -> int:
    """Index of the direct-path peak of a measured RIR.

    Coincident image sources can make a reflection larger than the direct
    path, so the global maximum is not used: the onset is the first sample
    reaching ``onset_fraction`` of the maximum, and the peak is the largest
    magnitude within ``search`` samples after it.
    """
    taps = h.taps if isinstance(h, ImpulseResponse) else np.asarray(h, dtype=np.float64)
    mag = np.abs(taps)
    onset = int(np.argmax(mag >= onset_fraction * mag.max()))
    return onset + int(np.argmax(mag[onset : onset + search + 1]))


def check_t60(t60_s: float, strict: bool = True) -> float:
    if strict and not any(math.isclose(t60_s, t, abs_tol=1e-9) for t in TRAIN_T60_SET):
        raise ConfigurationError(f"t60={t60_s} s is not in the configured set {TRAIN_T60_SET}")
    if t60_s < 0:
        raise ConfigurationError("t60 must be non-negative")
    return float(t60_s)


def sample_t60(rng: np.random.Generator) -> float:
    return float(TRAIN_T60_SET[rng.integers(len(TRAIN_T60_SET))])


def build_scene_paths(
    geometry: SceneGeometry = REFERENCE_GEOMETRY,
    t60_s: float = TEST_T60,
    sample_rate_hz: int = 16000,
    rir_taps: int = RIR_TAPS,
    sound_speed_mps: float = SOUND_SPEED,
    highpass_enabled: bool = True,
    strict: bool = True,
) -> tuple[ImpulseResponse, ImpulseResponse]:
    """Primary (noise source -> error mic) and secondary (loudspeaker -> error mic) paths."""
    check_t60(t60_s, strict)
    common = dict(
        dimensions_m=geometry.room_dimensions_m,
        mic_pos_m=geometry.error_mic_pos_m,
        t60_s=t60_s,
        rir_taps=rir_taps,
        sample_rate_hz=sample_rate_hz,
        sound_speed_mps=sound_speed_mps,
        highpass_enabled=highpass_enabled,
    )
    primary = simulate_rir(RoomSpec(source_pos_m=geometry.noise_source_pos_m, **common))
    secondary = simulate_rir(RoomSpec(source_pos_m=geometry.loudspeaker_pos_m, **common))
    return primary, secondary


# ---------------------------------------------------------------------------
# import / export


def save_rir_json(h: ImpulseResponse, path) -> None:
    Path(path).write_text(json.dumps({"sample_rate_hz": h.sample_rate_hz, "taps": h.taps.tolist()}))


def load_rir_json(path) -> ImpulseResponse:
    data = json.loads(Path(path).read_text())
    return ImpulseResponse(np.array(data["taps"], dtype=np.float64), int(data["sample_rate_hz"]))
