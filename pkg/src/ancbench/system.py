"""Feedforward ANC loop, VAD-masked evaluation and the causality budget."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import write_multichannel
from .errors import ConfigurationError, UndefinedReferenceError
from .loudspeaker import LoudspeakerModel
from .room import REFERENCE_GEOMETRY, SOUND_SPEED, SceneGeometry
from .signal import DEFAULT_METRIC, ImpulseResponse, MetricOptions, Signal, conv_truncated, nmse_arrays


@dataclass(frozen=True, eq=False)
class AcousticScene:
    primary_path: ImpulseResponse
    secondary_path: ImpulseResponse
    loudspeaker: LoudspeakerModel = LoudspeakerModel()

    def __post_init__(self):
        if self.primary_path.sample_rate_hz != self.secondary_path.sample_rate_hz:
            raise ConfigurationError("primary and secondary paths must share a sample rate")

    @property
    def sample_rate_hz(self) -> int:
        return self.primary_path.sample_rate_hz

    def primary(self, x: np.ndarray) -> np.ndarray:
        """``d = P * x`` (truncated)."""
        return conv_truncated(x, self.primary_path.taps)

    def anti_signal(self, y: np.ndarray) -> np.ndarray:
        """``a = S * f_LS(y)`` (truncated)."""
        return conv_truncated(self.loudspeaker.apply_array(y), self.secondary_path.taps)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.primary_path.taps.tobytes())
        h.update(self.secondary_path.taps.tobytes())
        h.update(repr((self.sample_rate_hz, self.loudspeaker.config_value())).encode())
        return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class SimulationResult:
    d: Signal
    a: Signal
    e: Signal
    nmse_db: float

    def export(self, stem) -> tuple[Path, Path]:
        """Write ``<stem>.wav`` (channels d, a, e) and ``<stem>.json``."""
        stem = Path(stem)
        wav = write_multichannel(stem.with_suffix(".wav"), [self.d, self.a, self.e])
        meta = stem.with_suffix(".json")
        meta.write_text(json.dumps({"channels": ["d", "a", "e"], "nmse_db": self.nmse_db,
                                    "sample_rate_hz": self.d.sample_rate_hz, "samples": len(self.d)}))
        return wav, meta


def _check_pair(scene: AcousticScene, x: Signal, y: Signal) -> None:
    if len(x) != len(y) or x.sample_rate_hz != y.sample_rate_hz:
        raise ConfigurationError("x and y must share length and sample rate")
    if x.sample_rate_hz != scene.sample_rate_hz:
        raise ConfigurationError(f"signal rate {x.sample_rate_hz} Hz does not match scene {scene.sample_rate_hz} Hz")


def simulate(scene: AcousticScene, x: Signal, y: Signal, opts: MetricOptions = DEFAULT_METRIC) -> SimulationResult:
    _check_pair(scene, x, y)
    d = scene.primary(x.samples)
    a = scene.anti_signal(y.samples)
    rate = x.sample_rate_hz
    return SimulationResult(Signal(d, rate), Signal(a, rate), Signal(d - a, rate), nmse_arrays(d, a, opts))


# ---------------------------------------------------------------------------
# voice activity detection


@dataclass(frozen=True)
class VadSpec:
    window_samples: int = 256
    hop_samples: int = 128
    energy_threshold_fraction: float = 0.10

    def __post_init__(self):
        if not 0 < self.hop_samples <= self.window_samples:
            raise ConfigurationError("VAD requires 0 < hop <= window")
        if not 0.0 < self.energy_threshold_fraction < 1.0:
            raise ConfigurationError("VAD threshold fraction must lie in (0, 1)")


def frame_energies(u: np.ndarray, spec: VadSpec) -> np.ndarray:
    """Sum-of-squares per frame; the last frame is zero-padded to cover the tail."""
    n, win, hop = u.shape[0], spec.window_samples, spec.hop_samples
    n_frames = 1 + max(0, math.ceil((n - win) / hop))
    padded = np.zeros((n_frames - 1) * hop + win)
    padded[:n] = u
    frames = np.lib.stride_tricks.sliding_window_view(padded, win)[::hop]
    return np.einsum("ij,ij->i", frames, frames)


def vad_activity(u: np.ndarray, spec: VadSpec = VadSpec()) -> np.ndarray:
    """Boolean per-sample activity: kept if any covering frame is active."""
    energies = frame_energies(u, spec)
    active = np.zeros(u.shape[0], dtype=bool)
    peak = energies.max(initial=0.0)
    if peak <= 0.0:
        return active
    for f in np.flatnonzero(energies >= spec.energy_threshold_fraction * peak):
        start = f * spec.hop_samples
        active[start : start + spec.window_samples] = True
    return active


def vad_mask(u: Signal, spec: VadSpec = VadSpec()) -> Signal:
    """Zero every sample not covered by an active frame."""
    keep = vad_activity(u.samples, spec)
    return u.with_samples(np.where(keep, u.samples, 0.0))


def masked_nmse(d: Signal, a: Signal, spec: VadSpec = VadSpec(), mask_from: Signal | None = None,
                opts: MetricOptions = DEFAULT_METRIC) -> float:
    """NMSE of ``a`` against ``d`` restricted to the activity of ``mask_from`` (default ``d``)."""
    source = d if mask_from is None else mask_from
    if len(source) != len(d) or len(a) != len(d):
        raise ConfigurationError("masked NMSE operands must share length")
    keep = vad_activity(source.samples, spec)
    dm = np.where(keep, d.samples, 0.0)
    if not np.any(dm):
        raise UndefinedReferenceError("primary signal is fully masked by the VAD")
    return nmse_arrays(dm, np.where(keep, a.samples, 0.0), opts)


def vad_masked_nmse(scene: AcousticScene, x: Signal, y: Signal, spec: VadSpec = VadSpec(),
                    mask_source: Signal | None = None, opts: MetricOptions = DEFAULT_METRIC) -> float:
    """VAD-masked NMSE between ``P*x`` and ``S*f_LS(y)``.

    The mask comes from ``d`` unless ``mask_source`` (e.g. the clean source
    signal) is given; it is computed once and applied to both operands.
    """
    res = simulate(scene, x, y, opts)
    return masked_nmse(res.d, res.a, spec, mask_source, opts)


# ---------------------------------------------------------------------------
# causality


@dataclass(frozen=True)
class CausalityBudget:
    t_p_s: float
    t_s_s: float
    t_anc_s: float

    def __post_init__(self):
        if min(self.t_p_s, self.t_s_s, self.t_anc_s) < 0:
            raise ConfigurationError("causality times must be non-negative")

    @property
    def budget_s(self) -> float:
        return self.t_p_s - self.t_s_s

    @property
    def margin_s(self) -> float:
        return self.budget_s - self.t_anc_s


@dataclass(frozen=True)
class CausalityVerdict:
    budget: CausalityBudget
    passed: bool
    status: str


def causality_margin(geometry: SceneGeometry = REFERENCE_GEOMETRY, sound_speed: float = SOUND_SPEED,
                     t_anc_s: float = 0.0) -> CausalityVerdict:
    """Check ``T_ANC < T_p - T_s`` for a scene geometry."""
    d_p = math.dist(geometry.noise_source_pos_m, geometry.error_mic_pos_m)
    d_s = math.dist(geometry.loudspeaker_pos_m, geometry.error_mic_pos_m)
    if d_p <= 0 or d_s <= 0 or sound_speed <= 0:
        raise ConfigurationError("path distances and sound speed must be positive")
    budget = CausalityBudget(d_p / sound_speed, d_s / sound_speed, t_anc_s)
    if budget.t_p_s <= budget.t_s_s:
        return CausalityVerdict(budget, False, "primary path is not longer than secondary path; no causal budget")
    if t_anc_s < budget.budget_s:
        return CausalityVerdict(budget, True, f"ok: {t_anc_s:.6f} s < budget {budget.budget_s:.6f} s")
    return CausalityVerdict(
        budget, False,
        f"over budget: {t_anc_s:.6f} s >= {budget.budget_s:.6f} s; requires future-frame prediction",
    )
