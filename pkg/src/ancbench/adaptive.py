"""Sample-by-sample FxLMS and THF-FxLMS controllers."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import ConfigurationError
from .signal import DEFAULT_METRIC, ImpulseResponse, MetricOptions, Signal, conv_truncated, nmse_arrays
from .system import AcousticScene

# Step sizes reported for the classical baselines, keyed by noise type.
DEFAULT_STEP_SIZES = {"engine": 0.05, "factory": 0.4, "babble": 0.3}
DEFAULT_GRAD_CLIP = 1e-4

_SQRT_HALF_PI = math.sqrt(math.pi / 2.0)


@dataclass(frozen=True, eq=False)
class FxLmsConfig:
    step_size: float
    secondary_estimate: ImpulseResponse
    filter_len: int = 512
    grad_clip: float = DEFAULT_GRAD_CLIP
    clip_mode: Literal["component", "norm"] = "component"
    thf_eta_sq: float | None = None
    snapshot_every: int = 0
    divergence_norm: float = 1e6

    def __post_init__(self):
        if self.filter_len < 1:
            raise ConfigurationError("filter_len must be >= 1")
        if self.step_size < 0:
            raise ConfigurationError("step_size must be non-negative")
        if not self.grad_clip > 0:
            raise ConfigurationError("grad_clip must be positive")
        if self.clip_mode not in ("component", "norm"):
            raise ConfigurationError(f"unknown clip_mode {self.clip_mode!r}")
        if self.thf_eta_sq is not None and not self.thf_eta_sq > 0:
            raise ConfigurationError("thf_eta_sq must be positive")

    @property
    def thf_gain(self) -> float:
        """Saturation level ``g = eta*sqrt(pi/2)`` of the internal tanh model."""
        if self.thf_eta_sq is None:
            raise ConfigurationError("thf_eta_sq is not set")
        return math.sqrt(self.thf_eta_sq) * _SQRT_HALF_PI


@dataclass(eq=False)
class ControllerTrace:
    y: Signal
    e: Signal
    d: Signal
    per_sample_error_energy: np.ndarray
    final_weights: np.ndarray
    weight_snapshots: list[np.ndarray] = field(default_factory=list)
    status: str = "ok"
    samples_processed: int = 0

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"

    def nmse_db(self, opts: MetricOptions = DEFAULT_METRIC) -> float:
        return nmse_arrays(self.d.samples, self.d.samples - self.e.samples, opts)

    def final_nmse_db(self, seconds: float = 1.0, opts: MetricOptions = DEFAULT_METRIC) -> float:
        n = int(round(seconds * self.d.sample_rate_hz))
        d = self.d.samples[-n:]
        return nmse_arrays(d, d - self.e.samples[-n:], opts)

    def running_nmse_db(self, opts: MetricOptions = DEFAULT_METRIC) -> np.ndarray:
        num = np.cumsum(self.e.samples**2)
        den = np.cumsum(self.d.samples**2)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = 10.0 * np.log10(num / den)
        out[~np.isfinite(out)] = opts.db_floor
        return np.maximum(out, opts.db_floor)

    def export_csv(self, path) -> Path:
        """Rows of ``n, e(n)^2, running NMSE``."""
        path = Path(path)
        running = self.running_nmse_db()
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "e_sq", "running_nmse_db"])
            for n, (esq, r) in enumerate(zip(self.per_sample_error_energy, running)):
                w.writerow([n, f"{esq:.6g}", f"{r:.6g}"])
        return path


def mismatched_estimate(s: ImpulseResponse, relative_std: float, seed: int) -> ImpulseResponse:
    """Secondary-path estimate with Gaussian tap noise scaled to the path's RMS."""
    rng = np.random.default_rng(seed)
    rms = float(np.sqrt(np.mean(s.taps**2)))
    return ImpulseResponse(s.taps + relative_std * rms * rng.standard_normal(len(s)), s.sample_rate_hz)


def _erf_scalar(x: float) -> float:
    # Scalar twin of loudspeaker.erf for the per-sample loop.
    ax = min(abs(x), 6.0)
    if ax >= 6.0:
        return math.copysign(1.0, x)
    x2 = ax * ax
    term = total = ax
    n = 0
    while True:
        n += 1
        term *= 2.0 * x2 / (2 * n + 1)
        total += term
        if 2 * n + 1 > 2.0 * x2 and term <= 1e-17 * total:
            break
    return math.copysign(min(1.0, 1.1283791670955126 * math.exp(-x2) * total), x)


def _loudspeaker_scalar(scene: AcousticScene):
    ls = scene.loudspeaker
    if ls.is_linear:
        return lambda v: v
    eta = ls.eta
    scale = eta * _SQRT_HALF_PI
    inv = 1.0 / (math.sqrt(2.0) * eta)
    return lambda v: scale * _erf_scalar(v * inv)


def _run(x: Signal, scene: AcousticScene, cfg: FxLmsConfig, thf: bool) -> ControllerTrace:
    if x.sample_rate_hz != scene.sample_rate_hz or cfg.secondary_estimate.sample_rate_hz != scene.sample_rate_hz:
        raise ConfigurationError("signal, scene and secondary estimate must share a sample rate")
    xs = x.samples
    n = xs.shape[0]
    L = cfg.filter_len
    s_hat = cfg.secondary_estimate.taps
    ls_hat = s_hat.shape[0]
    S = scene.secondary_path.taps
    Ls = S.shape[0]
    S_rev = S[::-1].copy()

    d = scene.primary(xs)
    # Padded histories; weights are stored oldest-first so that
    # y(i) = w_rev . xp[i : i + L].
    pad = L - 1 + ls_hat - 1
    xp = np.concatenate([np.zeros(pad), xs])
    xfp = np.concatenate([np.zeros(L - 1), conv_truncated(xs, s_hat)])
    up = np.zeros(n + Ls - 1)
    gp = np.zeros(n + ls_hat - 1)
    f_ls = _loudspeaker_scalar(scene)
    g_thf = cfg.thf_gain if thf else None

    w = np.zeros(L)
    y = np.zeros(n)
    e = np.zeros(n)
    mu, clip = cfg.step_size, cfg.grad_clip
    snapshots = []
    status, processed = "ok", n
    for i in range(n):
        xb = xp[i + ls_hat - 1 : i + ls_hat - 1 + L]
        yi = float(np.dot(w, xb))
        y[i] = yi
        up[Ls - 1 + i] = f_ls(yi)
        ai = float(np.dot(S_rev, up[i : i + Ls]))
        ei = d[i] - ai
        e[i] = ei
        if thf:
            t = math.tanh(yi / g_thf)
            gp[ls_hat - 1 + i] = 1.0 - t * t
            kernel = s_hat * gp[i : i + ls_hat][::-1]
            z = np.convolve(xp[i : i + ls_hat - 1 + L], kernel, mode="valid")
        else:
            z = xfp[i : i + L]
        upd = (mu * ei) * z
        if cfg.clip_mode == "component":
            np.clip(upd, -clip, clip, out=upd)
        else:
            norm = float(np.linalg.norm(upd))
            if norm > clip:
                upd *= clip / norm
        w += upd
        if cfg.snapshot_every and (i + 1) % cfg.snapshot_every == 0:
            snapshots.append(w[::-1].copy())
        if not math.isfinite(ei) or float(np.dot(w, w)) > cfg.divergence_norm**2:
            status, processed = "diverged", i + 1
            y[i + 1 :] = 0.0
            e[i + 1 :] = 0.0
            break

    e_sq = e**2
    rate = x.sample_rate_hz
    return ControllerTrace(
        y=Signal(np.nan_to_num(y), rate),
        e=Signal(np.nan_to_num(e), rate),
        d=Signal(d, rate),
        per_sample_error_energy=np.nan_to_num(e_sq),
        final_weights=w[::-1].copy(),
        weight_snapshots=snapshots,
        status=status,
        samples_processed=processed,
    )


def run_fxlms(x: Signal, scene: AcousticScene, cfg: FxLmsConfig) -> ControllerTrace:
    """Filtered-x LMS.

    ``w <- w + mu * e(n) * x'_buf(n)`` with ``x' = S_hat * x`` and every update
    component clamped to ``+-grad_clip`` (or the update vector norm-clipped).
    """
    return _run(x, scene, cfg, thf=False)


def run_thf_fxlms(x: Signal, scene: AcousticScene, cfg: FxLmsConfig) -> ControllerTrace:
    """FxLMS whose internal loudspeaker model is ``g*tanh(y/g)``, ``g = eta*sqrt(pi/2)``.

    The filtered-reference vector is the gradient of the modelled anti-signal,
    ``sum_k S_hat[k] * (1 - tanh^2(y(n-k)/g)) * x_buf(n-k)``.
    """
    if cfg.thf_eta_sq is None:
        raise ConfigurationError("THF-FxLMS requires thf_eta_sq")
    return _run(x, scene, cfg, thf=True)
