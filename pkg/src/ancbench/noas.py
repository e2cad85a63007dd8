"""Near-optimal anti-signal (NOAS) search and the NMSE training losses.

The anti-signal target is found per example by gradient descent on
``NMSE[P*x, S*f_LS(y)]`` with an exact analytic gradient.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .audio_io import read_wav, write_wav
from .errors import ConfigurationError, DivergenceError, UndefinedReferenceError
from .signal import DEFAULT_METRIC, MetricOptions, Signal, conv_truncated, corr_truncated, nmse_arrays
from .system import AcousticScene, simulate

_DB_PER_LN = 10.0 / math.log(10.0)


@dataclass(frozen=True)
class NoasConfig:
    learning_rate: float = 0.05
    max_iters: int = 5000
    rel_tol: float = 1e-6
    plateau_window: int = 50
    init: Literal["zeros", "random_gaussian"] = "zeros"
    init_sigma: float = 0.01
    seed: int = 0
    max_halvings: int = 20
    # after an accepted step the trial step grows by this factor
    growth: float = 1.5

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if self.init not in ("zeros", "random_gaussian"):
            raise ConfigurationError(f"unknown init {self.init!r}")
        if self.growth < 1.0:
            raise ConfigurationError("growth must be >= 1")


@dataclass(eq=False)
class NoasResult:
    y_star: Signal
    objective_trace_db: list[float]
    converged: bool
    iters_used: int
    stop_reason: str = ""

    @property
    def final_objective_db(self) -> float:
        return min(self.objective_trace_db)


# ---------------------------------------------------------------------------
# losses


def anc_loss(scene: AcousticScene, x: Signal, y: Signal, opts: MetricOptions = DEFAULT_METRIC) -> float:
    """``NMSE[P*x, S*f_LS(y)]`` in dB."""
    return simulate(scene, x, y, opts).nmse_db


def noas_loss(scene: AcousticScene, y_star: Signal, y: Signal, opts: MetricOptions = DEFAULT_METRIC) -> float:
    """``NMSE[S*f_LS(y*), S*f_LS(y)]`` in dB."""
    if len(y_star) != len(y):
        raise ConfigurationError("y_star and y must have equal length")
    target = scene.anti_signal(y_star.samples)
    if not np.any(target):
        raise UndefinedReferenceError("S*f_LS(y_star) is identically zero")
    return nmse_arrays(target, scene.anti_signal(y.samples), opts)


def nmse_gradient(scene: AcousticScene, target: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Value (dB, unclamped) and gradient of ``NMSE[target, S*f_LS(y)]`` w.r.t. ``y``.

    With ``r = target - S*f(y)`` and ``R = |r|^2 / |target|^2`` the objective is
    ``10 log10 R`` and ``dR/dy = -2/|target|^2 * f'(y) * corr(r, S)``.
    Returns ``(-inf, 0)`` at an exact zero residual.
    """
    den = float(np.dot(target, target))
    if den == 0.0:
        raise UndefinedReferenceError("target signal is identically zero")
    S = scene.secondary_path.taps
    r = target - conv_truncated(scene.loudspeaker.apply_array(y), S)
    num = float(np.dot(r, r))
    if num == 0.0:
        return -math.inf, np.zeros_like(y)
    back = corr_truncated(r, S) * scene.loudspeaker.derivative_array(y)
    # d(10 log10 R) = 10/ln10 * dR / R, and dR/R = -2 back / num
    return _DB_PER_LN * math.log(num / den), (-2.0 * _DB_PER_LN / num) * back


def objective_gradient(scene: AcousticScene, x: Signal, y_tilde: Signal) -> np.ndarray:
    """Exact gradient of ``NMSE[P*x, S*f_LS(y~)]`` (dB) with respect to every sample of ``y~``."""
    if len(x) != len(y_tilde):
        raise ConfigurationError("x and y~ must have equal length")
    return nmse_gradient(scene, scene.primary(x.samples), y_tilde.samples)[1]


# ---------------------------------------------------------------------------
# optimizer


def _objective(scene: AcousticScene, d: np.ndarray, den: float, y: np.ndarray) -> float:
    r = d - scene.anti_signal(y)
    num = float(np.dot(r, r))
    if num == 0.0:
        return -math.inf
    return _DB_PER_LN * math.log(num / den)


def optimize(scene: AcousticScene, x: Signal, cfg: NoasConfig = NoasConfig(),
             init: np.ndarray | None = None) -> NoasResult:
    """Gradient descent with backtracking for ``argmin_y NMSE[P*x, S*f_LS(y)]``.

    A step that increases the objective is halved and retried, at most
    ``cfg.max_halvings`` times in a row, after which the search stops. Accepted
    steps grow the trial step by ``cfg.growth``. The best iterate is returned,
    so the accepted-objective trace never increases.
    """
    d = scene.primary(x.samples)
    den = float(np.dot(d, d))
    if den == 0.0:
        raise UndefinedReferenceError("primary signal P*x is identically zero")
    if init is not None:
        y = np.array(init, dtype=np.float64)
        if y.shape != x.samples.shape:
            raise ConfigurationError("init must match the length of x")
    elif cfg.init == "random_gaussian":
        y = cfg.init_sigma * np.random.default_rng(cfg.seed).standard_normal(len(x))
    else:
        y = np.zeros(len(x))

    J, g = nmse_gradient(scene, d, y)
    if not (math.isfinite(J) or J == -math.inf):
        raise DivergenceError(f"initial objective is not finite ({J})")
    trace = [J]
    lr = cfg.learning_rate
    converged, reason = False, "max_iters"
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        if J == -math.inf:
            converged, reason = True, "exact"
            break
        accepted = False
        for _ in range(cfg.max_halvings + 1):
            y_new = y - lr * g
            J_new = _objective(scene, d, den, y_new)
            if math.isnan(J_new) or J_new == math.inf:
                raise DivergenceError(f"objective became non-finite at iteration {iters}")
            if J_new <= J:
                accepted = True
                break
            lr *= 0.5
        if not accepted:
            converged, reason = True, "no_descent"
            break
        y = y_new
        J, g = nmse_gradient(scene, d, y)
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"gradient became non-finite at iteration {iters}")
        trace.append(J)
        lr *= cfg.growth
        w = cfg.plateau_window
        if len(trace) > w and math.isfinite(J):
            prev = trace[-1 - w]
            if (prev - J) <= cfg.rel_tol * max(abs(prev), 1e-12):
                converged, reason = True, "plateau"
                break
    floor = DEFAULT_METRIC.db_floor
    trace_db = [max(v, floor) for v in trace]
    return NoasResult(Signal(y, x.sample_rate_hz), trace_db, converged, iters, reason)


def table1_distances(scene: AcousticScene, x: Signal, y: Signal, y_star: Signal,
                     opts: MetricOptions = DEFAULT_METRIC) -> tuple[float, float, float, float]:
    """``(NMSE[y*, y], NMSE[P*x, S*f(y)], NMSE[S*f(y*), S*f(y)], NMSE[P*x, S*f(y*)])``."""
    d = scene.primary(x.samples)
    a = scene.anti_signal(y.samples)
    a_star = scene.anti_signal(y_star.samples)
    return (
        nmse_arrays(y_star.samples, y.samples, opts),
        nmse_arrays(d, a, opts),
        nmse_arrays(a_star, a, opts),
        nmse_arrays(d, a_star, opts),
    )


# ---------------------------------------------------------------------------
# persistence


@dataclass
class NoasSidecar:
    scene_hash: str
    config: dict = field(default_factory=dict)
    final_objective_db: float = 0.0
    iters_used: int = 0
    converged: bool = False
    sample_rate_hz: int = 16000


def save_target(path, scene: AcousticScene, result: NoasResult, cfg: NoasConfig) -> tuple[Path, Path]:
    """Write ``y*`` as float32 WAV plus a JSON sidecar next to it."""
    wav = write_wav(Path(path).with_suffix(".wav"), result.y_star, fmt="float32")
    side = NoasSidecar(scene.digest(), asdict(cfg), result.final_objective_db, result.iters_used,
                       result.converged, result.y_star.sample_rate_hz)
    meta = wav.with_suffix(".json")
    meta.write_text(json.dumps(asdict(side), indent=1))
    return wav, meta


def load_target(path, scene: AcousticScene | None = None) -> tuple[Signal, NoasSidecar]:
    """Read a persisted target; with ``scene`` given, refuse targets made for another scene."""
    wav = Path(path).with_suffix(".wav")
    side = NoasSidecar(**json.loads(wav.with_suffix(".json").read_text()))
    if scene is not None and side.scene_hash != scene.digest():
        raise ConfigurationError(f"{wav}: NOAS target was computed for scene {side.scene_hash}, not {scene.digest()}")
    return read_wav(wav), side
