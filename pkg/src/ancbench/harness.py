"""Dataset ingestion, experiment orchestration and result persistence."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .adaptive import FxLmsConfig, run_fxlms, run_thf_fxlms
from .audio_io import read_wav
from .errors import ConfigurationError, DatasetError
from .loudspeaker import LoudspeakerModel, parse_eta_sq
from .noas import NoasConfig, optimize
from .room import REFERENCE_GEOMETRY, TEST_T60, TRAIN_T60_SET, SceneGeometry, build_scene_paths
from .signal import Signal, nmse_arrays, nmse_over_time, resample
from .system import AcousticScene, VadSpec, causality_margin, masked_nmse

log = logging.getLogger(__name__)

METHODS = ("fxlms", "thf_fxlms", "noas_oracle", "masknet_toy", "none")
METRICS = ("nmse", "vad_nmse", "nmse_over_time")
CSV_HEADER = ("sample_id", "method", "eta_sq", "t60", "nmse_db", "vad_nmse_db", "runtime_s", "seed")
TIMESERIES_HEADER = ("time_s", "nmse_db", "method")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_dir: str = "."
    method: str = "none"
    eta_sq: float | str = "inf"
    seed: int = 0
    segment_seconds: float = 3.0
    sample_rate_hz: int = 16000
    t60_policy: Literal["fixed", "sampled_set"] = "fixed"
    t60_s: float = TEST_T60
    metric: str = "nmse"
    output_path: str = "results.csv"
    # method settings
    step_size: float = 0.05
    filter_len: int = 512
    grad_clip: float = 1e-4
    noas_learning_rate: float = 0.05
    noas_max_iters: int = 5000
    checkpoint: str | None = None
    # orchestration
    workers: int = 1
    max_segments: int | None = None
    aggregate: Literal["segment", "file"] = "segment"
    # runtime_s is wall-clock and therefore not reproducible; by default it
    # goes to a sidecar file so the main CSV is byte-stable
    inline_runtime: bool = False

    def __post_init__(self):
        if not self.segment_seconds > 0:
            raise ConfigurationError("segment_seconds must be positive")
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.metric not in METRICS:
            raise ConfigurationError(f"unknown metric {self.metric!r}; choose from {METRICS}")
        if self.t60_policy not in ("fixed", "sampled_set"):
            raise ConfigurationError(f"unknown t60_policy {self.t60_policy!r}")
        if self.aggregate not in ("segment", "file"):
            raise ConfigurationError(f"unknown aggregate {self.aggregate!r}")
        eta = parse_eta_sq(self.eta_sq)
        if self.method == "thf_fxlms" and eta is None:
            raise ConfigurationError("thf_fxlms needs a finite eta_sq (its internal model saturates)")
        if self.method == "masknet_toy" and not self.checkpoint:
            raise ConfigurationError("masknet_toy requires a checkpoint")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")

    @property
    def loudspeaker(self) -> LoudspeakerModel:
        return LoudspeakerModel.from_config(self.eta_sq)

    @property
    def segment_samples(self) -> int:
        return int(round(self.segment_seconds * self.sample_rate_hz))

    def eta_label(self) -> str:
        v = self.loudspeaker.config_value()
        return v if isinstance(v, str) else _fmt(v)

    @classmethod
    def from_json(cls, path, **overrides) -> "ExperimentConfig":
        data = json.loads(Path(path).read_text())
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)


@dataclass(frozen=True, eq=False)
class Segment:
    sample_id: str
    source: str
    signal: Signal

    def digest(self) -> str:
        return hashlib.sha256(self.signal.samples.tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class ResultRow:
    sample_id: str
    method: str
    eta_sq: str
    t60: float
    nmse_db: float
    vad_nmse_db: float | None
    runtime_s: float
    seed: int
    status: str = "ok"
    source: str = ""


@dataclass
class ExperimentResult:
    rows: list[ResultRow]
    summary: dict
    timeseries: list[tuple[float, float, str]] = field(default_factory=list)

    @property
    def all_diverged(self) -> bool:
        return bool(self.rows) and all(r.status == "diverged" for r in self.rows)


def _fmt(v: float) -> str:
    # repr-free, locale-independent, 6 significant digits
    return format(float(v), ".6g")


# ---------------------------------------------------------------------------
# ingestion


def ingest(dataset_dir, config: ExperimentConfig) -> list[Segment]:
    """Resample every WAV under ``dataset_dir`` and cut non-overlapping segments.

    Files are visited in lexicographic order of their relative path; remainders
    shorter than a segment are dropped; unreadable files are skipped with a
    warning.
    """
    root = Path(dataset_dir)
    if not root.is_dir():
        raise DatasetError(f"dataset directory {root} does not exist")
    files = sorted((p for p in root.rglob("*") if p.is_file() and p.suffix.lower() == ".wav"),
                   key=lambda p: p.relative_to(root).as_posix())
    seg_len = config.segment_samples
    out: list[Segment] = []
    for path in files:
        rel = path.relative_to(root).as_posix()
        try:
            sig = read_wav(path)
        except Exception as exc:  # scipy raises a variety of types for malformed files
            log.warning("skipping unreadable file %s: %s", rel, exc)
            continue
        sig = resample(sig, config.sample_rate_hz)
        for k in range(len(sig) // seg_len):
            chunk = sig.samples[k * seg_len : (k + 1) * seg_len]
            out.append(Segment(f"{rel}#{k:04d}", rel, Signal(chunk, config.sample_rate_hz)))
            if config.max_segments is not None and len(out) >= config.max_segments:
                return out
    if not out:
        raise DatasetError(f"no {config.segment_seconds} s segments could be read from {root}")
    return out


# ---------------------------------------------------------------------------
# orchestration


_SCENES: dict[tuple, AcousticScene] = {}


def scene_for(config: ExperimentConfig, t60: float, geometry: SceneGeometry = REFERENCE_GEOMETRY) -> AcousticScene:
    key = (t60, config.sample_rate_hz, config.loudspeaker.config_value(), geometry)
    if key not in _SCENES:
        P, S = build_scene_paths(geometry, t60, sample_rate_hz=config.sample_rate_hz, strict=False)
        _SCENES[key] = AcousticScene(P, S, config.loudspeaker)
    return _SCENES[key]


def segment_t60(config: ExperimentConfig, index: int) -> float:
    if config.t60_policy == "fixed":
        return config.t60_s
    rng = np.random.default_rng([config.seed, index])
    return float(TRAIN_T60_SET[rng.integers(len(TRAIN_T60_SET))])


def _produce(config: ExperimentConfig, scene: AcousticScene, x: Signal, model=None) -> tuple[np.ndarray, str]:
    """Cancelling signal for ``x`` and a status string."""
    m = config.method
    if m == "none":
        return np.zeros(len(x)), "ok"
    if m in ("fxlms", "thf_fxlms"):
        fcfg = FxLmsConfig(step_size=config.step_size, secondary_estimate=scene.secondary_path,
                           filter_len=config.filter_len, grad_clip=config.grad_clip,
                           thf_eta_sq=parse_eta_sq(config.eta_sq) if m == "thf_fxlms" else None)
        trace = (run_thf_fxlms if m == "thf_fxlms" else run_fxlms)(x, scene, fcfg)
        return trace.y.samples, trace.status
    if m == "noas_oracle":
        ncfg = NoasConfig(learning_rate=config.noas_learning_rate, max_iters=config.noas_max_iters, seed=config.seed)
        res = optimize(scene, x, ncfg)
        return res.y_star.samples, "ok"
    from .masknet.model import forward

    params, mcfg = model
    if mcfg.signal_len_m != len(x):
        raise ConfigurationError(f"checkpoint expects {mcfg.signal_len_m} samples, segments have {len(x)}")
    return forward(params, mcfg, x).samples, "ok"


@lru_cache(maxsize=4)
def _load_model(path: str):
    from .masknet.checkpoint import load_checkpoint

    return load_checkpoint(path)


def _evaluate(args) -> tuple[ResultRow, list[tuple[float, float, str]]]:
    config, index, seg = args
    t60 = segment_t60(config, index)
    scene = scene_for(config, t60)
    model = _load_model(config.checkpoint) if config.method == "masknet_toy" else None
    x = seg.signal
    t0 = time.perf_counter()
    y, status = _produce(config, scene, x, model)
    runtime = time.perf_counter() - t0
    d = scene.primary(x.samples)
    a = scene.anti_signal(y)
    if not np.any(d):
        raise DatasetError(f"{seg.sample_id}: segment is silent after the primary path")
    nmse_db = nmse_arrays(d, a)
    vad_db = None
    if config.metric == "vad_nmse":
        vad_db = masked_nmse(Signal(d, config.sample_rate_hz), Signal(a, config.sample_rate_hz), VadSpec())
    series = []
    if config.metric == "nmse_over_time":
        for w in nmse_over_time(Signal(d, config.sample_rate_hz), Signal(a, config.sample_rate_hz)):
            series.append((w.time_s, w.nmse_db, config.method))
    row = ResultRow(seg.sample_id, config.method, config.eta_label(), t60, nmse_db, vad_db, runtime,
                    config.seed, status, seg.source)
    return row, series


def summarize(rows: Sequence[ResultRow], aggregate: str = "segment") -> dict:
    """Mean NMSE per (method, eta_sq), excluding diverged rows."""
    groups: dict[tuple[str, str], list[ResultRow]] = {}
    for r in rows:
        groups.setdefault((r.method, r.eta_sq), []).append(r)
    out = {}
    for (method, eta), rs in sorted(groups.items()):
        ok = [r for r in rs if r.status != "diverged"]
        if aggregate == "file":
            per_file: dict[str, list[float]] = {}
            for r in ok:
                per_file.setdefault(r.source, []).append(r.nmse_db)
            vals = [float(np.mean(v)) for _, v in sorted(per_file.items())]
        else:
            vals = [r.nmse_db for r in ok]
        out[f"{method}|{eta}"] = {
            "method": method,
            "eta_sq": eta,
            "mean_nmse_db": float(np.mean(vals)) if vals else None,
            "count": len(ok),
            "diverged": len(rs) - len(ok),
            "diverged_ids": [r.sample_id for r in rs if r.status == "diverged"],
            "mean_runtime_s": float(np.mean([r.runtime_s for r in rs])),
        }
    return out


def run_experiment(config: ExperimentConfig, segments: Sequence[Segment] | None = None) -> ExperimentResult:
    if segments is None:
        segments = ingest(config.dataset_dir, config)
    jobs = [(config, i, s) for i, s in enumerate(segments)]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_evaluate, jobs))
    else:
        results = [_evaluate(j) for j in jobs]
    results.sort(key=lambda r: r[0].sample_id)
    rows = [r for r, _ in results]
    series = [p for _, s in results for p in s]
    return ExperimentResult(rows, summarize(rows, config.aggregate), series)


# ---------------------------------------------------------------------------
# persistence


def emit_csv(rows: Sequence[ResultRow], path, inline_runtime: bool = True) -> Path:
    """Write the fixed-header result table.

    With ``inline_runtime=False`` the ``runtime_s`` column is left empty and the
    measured values go to ``<path>.runtime.csv`` instead.
    """
    if not rows:
        raise ConfigurationError("no result rows to write")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([
                r.sample_id, r.method, r.eta_sq, _fmt(r.t60), _fmt(r.nmse_db),
                "" if r.vad_nmse_db is None else _fmt(r.vad_nmse_db),
                _fmt(r.runtime_s) if inline_runtime else "", r.seed,
            ])
    if not inline_runtime:
        side = path.with_name(path.name + ".runtime.csv")
        with side.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample_id", "method", "runtime_s"])
            for r in rows:
                w.writerow([r.sample_id, r.method, _fmt(r.runtime_s)])
    return path


def emit_timeseries(series: Sequence[tuple[float, float, str]], path) -> Path:
    if not series:
        raise ConfigurationError("no time-series points to write")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMESERIES_HEADER)
        for t, v, m in series:
            w.writerow([_fmt(t), _fmt(v), m])
    return path


def emit_summary(summary: dict, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(summary, indent=1, sort_keys=True))
    return path


# ---------------------------------------------------------------------------
# causality


# Samples of new output a method produces per invocation: sample-by-sample
# controllers answer every sample, offline methods process the whole segment.
_BLOCK = {"fxlms": 1, "thf_fxlms": 1, "none": 0}


@dataclass(frozen=True)
class CausalityEntry:
    method: str
    latency_s: float
    margin_s: float
    passed: bool


@dataclass(frozen=True)
class CausalityReport:
    budget_s: float
    t_p_s: float
    t_s_s: float
    entries: tuple[CausalityEntry, ...]

    def lines(self) -> list[str]:
        out = [f"causality budget: {self.budget_s:.6f} s (T_p {self.t_p_s:.6f} s - T_s {self.t_s_s:.6f} s)",
               "method,latency_s,margin_s,pass"]
        for e in self.entries:
            out.append(f"{e.method},{_fmt(e.latency_s)},{_fmt(e.margin_s)},{'pass' if e.passed else 'fail'}")
        return out


def method_latency(method: str, runtime_s: float, segment_samples: int) -> float:
    """Per-invocation latency implied by a segment runtime."""
    block = _BLOCK.get(method, segment_samples)
    if block == 0:
        return 0.0
    return runtime_s * block / segment_samples


def causality_report(runtimes: dict[str, float] | Sequence[ResultRow] = (), segment_samples: int = 48000,
                     geometry: SceneGeometry = REFERENCE_GEOMETRY, injected_latency_s: float | dict[str, float] = 0.0,
                     sound_speed: float = 343.0) -> CausalityReport:
    """Compare each method's latency (plus any injected delay) with ``T_p - T_s``.

    ``runtimes`` maps method to mean segment runtime, or is a list of result rows.
    """
    if not isinstance(runtimes, dict):
        acc: dict[str, list[float]] = {}
        for r in runtimes:
            acc.setdefault(r.method, []).append(r.runtime_s)
        runtimes = {m: float(np.mean(v)) for m, v in acc.items()}
    base = causality_margin(geometry, sound_speed)
    entries = []
    for method in sorted(runtimes):
        inj = injected_latency_s.get(method, 0.0) if isinstance(injected_latency_s, dict) else injected_latency_s
        lat = method_latency(method, runtimes[method], segment_samples) + inj
        verdict = causality_margin(geometry, sound_speed, lat)
        entries.append(CausalityEntry(method, lat, verdict.budget.margin_s, verdict.passed))
    b = base.budget
    return CausalityReport(b.budget_s, b.t_p_s, b.t_s_s, tuple(entries))
