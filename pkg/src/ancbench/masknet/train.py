"""Two-phase training: phase ``anc`` minimizes the ANC loss, phase ``noas`` the NOAS loss."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np

from ..errors import ConfigurationError, DivergenceError
from ..loudspeaker import LoudspeakerModel
from ..noas import nmse_gradient
from ..room import REFERENCE_GEOMETRY, TRAIN_T60_SET, SceneGeometry, build_scene_paths
from ..signal import Signal
from ..system import AcousticScene
from .config import MasknetConfig, TrainerConfig
from .model import ModelParams, backward_from_cache, check_params, forward

SceneSampler = Callable[[np.random.Generator], AcousticScene]


def fixed_scene(scene: AcousticScene) -> SceneSampler:
    return lambda rng: scene


class RandomT60Scenes:
    """Draws a reverberation time from a discrete set and returns the matching scene.

    Paths are simulated once per distinct t60 and cached.
    """

    def __init__(self, loudspeaker: LoudspeakerModel, t60_set: Sequence[float] = TRAIN_T60_SET,
                 geometry: SceneGeometry = REFERENCE_GEOMETRY, sample_rate_hz: int = 16000):
        self.loudspeaker = loudspeaker
        self.t60_set = tuple(t60_set)
        self.geometry = geometry
        self.sample_rate_hz = sample_rate_hz
        self._cache: dict[float, AcousticScene] = {}

    def scene_for(self, t60: float) -> AcousticScene:
        if t60 not in self._cache:
            P, S = build_scene_paths(self.geometry, t60, sample_rate_hz=self.sample_rate_hz)
            self._cache[t60] = AcousticScene(P, S, self.loudspeaker)
        return self._cache[t60]

    def __call__(self, rng: np.random.Generator) -> AcousticScene:
        return self.scene_for(self.t60_set[int(rng.integers(len(self.t60_set)))])


@dataclass(eq=False)
class TrainResult:
    params: ModelParams
    loss_trace: list[float]
    best_loss: float
    accepted_steps: int
    rejected_steps: int = 0
    lr_trace: list[float] = field(default_factory=list)

    def export_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "loss_db"])
            for i, v in enumerate(self.loss_trace):
                w.writerow([i, f"{v:.6g}"])
        return path


def example_loss_and_grad(params: ModelParams, cfg: MasknetConfig, x: Signal, scene: AcousticScene,
                          phase: str, target: Signal | None = None, need_grad: bool = True):
    """Loss in dB for one example and, optionally, its parameter gradient.

    Phase ``anc`` compares against ``P*x``; phase ``noas`` against ``S*f_LS(y*)``.
    """
    if phase == "anc":
        ref = scene.primary(x.samples)
    else:
        ref = scene.anti_signal(target.samples)
    if need_grad:
        y, cache = forward(params, cfg, x, keep_cache=True)
    else:
        y = forward(params, cfg, x)
    loss, gy = nmse_gradient(scene, ref, y.samples)
    if not need_grad:
        return loss, None
    if loss == -math.inf:
        return loss, params.zeros_like()
    return loss, backward_from_cache(params, cfg, cache, gy).params


def _batch_loss_and_grad(params, cfg, batch, phase, need_grad=True):
    total = 0.0
    grad = None
    for x, scene, target in batch:
        loss, g = example_loss_and_grad(params, cfg, x, scene, phase, target, need_grad)
        total += loss
        if need_grad:
            grad = g.arrays if grad is None else {k: grad[k] + g[k] for k in grad}
    n = len(batch)
    if need_grad:
        grad = ModelParams({k: v / n for k, v in grad.items()})
    return total / n, grad


def clip_global_norm(grad: ModelParams, threshold: float) -> tuple[ModelParams, float]:
    norm = float(np.sqrt(sum(np.sum(g * g) for g in grad.arrays.values())))
    if not math.isfinite(norm):
        raise DivergenceError("non-finite gradient norm")
    if norm <= threshold:
        return grad, norm
    s = threshold / norm
    return ModelParams({k: v * s for k, v in grad.items()}), norm


class Adam:
    def __init__(self, params: ModelParams, tcfg: TrainerConfig):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0
        self.cfg = tcfg

    def direction(self, grad: ModelParams):
        """Bias-corrected Adam direction and the moment state it would commit."""
        c = self.cfg
        t = self.t + 1
        m = {k: c.beta1 * self.m[k] + (1 - c.beta1) * grad[k] for k in self.m}
        v = {k: c.beta2 * self.v[k] + (1 - c.beta2) * grad[k] ** 2 for k in self.v}
        b1, b2 = 1 - c.beta1**t, 1 - c.beta2**t
        step = {k: (m[k] / b1) / (np.sqrt(v[k] / b2) + c.adam_eps) for k in m}
        return step, (m, v, t)

    def commit(self, state) -> None:
        self.m, self.v, self.t = state


def _apply(params: ModelParams, step: dict, lr: float) -> ModelParams:
    return ModelParams({k: v - lr * step[k] for k, v in params.items()})


def train(params: ModelParams, cfg: MasknetConfig, dataset: Sequence[Signal], scene_sampler: SceneSampler | AcousticScene,
          phase: Literal["anc", "noas"], tcfg: TrainerConfig = TrainerConfig(),
          targets: Sequence[Signal] | None = None) -> TrainResult:
    """Adam with global-norm clipping, scheduled learning-rate decay and best-loss selection.

    One epoch is one pass over ``dataset`` in batches of ``tcfg.batch_size``.
    With ``tcfg.monotone`` a step is accepted only if it strictly lowers the
    batch loss; otherwise the learning rate is halved and the step retried.
    ``loss_trace`` holds the batch loss before every accepted step (and the
    final loss), so in monotone mode with a single fixed batch it is strictly
    decreasing.
    """
    if phase not in ("anc", "noas"):
        raise ConfigurationError(f"unknown training phase {phase!r}")
    if not dataset:
        raise ConfigurationError("training dataset is empty")
    if phase == "noas":
        if targets is None or len(targets) != len(dataset) or any(t is None for t in targets):
            raise ConfigurationError("phase 'noas' requires a NOAS target for every example")
    check_params(params, cfg)
    sampler = fixed_scene(scene_sampler) if isinstance(scene_sampler, AcousticScene) else scene_sampler
    rng = np.random.default_rng(tcfg.seed)
    n = len(dataset)
    bs = min(tcfg.batch_size, n)
    opt = Adam(params, tcfg)
    current = params.copy()
    best, best_loss = current, math.inf
    trace: list[float] = []
    lrs: list[float] = []
    accepted = rejected = 0
    lr_scale = 1.0
    step = 0
    epoch = 0
    last_batch = None
    stale = False  # current params changed since their loss was last recorded
    while step < tcfg.steps:
        order = rng.permutation(n)
        base_lr = tcfg.lr_at_epoch(epoch)
        for start in range(0, n - bs + 1, bs):
            if step >= tcfg.steps:
                break
            idx = order[start : start + bs]
            shared = sampler(rng) if tcfg.scene_policy == "per_batch" else None
            batch = [(dataset[i], shared if shared is not None else sampler(rng),
                      targets[i] if targets is not None else None) for i in idx]
            last_batch = batch
            loss, grad = _batch_loss_and_grad(current, cfg, batch, phase)
            if not math.isfinite(loss) and loss != -math.inf:
                raise DivergenceError(f"non-finite training loss at step {step}")
            if loss < best_loss:
                best, best_loss = current, loss
            if tcfg.stop_below_db is not None and loss <= tcfg.stop_below_db:
                trace.append(loss)
                stale = False
                step = tcfg.steps
                break
            grad, _ = clip_global_norm(grad, tcfg.grad_clip)
            direction, state = opt.direction(grad)
            lr = base_lr * lr_scale
            if tcfg.monotone:
                ok = False
                for _ in range(tcfg.max_halvings + 1):
                    cand = _apply(current, direction, lr)
                    cand_loss, _ = _batch_loss_and_grad(cand, cfg, batch, phase, need_grad=False)
                    if cand_loss < loss:
                        ok = True
                        break
                    rejected += 1
                    lr *= 0.5
                    lr_scale *= 0.5
                if not ok:
                    trace.append(loss)
                    stale = False
                    step = tcfg.steps
                    break
                lr_scale = min(1.0, lr_scale * 2.0)
            else:
                cand = _apply(current, direction, lr)
            opt.commit(state)
            trace.append(loss)
            lrs.append(lr)
            current = cand
            accepted += 1
            stale = True
            step += 1
        epoch += 1
    if last_batch is not None and stale:
        final_loss, _ = _batch_loss_and_grad(current, cfg, last_batch, phase, need_grad=False)
        trace.append(final_loss)
        if final_loss < best_loss:
            best, best_loss = current, final_loss
    return TrainResult(best, trace, best_loss, accepted, rejected, lrs)
