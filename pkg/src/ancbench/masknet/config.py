"""Configuration of the multi-band masking network and its trainer."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Literal

from ..errors import ConfigurationError


def frame_count(signal_len: int, kernel: int) -> int:
    """Number of encoder frames ``(M - k) / (k/2) + 1`` for stride ``k/2``."""
    if kernel < 2 or kernel % 2:
        raise ConfigurationError(f"kernel must be an even integer >= 2, got {kernel}")
    hop = kernel // 2
    if signal_len < kernel or (signal_len - kernel) % hop:
        raise ConfigurationError(
            f"signal length {signal_len} is incompatible with kernel {kernel}: "
            f"(M - k) must be a non-negative multiple of {hop}"
        )
    return (signal_len - kernel) // hop + 1


@dataclass(frozen=True)
class MasknetConfig:
    signal_len_m: int = 8000
    q: int = 2
    kernel_k: int = 16
    channels_c: int = 32
    layers_fullband: int = 2
    layers_subband: int = 1
    ssm_state_dim: int = 16
    conv_width: int = 4
    mask_mode: Literal["sigmoid", "linear", "ones"] = "sigmoid"
    filter_taps: int = 127
    sample_rate_hz: int = 16000
    norm_eps: float = 1e-6

    def __post_init__(self):
        frame_count(self.signal_len_m, self.kernel_k)
        if self.q < 0:
            raise ConfigurationError("q must be >= 0")
        if min(self.channels_c, self.ssm_state_dim, self.conv_width) < 1:
            raise ConfigurationError("channels, state dimension and conv width must be >= 1")
        if min(self.layers_fullband, self.layers_subband) < 0:
            raise ConfigurationError("layer counts must be >= 0")
        if self.mask_mode not in ("sigmoid", "linear", "ones"):
            raise ConfigurationError(f"unknown mask_mode {self.mask_mode!r}")

    @property
    def stride(self) -> int:
        return self.kernel_k // 2

    @property
    def b_frames(self) -> int:
        return frame_count(self.signal_len_m, self.kernel_k)

    @property
    def n_bands(self) -> int:
        return self.q + 1

    def layers_for_band(self, band: int) -> int:
        return self.layers_fullband if band == 0 else self.layers_subband

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def toy(cls, signal_len_m: int = 8000, **overrides) -> "MasknetConfig":
        return cls(signal_len_m=signal_len_m, **overrides)

    @classmethod
    def full_scale(cls, signal_len_m: int = 48000, small: bool = False, **overrides) -> "MasknetConfig":
        """Full-scale preset: C = 256, 16 full-band layers (8 for the small model)."""
        base = dict(signal_len_m=signal_len_m, q=2, kernel_k=16, channels_c=256,
                    layers_fullband=8 if small else 16, layers_subband=8, ssm_state_dim=16)
        base.update(overrides)
        return cls(**base)


@dataclass(frozen=True)
class TrainerConfig:
    learning_rate: float = 2e-3
    steps: int = 2000
    batch_size: int = 1
    grad_clip: float = 5.0
    lr_decay: float = 0.5
    decay_every_epochs: int = 0  # 0 disables decay
    warmup_epochs: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # reject steps that do not lower the loss, halving the learning rate
    monotone: bool = False
    max_halvings: int = 12
    scene_policy: Literal["per_example", "per_batch"] = "per_example"
    seed: int = 0
    # stop early once a batch loss at or below this value (dB) is seen
    stop_below_db: float | None = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be >= 0")
        if self.steps < 0 or self.batch_size < 1:
            raise ConfigurationError("steps must be >= 0 and batch_size >= 1")
        if not self.grad_clip > 0:
            raise ConfigurationError("grad_clip must be positive")
        if self.scene_policy not in ("per_example", "per_batch"):
            raise ConfigurationError(f"unknown scene_policy {self.scene_policy!r}")

    @classmethod
    def full_scale(cls, **overrides) -> "TrainerConfig":
        """Full-scale schedule: Adam at 1.5e-4, halved every 2 epochs after 30."""
        base = dict(learning_rate=1.5e-4, grad_clip=5.0, lr_decay=0.5, decay_every_epochs=2, warmup_epochs=30)
        base.update(overrides)
        return cls(**base)

    def lr_at_epoch(self, epoch: int) -> float:
        if not self.decay_every_epochs or epoch < self.warmup_epochs:
            return self.learning_rate
        n = (epoch - self.warmup_epochs) // self.decay_every_epochs + 1
        return self.learning_rate * self.lr_decay**n
