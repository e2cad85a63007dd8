"""Toy-scale multi-band masking network with hand-written backpropagation."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import MasknetConfig, TrainerConfig, frame_count
from .model import (
    GradBundle,
    LatentTensor,
    ModelParams,
    apply_mask,
    backward,
    decode,
    encode,
    forward,
    fuse,
    init_params,
    mask,
)
from .train import RandomT60Scenes, TrainResult, fixed_scene, train

__all__ = [
    "GradBundle", "LatentTensor", "MasknetConfig", "ModelParams", "RandomT60Scenes", "TrainResult",
    "TrainerConfig", "apply_mask", "backward", "decode", "encode", "fixed_scene", "forward", "frame_count",
    "fuse", "init_params", "load_checkpoint", "mask", "save_checkpoint", "train",
]
