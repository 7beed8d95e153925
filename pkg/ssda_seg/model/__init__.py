from .checkpoint import checkpoint_hash, load_checkpoint, save_checkpoint
from .ema import ModelPair, ema_update, mu_schedule
from .network import SegOutput, TinySegConfig, build, forward, forward_proj, forward_seg

__all__ = [
    "ModelPair",
    "SegOutput",
    "TinySegConfig",
    "build",
    "checkpoint_hash",
    "ema_update",
    "forward",
    "forward_proj",
    "forward_seg",
    "load_checkpoint",
    "mu_schedule",
    "save_checkpoint",
]
