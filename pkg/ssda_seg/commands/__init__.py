from .evaluate import eval_command
from .generate import generate_command
from .pseudolabel import pseudolabel_command
from .sweep import sweep_command
from .train import train_command, train_run

__all__ = [
    "eval_command",
    "generate_command",
    "pseudolabel_command",
    "sweep_command",
    "train_command",
    "train_run",
]
