from .adam import AdamState, adam_step
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .model import Model, ModelConfig, backward, forward, init_model, param_shapes, predict

__all__ = [
    "AdamState",
    "Checkpoint",
    "Model",
    "ModelConfig",
    "adam_step",
    "backward",
    "forward",
    "init_model",
    "load_checkpoint",
    "param_shapes",
    "predict",
    "save_checkpoint",
]
