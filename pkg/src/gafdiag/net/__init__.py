"""Neural network subpackage: layers, fusion model, optimizer, training."""

from .layers import (
    BatchNorm2d,
    ChannelDrop,
    ChannelSelect,
    Conv1d,
    Conv2d,
    Linear,
    MaxPool2d,
    MaxReduce,
    Param,
    ReLU,
)
from .model import (
    BRANCH_NAMES,
    CHECKPOINT_MAGIC,
    FusionModel,
    ModelConfig,
    ResidualBlock,
    load_model,
    save_model,
)
from .optim import Adam, lr_at_epoch
from .train import (
    TrainConfig,
    bce_with_logits,
    pair_targets,
    pairs_to_batch,
    predict,
    softmax_ce,
    stable_sigmoid,
    train,
)

__all__ = [
    "Adam",
    "BRANCH_NAMES",
    "BatchNorm2d",
    "CHECKPOINT_MAGIC",
    "ChannelDrop",
    "ChannelSelect",
    "Conv1d",
    "Conv2d",
    "FusionModel",
    "Linear",
    "MaxPool2d",
    "MaxReduce",
    "ModelConfig",
    "Param",
    "ReLU",
    "ResidualBlock",
    "TrainConfig",
    "bce_with_logits",
    "load_model",
    "lr_at_epoch",
    "pair_targets",
    "pairs_to_batch",
    "predict",
    "save_model",
    "softmax_ce",
    "stable_sigmoid",
    "train",
]
