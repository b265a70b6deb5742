from .functional import conv1d, conv1d_transpose, conv_geometry, dropout, mae_loss, relu
from .optim import AdamState, adam_step
from .tensor import Parameter, Tensor, backward

__all__ = [
    "AdamState",
    "Parameter",
    "Tensor",
    "adam_step",
    "backward",
    "conv1d",
    "conv1d_transpose",
    "conv_geometry",
    "dropout",
    "mae_loss",
    "relu",
]
