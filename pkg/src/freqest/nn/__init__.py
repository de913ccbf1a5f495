from freqest.nn import functional
from freqest.nn.layers import (
    BatchNorm1d,
    CircularConv1d,
    CircularConvTranspose1d,
    ConvBlock,
    Linear,
    Module,
)
from freqest.nn.optim import Adam, adam_step
from freqest.nn.tensor import Parameter, Tensor, no_grad

__all__ = [
    "Adam",
    "BatchNorm1d",
    "CircularConv1d",
    "CircularConvTranspose1d",
    "ConvBlock",
    "Linear",
    "Module",
    "Parameter",
    "Tensor",
    "adam_step",
    "functional",
    "no_grad",
]
