"""
Weight-normalized convolution layers and the dilated residual stack
"""

import math
from typing import Optional, Sequence, Union

import numpy as np

from core import functional as F
from core.errors import ConfigurationError
from core.module import Module, Parameter
from core.tensor import Tensor


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


class Conv1d(Module):
    """1-D convolution with a weight-normalized [C_out x C_in/groups x K] kernel"""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        dilation: int = 1,
        groups: int = 1,
        padding: Union[int, str] = "same",
        padding_mode: str = "zero",
        bias: bool = True,
        weight_norm: bool = True,
    ):
        if in_channels % groups or out_channels % groups:
            raise ConfigurationError(f"conv {in_channels}->{out_channels} channels not divisible by groups={groups}")
        fan_in = in_channels // groups * kernel_size
        self.weight = Parameter(_uniform(rng, fan_in, (out_channels, in_channels // groups, kernel_size)),
                                weight_norm=weight_norm)
        self.bias: Optional[Parameter] = Parameter(_uniform(rng, fan_in, out_channels)) if bias else None
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.dilation = dilation
        self.groups = groups
        self.padding = padding
        self.padding_mode = padding_mode

    def forward(self, x: Tensor) -> Tensor:
        return F.conv1d(
            x,
            self.weight.tensor(),
            self.bias.tensor() if self.bias is not None else None,
            stride=self.stride,
            dilation=self.dilation,
            groups=self.groups,
            padding=self.padding,
            padding_mode=self.padding_mode,
        )


class ConvTranspose1d(Module):
    """Upsampling by `stride` with kernel 2 * stride; weight stored [C_in x C_out x K]"""

    def __init__(self, in_channels: int, out_channels: int, stride: int, rng: np.random.Generator,
                 weight_norm: bool = True):
        kernel_size = 2 * stride
        fan_in = out_channels * kernel_size
        self.weight = Parameter(_uniform(rng, fan_in, (in_channels, out_channels, kernel_size)),
                                weight_norm=weight_norm)
        self.bias = Parameter(_uniform(rng, fan_in, out_channels))
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stride = stride

    def forward(self, x: Tensor) -> Tensor:
        return F.conv_transpose1d(x, self.weight.tensor(), self.bias.tensor(), stride=self.stride)


class ResidualBlock(Module):
    """leaky_relu -> dilated conv -> leaky_relu -> 1x1 conv, added to a shortcut of the input"""

    def __init__(self, channels: int, dilation: int, rng: np.random.Generator, kernel_size: int = 3,
                 shortcut: str = "identity", padding_mode: str = "reflect", slope: float = 0.2):
        self.dilated = Conv1d(channels, channels, kernel_size, rng, dilation=dilation, padding_mode=padding_mode)
        self.pointwise = Conv1d(channels, channels, 1, rng)
        self.shortcut = Conv1d(channels, channels, 1, rng) if shortcut == "conv" else None
        self.slope = slope

    def forward(self, x: Tensor) -> Tensor:
        h = F.leaky_relu(x, self.slope)
        h = self.dilated(h)
        h = F.leaky_relu(h, self.slope)
        h = self.pointwise(h)
        skip = self.shortcut(x) if self.shortcut is not None else x
        return skip + h


class ResStack(Module):
    """Residual blocks with growing dilation"""

    def __init__(self, channels: int, dilations: Sequence[int], rng: np.random.Generator, kernel_size: int = 3,
                 shortcut: str = "identity", padding_mode: str = "reflect", slope: float = 0.2):
        self.blocks = [
            ResidualBlock(channels, d, rng, kernel_size=kernel_size, shortcut=shortcut, padding_mode=padding_mode,
                          slope=slope)
            for d in dilations
        ]

    def forward(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x)
        return x
