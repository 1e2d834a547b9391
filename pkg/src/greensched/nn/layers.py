"""Parameter-holding layers built on the autodiff ops.

Initialization is fan-in-scaled uniform (limit 1/sqrt(fan_in)); biases and
layer-norm shifts start at zero.  All layers operate on float64 tensors and
support a leading batch dimension.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .convkernels import ConvWorkspace


class Dense:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, name: str):
        limit = 1.0 / np.sqrt(in_dim)
        self.name = name
        self.weight = ad.parameter(rng.uniform(-limit, limit, size=(in_dim, out_dim)))
        self.bias = ad.parameter(np.zeros(out_dim))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.weight), self.bias)

    def params(self) -> list[tuple[str, Tensor]]:
        return [(f"{self.name}.weight", self.weight), (f"{self.name}.bias", self.bias)]


class Conv2d:
    """3x3-style stride-1 convolution with zero padding."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 rng: np.random.Generator, name: str, padding: int = 1):
        fan_in = in_channels * kernel * kernel
        limit = 1.0 / np.sqrt(fan_in)
        self.name = name
        self.padding = padding
        self.weight = ad.parameter(
            rng.uniform(-limit, limit, size=(out_channels, in_channels, kernel, kernel)))
        self.bias = ad.parameter(np.zeros(out_channels))
        self.workspace = ConvWorkspace()

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.weight, self.bias, padding=self.padding,
                         workspace=self.workspace)

    def params(self) -> list[tuple[str, Tensor]]:
        return [(f"{self.name}.weight", self.weight), (f"{self.name}.bias", self.bias)]


class LayerNorm:
    def __init__(self, dim: int, name: str):
        self.name = name
        self.gamma = ad.parameter(np.ones(dim))
        self.beta = ad.parameter(np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gamma, self.beta)

    def params(self) -> list[tuple[str, Tensor]]:
        return [(f"{self.name}.gamma", self.gamma), (f"{self.name}.beta", self.beta)]


class MLP:
    """Dense stack with tanh hidden activations and a linear head."""

    def __init__(self, in_dim: int, hidden: tuple[int, ...], out_dim: int,
                 rng: np.random.Generator, name: str):
        self.name = name
        self.layers: list[Dense] = []
        prev = in_dim
        for i, width in enumerate(hidden):
            self.layers.append(Dense(prev, width, rng, f"{name}.hidden{i}"))
            prev = width
        self.head = Dense(prev, out_dim, rng, f"{name}.head")

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = ad.tanh(layer(x))
        return self.head(x)

    def params(self) -> list[tuple[str, Tensor]]:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        out.extend(self.head.params())
        return out
