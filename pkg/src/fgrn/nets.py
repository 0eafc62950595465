"""Learned downscaler G_d and upscaler G_u built from plain residual blocks."""
from __future__ import annotations

import numpy as np

from .errors import NotDivisible, ShapeMismatch
from .imageops import pixel_shuffle, squeeze
from .layers import Conv2d, Module
from .tensor import Tensor, leaky_relu


class ResBlock(Module):
    def __init__(self, width: int, rng: np.random.Generator, dtype=np.float32, slope: float = 0.2):
        self.slope = slope
        self.conv1 = Conv2d(width, width, rng, dtype=dtype)
        self.conv2 = Conv2d(width, width, rng, dtype=dtype, init_scale=0.1)

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.conv2(leaky_relu(self.conv1(x), self.slope))


class Downscaler(Module):
    """squeeze(s) -> head conv -> ResBlocks -> tail conv to 3 channels."""

    def __init__(self, scale: int, rng: np.random.Generator, width: int = 64, n_blocks: int = 8,
                 dtype=np.float32):
        self.scale = scale
        self.head = Conv2d(3 * scale * scale, width, rng, dtype=dtype)
        self.body = [ResBlock(width, rng, dtype) for _ in range(n_blocks)]
        # small tail centred at mid-grey keeps the quantizer's clamp inactive early on
        self.tail = Conv2d(width, 3, rng, dtype=dtype, init_scale=0.1)
        self.tail.bias.data[:] = 0.5

    def __call__(self, y: Tensor) -> Tensor:
        if y.ndim != 4 or y.shape[1] != 3:
            raise ShapeMismatch(f"downscaler expects N x 3 x H x W, got {y.shape}")
        if y.shape[2] % self.scale or y.shape[3] % self.scale:
            raise NotDivisible(f"input {y.shape[2]}x{y.shape[3]} not divisible by {self.scale}")
        h = self.head(squeeze(y, self.scale))
        for block in self.body:
            h = block(h)
        return self.tail(h)


class Upscaler(Module):
    """head conv -> ResBlocks -> tail conv to 3*s*s channels -> pixel_shuffle(s)."""

    def __init__(self, scale: int, rng: np.random.Generator, width: int = 64, n_blocks: int = 8,
                 dtype=np.float32):
        self.scale = scale
        self.head = Conv2d(3, width, rng, dtype=dtype)
        self.body = [ResBlock(width, rng, dtype) for _ in range(n_blocks)]
        self.tail = Conv2d(width, 3 * scale * scale, rng, dtype=dtype, init_scale=0.1)
        self.tail.bias.data[:] = 0.5

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeMismatch(f"upscaler expects N x 3 x H x W, got {x.shape}")
        h = self.head(x)
        for block in self.body:
            h = block(h)
        return pixel_shuffle(self.tail(h), self.scale)


def downscale_forward(g: Downscaler, y: Tensor) -> Tensor:
    return g(y)


def upscale_forward(g: Upscaler, x: Tensor) -> Tensor:
    return g(x)
