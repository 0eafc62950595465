"""Minimal parameter containers shared by the rescaling nets and the flow."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import Tensor, conv2d


class Module:
    """Anything that owns parameters or child modules as attributes."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator, k: int = 3,
                 dtype=np.float32, init_scale: float = 1.0, zero: bool = False):
        shape = (out_ch, in_ch, k, k)
        if zero:
            w = np.zeros(shape, dtype=dtype)
        else:
            # He-normal, fan-in
            std = np.sqrt(2.0 / (in_ch * k * k)) * init_scale
            w = (rng.standard_normal(shape) * std).astype(dtype)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch, dtype=dtype), requires_grad=True)
        self.pad = k // 2

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=1, pad=self.pad)


def randomize_(module: Module, rng: np.random.Generator, scale: float = 0.1) -> Module:
    """Overwrite every parameter with N(0, scale^2) noise (test helper)."""
    for p in module.parameters():
        p.data = (rng.standard_normal(p.shape) * scale).astype(p.dtype)
    return module


def zero_(module: Module) -> Module:
    for p in module.parameters():
        p.data = np.zeros_like(p.data)
    return module
