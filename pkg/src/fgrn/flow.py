"""Invertible flow guidance module: a stack of affine coupling cells.

Each cell splits its 3-channel input into (l1, l2) with C1=1, C2=2 and applies

    l1' = l1 + alpha(l2)
    s   = clamp * tanh(beta(l1'))
    l2' = l2 * exp(s) + phi(l1')

whose Jacobian is block-triangular, so log|det| = sum(s).
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ShapeMismatch
from .layers import Conv2d, Module
from .tensor import Tensor, concat_channels, exp, leaky_relu, split_channels, sum_all, tanh

FLOW_CHANNELS = 3


class DenseBlockNet(Module):
    """Five 3x3 convs with dense connectivity; the last layer starts at zero."""

    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator, growth: int = 16,
                 dtype=np.float32, slope: float = 0.2):
        self.slope = slope
        self.convs = [
            Conv2d(in_ch + i * growth, growth, rng, dtype=dtype, init_scale=0.1) for i in range(4)
        ]
        self.convs.append(Conv2d(in_ch + 4 * growth, out_ch, rng, dtype=dtype, zero=True))

    def __call__(self, x: Tensor) -> Tensor:
        feats = [x]
        for conv in self.convs[:-1]:
            inp = feats[0] if len(feats) == 1 else concat_channels(feats)
            feats.append(leaky_relu(conv(inp), self.slope))
        return self.convs[-1](concat_channels(feats))


class CouplingCell(Module):
    def __init__(self, rng: np.random.Generator, split: Sequence[int] = (1, 2), growth: int = 16,
                 clamp: float = 1.0, dtype=np.float32):
        c1, c2 = split
        if c1 + c2 != FLOW_CHANNELS or c1 < 1 or c2 < 1:
            raise ValueError(f"invalid channel split {split}")
        if clamp <= 0:
            raise ValueError("clamp must be positive")
        self.split = (c1, c2)
        self.clamp = clamp
        self.alpha = DenseBlockNet(c2, c1, rng, growth, dtype)
        self.beta = DenseBlockNet(c1, c2, rng, growth, dtype)
        self.phi = DenseBlockNet(c1, c2, rng, growth, dtype)

    def _check(self, t: Tensor) -> None:
        if t.ndim != 4 or t.shape[1] != FLOW_CHANNELS:
            raise ShapeMismatch(f"coupling cell expects N x 3 x H x W, got {t.shape}")

    def scale(self, l1: Tensor) -> Tensor:
        return self.clamp * tanh(self.beta(l1))

    def forward(self, l: Tensor) -> tuple[Tensor, Tensor]:
        self._check(l)
        l1, l2 = split_channels(l, self.split)
        y1 = l1 + self.alpha(l2)
        s = self.scale(y1)
        y2 = l2 * exp(s) + self.phi(y1)
        return concat_channels([y1, y2]), sum_all(s)

    def inverse(self, l: Tensor) -> Tensor:
        self._check(l)
        y1, y2 = split_channels(l, self.split)
        x2 = (y2 - self.phi(y1)) * exp(-self.scale(y1))
        x1 = y1 - self.alpha(x2)
        return concat_channels([x1, x2])


class FlowModule(Module):
    def __init__(self, rng: np.random.Generator, n_cells: int = 4, growth: int = 16,
                 clamp: float = 1.0, dtype=np.float32):
        self.cells = [CouplingCell(rng, growth=growth, clamp=clamp, dtype=dtype) for _ in range(n_cells)]

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Returns (F(x), total log|det J|) with the log-det summed over the batch."""
        logdet = Tensor(np.zeros((), dtype=x.dtype))
        for cell in self.cells:
            x, ld = cell.forward(x)
            logdet = logdet + ld
        return x, logdet

    def inverse(self, x: Tensor) -> Tensor:
        for cell in reversed(self.cells):
            x = cell.inverse(x)
        return x


def cell_forward(cell: CouplingCell, l: Tensor) -> tuple[Tensor, Tensor]:
    return cell.forward(l)


def cell_inverse(cell: CouplingCell, l: Tensor) -> Tensor:
    return cell.inverse(l)


def flow_forward(flow: FlowModule, x: Tensor) -> tuple[Tensor, Tensor]:
    return flow.forward(x)


def flow_inverse(flow: FlowModule, x: Tensor) -> Tensor:
    return flow.inverse(x)
