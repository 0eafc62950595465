"""Inference paths: HR -> 8-bit LR image and 8-bit LR image -> HR.

Both directions exchange only uint8 arrays, so going through PNG files
gives bit-identical results to calling these functions back to back.
"""
from __future__ import annotations

import numpy as np

from .imageops import bicubic_resize, from_uint8, quantize_ste, to_uint8
from .tensor import Tensor, no_grad


def _batched(img: np.ndarray) -> tuple[np.ndarray, bool]:
    return (img[None], True) if img.ndim == 3 else (img, False)


def downscale(model, hr: np.ndarray) -> np.ndarray:
    """Q(F(Q(G_d(y)))) as uint8; ``hr`` is float (3,H,W) or (N,3,H,W) in [0,1]."""
    y, single = _batched(np.asarray(hr, dtype=model.dtype))
    with no_grad():
        x = quantize_ste(model.down(Tensor(y)))
        lr, _ = model.flow.forward(x)
    out = to_uint8(lr.data)
    return out[0] if single else out


def upscale(model, lr: np.ndarray) -> np.ndarray:
    """clamp(G_u(F^-1(x_hat))) as uint8; ``lr`` is a uint8 (3,h,w) or batch."""
    x_hat, single = _batched(from_uint8(np.asarray(lr), model.dtype))
    with no_grad():
        x = model.flow.inverse(Tensor(x_hat))
        hr = model.up(x)
    out = to_uint8(hr.data)
    return out[0] if single else out


def roundtrip(model, hr: np.ndarray) -> np.ndarray:
    return upscale(model, downscale(model, hr))


def representation(model, hr: np.ndarray) -> np.ndarray:
    """Quantized G_d output before the flow (float)."""
    y, single = _batched(np.asarray(hr, dtype=model.dtype))
    with no_grad():
        x = quantize_ste(model.down(Tensor(y))).data
    return x[0] if single else x


def bicubic_roundtrip(hr: np.ndarray, scale: int) -> tuple[np.ndarray, np.ndarray]:
    """Bicubic down then bicubic up, each stored as 8-bit; returns (lr, hr) uint8."""
    h, w = hr.shape[-2:]
    lr = to_uint8(bicubic_resize(hr, h // scale, w // scale))
    up = to_uint8(bicubic_resize(from_uint8(lr, np.float64), h, w))
    return lr, up
