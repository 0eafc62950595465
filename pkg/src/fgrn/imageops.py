"""Deterministic image transforms: squeeze, pixel shuffle, bicubic resize,
luma conversion and straight-through quantization.

Images on the numpy side are "planar": float arrays of shape (3, H, W) with
values in [0, 1], or batches (N, 3, H, W).
"""
from __future__ import annotations

import contextlib

import numpy as np

from .errors import NotDivisible, ShapeMismatch
from .tensor import Tensor, _make, reshape, transpose


# -- space-to-depth ---------------------------------------------------------
def squeeze(t: Tensor, s: int) -> Tensor:
    """N x C x sH x sW -> N x s*s*C x H x W.

    Output channel ``c * s*s + dy * s + dx`` holds the pixel at block offset
    (dy, dx) of input channel ``c``.
    """
    n, c, hh, ww = t.shape
    if hh % s or ww % s:
        raise NotDivisible(f"spatial dims {hh}x{ww} not divisible by {s}")
    h, w = hh // s, ww // s
    x = reshape(t, (n, c, h, s, w, s))
    x = transpose(x, (0, 1, 3, 5, 2, 4))
    return reshape(x, (n, c * s * s, h, w))


def unsqueeze(t: Tensor, s: int) -> Tensor:
    """Inverse of :func:`squeeze`; identical to :func:`pixel_shuffle`."""
    return pixel_shuffle(t, s)


def pixel_shuffle(t: Tensor, s: int) -> Tensor:
    n, cc, h, w = t.shape
    if cc % (s * s):
        raise NotDivisible(f"channel count {cc} not divisible by {s * s}")
    c = cc // (s * s)
    x = reshape(t, (n, c, s, s, h, w))
    x = transpose(x, (0, 1, 4, 2, 5, 3))
    return reshape(x, (n, c, h * s, w * s))


# -- quantization -------------------------------------------------------------
def round_half_away(v: np.ndarray) -> np.ndarray:
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def quantize_array(v: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and snap to the 8-bit grid k/255."""
    return (round_half_away(np.clip(v, 0.0, 1.0) * 255.0) / 255.0).astype(v.dtype)


_ROUNDING = True


@contextlib.contextmanager
def rounding_disabled():
    """Make :func:`quantize_ste` a plain clamp to [0, 1].

    The clamp is the smooth surrogate whose true derivative equals the
    straight-through gradient, which lets finite differences check graphs
    that contain the quantizer.
    """
    global _ROUNDING
    prev = _ROUNDING
    _ROUNDING = False
    try:
        yield
    finally:
        _ROUNDING = prev


def quantize_ste(t: Tensor) -> Tensor:
    """8-bit quantization with a straight-through gradient.

    The backward pass is the identity wherever the input lies in [0, 1] and
    zero where the clamp was active.
    """
    inside = (t.data >= 0.0) & (t.data <= 1.0)
    out = quantize_array(t.data) if _ROUNDING else np.clip(t.data, 0.0, 1.0)
    return _make(out, (t,), lambda g: (g * inside,))


def to_uint8(v: np.ndarray) -> np.ndarray:
    return round_half_away(np.clip(v, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_uint8(v: np.ndarray, dtype=np.float32) -> np.ndarray:
    return v.astype(dtype) / dtype(255.0)


# -- colour -------------------------------------------------------------------
def rgb_to_y(img: np.ndarray) -> np.ndarray:
    """BT.601 studio-swing luma of a (3, H, W) or (N, 3, H, W) image in [0, 1].

    The result is in [16/255, 235/255].
    """
    img = np.asarray(img, dtype=np.float64)
    if img.shape[-3] != 3:
        raise ShapeMismatch(f"expected 3 channels, got shape {img.shape}")
    r, g, b = img[..., 0, :, :], img[..., 1, :, :], img[..., 2, :, :]
    return (65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0


# -- bicubic resampling ---------------------------------------------------------
def cubic_kernel(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic convolution kernel."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def resize_weights(in_size: int, out_size: int, a: float = -0.5) -> np.ndarray:
    """Dense (out_size, in_size) interpolation matrix along one axis.

    Half-pixel centre alignment; when shrinking, the kernel is stretched by
    the inverse scale (anti-aliasing). Out-of-range taps are clamped to the
    nearest edge sample and each row is normalised to sum to one.
    """
    scale = out_size / in_size
    stretch = min(scale, 1.0)
    support = 2.0 / stretch
    centers = (np.arange(out_size) + 0.5) / scale - 0.5
    left = np.floor(centers - support).astype(int)
    taps = int(np.ceil(2 * support)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    wts = stretch * cubic_kernel((centers[:, None] - idx) * stretch, a)
    wts /= wts.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 0, in_size - 1)
    mat = np.zeros((out_size, in_size))
    np.add.at(mat, (np.repeat(np.arange(out_size), taps), idx.ravel()), wts.ravel())
    return mat


def bicubic_resize(img: np.ndarray, out_h: int, out_w: int, clamp: bool = True) -> np.ndarray:
    """Separable bicubic resize of a (..., H, W) array."""
    if out_h < 1 or out_w < 1:
        raise ValueError("target size must be positive")
    img = np.asarray(img)
    dtype = img.dtype if np.issubdtype(img.dtype, np.floating) else np.float64
    wh = resize_weights(img.shape[-2], out_h)
    ww = resize_weights(img.shape[-1], out_w)
    out = np.einsum("oh,...hw,pw->...op", wh, img.astype(np.float64), ww)
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return out.astype(dtype)


def bicubic_downscale(img: np.ndarray, s: int) -> np.ndarray:
    h, w = img.shape[-2:]
    if h % s or w % s:
        raise NotDivisible(f"image {h}x{w} not divisible by {s}")
    return bicubic_resize(img, h // s, w // s)
