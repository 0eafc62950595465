"""8-bit RGB PNG reading and writing (CHW uint8 arrays)."""
from __future__ import annotations

import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError


def load_png(path: str | os.PathLike) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise DecodeError(f"{path}: not a PNG file")
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, UnidentifiedImageError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def save_png(path: str | os.PathLike, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected a 3 x H x W uint8 array, got {img.dtype} {img.shape}")
    Image.fromarray(np.ascontiguousarray(img.transpose(1, 2, 0))).save(path, format="PNG")


def list_pngs(directory: str | os.PathLike) -> list[str]:
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"not a directory: {directory}")
    return sorted(f for f in os.listdir(directory) if f.lower().endswith(".png"))
