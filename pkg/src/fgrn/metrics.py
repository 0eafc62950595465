"""PSNR and SSIM on the BT.601 luma plane (0-255 scale)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeMismatch, TooSmall
from .imageops import rgb_to_y

INF_PSNR = math.inf


def _as_float(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    return img.astype(np.float64)


def _y_planes(a, b, border_crop: int) -> tuple[np.ndarray, np.ndarray]:
    a, b = _as_float(a), _as_float(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    ya, yb = rgb_to_y(a) * 255.0, rgb_to_y(b) * 255.0
    if border_crop:
        ya = ya[border_crop:-border_crop, border_crop:-border_crop]
        yb = yb[border_crop:-border_crop, border_crop:-border_crop]
    return ya, yb


def psnr_plane(ya: np.ndarray, yb: np.ndarray, peak: float = 255.0) -> float:
    mse = float(np.mean((np.asarray(ya, np.float64) - np.asarray(yb, np.float64)) ** 2))
    if mse == 0.0:
        return INF_PSNR
    return 10.0 * math.log10(peak * peak / mse)


def psnr_y(a, b, border_crop: int = 0) -> float:
    """PSNR in dB between two RGB images (float [0,1] or uint8, CHW)."""
    return psnr_plane(*_y_planes(a, b, border_crop))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = g.size
    rows = sliding_window_view(img, k, axis=0) @ g
    return sliding_window_view(rows, k, axis=1) @ g


def ssim_plane(ya: np.ndarray, yb: np.ndarray, peak: float = 255.0) -> float:
    """Single-scale SSIM, 11x11 Gaussian (sigma 1.5), mean over valid windows."""
    ya = np.asarray(ya, np.float64)
    yb = np.asarray(yb, np.float64)
    if ya.shape != yb.shape:
        raise ShapeMismatch(f"plane shapes differ: {ya.shape} vs {yb.shape}")
    if min(ya.shape) < 11:
        raise TooSmall(f"SSIM needs at least 11x11, got {ya.shape}")
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    g = gaussian_window()
    mu_a, mu_b = _filter_valid(ya, g), _filter_valid(yb, g)
    var_a = _filter_valid(ya * ya, g) - mu_a ** 2
    var_b = _filter_valid(yb * yb, g) - mu_b ** 2
    cov = _filter_valid(ya * yb, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim_y(a, b, border_crop: int = 0) -> float:
    return ssim_plane(*_y_planes(a, b, border_crop))


@dataclass
class MetricReport:
    files: list[str] = field(default_factory=list)
    psnr: list[float] = field(default_factory=list)
    ssim: list[float] = field(default_factory=list)

    def add(self, name: str, psnr_db: float, ssim: float) -> None:
        self.files.append(name)
        self.psnr.append(psnr_db)
        self.ssim.append(ssim)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr)) if self.psnr else math.nan

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim)) if self.ssim else math.nan

    def to_csv(self) -> str:
        lines = ["file,psnr_db,ssim"]
        for name, p, s in zip(self.files, self.psnr, self.ssim):
            lines.append(f"{name},{p:.6f},{s:.6f}")
        lines.append(f"mean,{self.mean_psnr:.6f},{self.mean_ssim:.6f}")
        return "\n".join(lines) + "\n"
