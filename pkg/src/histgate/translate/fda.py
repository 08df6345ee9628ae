"""Frequency-domain style transfer: swap the low-frequency amplitude block.

The source image keeps its phase spectrum everywhere; inside a centered
low-frequency window its amplitude is replaced by the target's. The window is
symmetric about DC (side 2*floor(beta*min(H,W)) + 1), which keeps the merged
spectrum Hermitian so the inverse transform is real up to rounding.
"""

from __future__ import annotations

import numpy as np

from ..imagecore import GrayImage

__all__ = ["low_freq_window", "swap_low_freq_amplitude", "fda_translate"]


def low_freq_window(shape: tuple[int, int], beta: float) -> tuple[slice, slice]:
    """Row/column slices of the swapped block in fftshifted coordinates."""
    h, w = shape
    b = int(np.floor(beta * min(h, w)))
    ch, cw = h // 2, w // 2
    rows = slice(max(ch - b, 0), min(ch + b + 1, h))
    cols = slice(max(cw - b, 0), min(cw + b + 1, w))
    return rows, cols


def swap_low_freq_amplitude(src: np.ndarray, tgt: np.ndarray, beta: float) -> np.ndarray:
    """Translated pixels before clipping to [0, 1]."""
    src = np.asarray(src, dtype=np.float64)
    tgt = np.asarray(tgt, dtype=np.float64)
    if src.shape != tgt.shape:
        raise ValueError(f"source shape {src.shape} != target shape {tgt.shape}")
    if not 0.0 < beta <= 0.5:
        raise ValueError("beta must lie in (0, 0.5]")
    fs = np.fft.fft2(src)
    ft = np.fft.fft2(tgt)
    amp = np.fft.fftshift(np.abs(fs))
    amp_t = np.fft.fftshift(np.abs(ft))
    rows, cols = low_freq_window(src.shape, beta)
    amp[rows, cols] = amp_t[rows, cols]
    merged = np.fft.ifftshift(amp) * np.exp(1j * np.angle(fs))
    return np.real(np.fft.ifft2(merged))


def fda_translate(src: GrayImage, tgt: GrayImage, beta: float) -> GrayImage:
    """Move a source image toward the target's low-frequency appearance."""
    out = swap_low_freq_amplitude(src.pixels, tgt.pixels, beta)
    return GrayImage(np.clip(out, 0.0, 1.0))
