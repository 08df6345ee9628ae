"""Histogram matching: monotone intensity remap onto a reference histogram."""

from __future__ import annotations

import numpy as np

from ..imagecore import GrayImage, Histogram, N_BINS, bin_indices, compute_histogram

__all__ = ["match_lut", "hist_match"]


def match_lut(source_hist: Histogram, target_hist: Histogram) -> np.ndarray:
    """Per-bin lookup table: smallest target bin whose CDF reaches the source CDF.

    This is the classic histogram-specification rule; the table is
    non-decreasing, so the induced pixel map preserves intensity order.
    """
    cdf_src = np.cumsum(source_hist.bins)
    cdf_tgt = np.cumsum(target_hist.bins)
    lut = np.searchsorted(cdf_tgt, cdf_src, side="left")
    return np.minimum(lut, N_BINS - 1)


def hist_match(img: GrayImage, target_hist: Histogram) -> GrayImage:
    """Remap an image's intensities so its histogram follows the target.

    Output intensities sit on the 8-bit grid (bin/255), so matching an 8-bit
    image to its own histogram is the identity. A degenerate target with a
    single occupied bin yields a constant image at that bin's intensity.
    """
    lut = match_lut(compute_histogram(img), target_hist)
    out_bins = lut[bin_indices(img.pixels)]
    return GrayImage(out_bins.astype(np.float64) / 255.0)
