"""Pre-segmentation denoising filters: median, Gaussian blur, unsharp mask, dual.

All filters use edge replication at the borders and return images of the
input dtype. Filters that mix intensities (blur, unsharp) compute in real
arithmetic and quantize once at the end, rounding half away from zero.

Each filter also ships as a stateless sklearn-style transformer so the
steps drop into pipelines alongside the segmenters.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage as ndi
from sklearn.base import BaseEstimator, TransformerMixin

from .image import quantize_gray
from .validation import check_gray_image, max_intensity

__all__ = [
    "median_filter",
    "gaussian_kernel",
    "gaussian_blur",
    "unsharp_mask",
    "dual_filter",
    "MedianFilter",
    "GaussianBlur",
    "UnsharpMask",
    "DualFilter",
]


def median_filter(img, window: int) -> np.ndarray:
    """Median of the ``window x window`` neighborhood of each pixel.

    ``window`` must be odd so the median is an exact order statistic of the
    integer neighborhood; borders are edge-replicated. (A hypothetical even
    count would take the lower middle element.)
    """
    arr = check_gray_image(img)
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be an odd positive integer, got {window}")
    if window == 1:
        return arr.copy()
    return ndi.median_filter(arr, size=window, mode="nearest")


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized discrete Gaussian of radius ceil(3*sigma).

    Weights are ``exp(-x^2 / (2 sigma^2))`` on integer offsets, divided by
    their sum (so they total exactly 1 in the normalized sense).
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _blur_float(values: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian convolution on a float array, edge-replicated."""
    k = gaussian_kernel(sigma)
    out = ndi.correlate1d(values, k, axis=0, mode="nearest")
    return ndi.correlate1d(out, k, axis=1, mode="nearest")


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Gaussian blur of an integer image, quantized after real filtering."""
    arr = check_gray_image(img)
    blurred = _blur_float(arr.astype(np.float64), sigma)
    return quantize_gray(blurred, 8 if max_intensity(arr) == 255 else 16)


def unsharp_mask(img, sigma: float, amount: float) -> np.ndarray:
    """Sharpen by re-adding the detail the blur removed.

    ``out = clamp(img + amount * (img - blur(img)))`` evaluated in real
    arithmetic, then quantized. ``amount=0`` is the identity.
    """
    arr = check_gray_image(img)
    if amount < 0:
        raise ValueError(f"amount must be non-negative, got {amount}")
    values = arr.astype(np.float64)
    sharp = values + amount * (values - _blur_float(values, sigma))
    return quantize_gray(sharp, 8 if max_intensity(arr) == 255 else 16)


def dual_filter(img, sigma: float, amount: float, window: int) -> np.ndarray:
    """Unsharp masking followed by median filtering, in that order."""
    return median_filter(unsharp_mask(img, sigma, amount), window)


class _StatelessFilter(BaseEstimator, TransformerMixin):
    """Filters carry no fitted state; ``fit`` only validates the input."""

    def fit(self, X, y=None):
        check_gray_image(X)
        return self

    def transform(self, X):
        raise NotImplementedError


class MedianFilter(_StatelessFilter):
    def __init__(self, window: int = 3):
        self.window = window

    def transform(self, X):
        return median_filter(X, self.window)


class GaussianBlur(_StatelessFilter):
    def __init__(self, sigma: float = 1.0):
        self.sigma = sigma

    def transform(self, X):
        return gaussian_blur(X, self.sigma)


class UnsharpMask(_StatelessFilter):
    def __init__(self, sigma: float = 1.0, amount: float = 1.0):
        self.sigma = sigma
        self.amount = amount

    def transform(self, X):
        return unsharp_mask(X, self.sigma, self.amount)


class DualFilter(_StatelessFilter):
    """Unsharp-then-median composite used ahead of threshold segmentation."""

    def __init__(self, sigma: float = 1.0, amount: float = 1.0, window: int = 3):
        self.sigma = sigma
        self.amount = amount
        self.window = window

    def transform(self, X):
        return dual_filter(X, self.sigma, self.amount, self.window)
