"""Pore-scale properties of binary masks: porosity, connectivity, shape, complexity.

Components use 4-connectivity throughout, matching the watershed
segmenter. Aspect ratios come from the second-moment ellipse of each
component with the +1/12 per-axis correction for finite pixel size;
components smaller than ``min_pixels`` are excluded as moment-degenerate.
Structural complexity is the box-counting dimension of the pore set on a
grid anchored at the top-left corner, fit by least squares of
``log N(s)`` against ``log(1/s)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage as ndi

from .validation import DegenerateInputError, check_mask

__all__ = [
    "MorphReport",
    "label_components",
    "porosity",
    "connectivity",
    "aspect_ratios",
    "box_counts",
    "fractal_dimension",
    "morph_report",
]

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


def label_components(mask) -> np.ndarray:
    """Label 4-connected pore components 1..K in row-major first-encounter order.

    Matrix pixels stay 0. The contract is the partition and the ordering,
    not the labeling mechanism.
    """
    arr = check_mask(mask)
    raw, k = ndi.label(arr, structure=_FOUR_CONNECTED)
    if k == 0:
        return raw.astype(np.int32)
    flat = raw.ravel()
    first_seen = np.full(k + 1, flat.size, dtype=np.int64)
    np.minimum.at(first_seen, flat, np.arange(flat.size))
    order = np.argsort(first_seen[1:], kind="stable")
    remap = np.zeros(k + 1, dtype=np.int32)
    remap[order + 1] = np.arange(1, k + 1)
    return remap[raw]


def porosity(mask) -> float:
    """Pore-pixel fraction of the mask."""
    arr = check_mask(mask)
    return float(np.count_nonzero(arr)) / arr.size


def connectivity(mask):
    """Component count and the largest component's share of pore pixels.

    Returns ``(component_count, largest_component_fraction)``; the
    fraction is 0 for a mask with no pores.
    """
    labels = label_components(mask)
    k = int(labels.max())
    if k == 0:
        return 0, 0.0
    sizes = np.bincount(labels.ravel())[1:]
    return k, float(sizes.max()) / float(sizes.sum())


def _component_aspect_ratio(ys: np.ndarray, xs: np.ndarray) -> float:
    """Elongation of a pixel set from its corrected second-moment ellipse."""
    x = xs - xs.mean()
    y = ys - ys.mean()
    mu20 = float((x * x).mean()) + 1.0 / 12.0
    mu02 = float((y * y).mean()) + 1.0 / 12.0
    mu11 = float((x * y).mean())
    half_trace = 0.5 * (mu20 + mu02)
    span = np.hypot(0.5 * (mu20 - mu02), mu11)
    lam_max = half_trace + span
    lam_min = half_trace - span
    return float(np.sqrt(lam_max / lam_min))


def aspect_ratios(mask, min_pixels: int = 5):
    """Per-component aspect ratios and their mean, in label order.

    Components with fewer than ``min_pixels`` pixels are skipped; the mean
    is NaN when nothing is retained.
    """
    if min_pixels < 1:
        raise ValueError(f"min_pixels must be at least 1, got {min_pixels}")
    labels = label_components(mask)
    k = int(labels.max())
    ratios = []
    for i in range(1, k + 1):
        ys, xs = np.nonzero(labels == i)
        if len(ys) >= min_pixels:
            ratios.append(_component_aspect_ratio(ys.astype(float), xs.astype(float)))
    ratios = np.asarray(ratios, dtype=np.float64)
    mean = float(ratios.mean()) if len(ratios) else float("nan")
    return ratios, mean


def box_counts(mask, box_sizes) -> np.ndarray:
    """Occupied-box counts N(s) for each box size, grid anchored at (0, 0)."""
    arr = check_mask(mask)
    height, width = arr.shape
    counts = []
    for s in box_sizes:
        s = int(s)
        if s < 1:
            raise ValueError(f"box sizes must be positive, got {s}")
        pad_h = (-height) % s
        pad_w = (-width) % s
        padded = np.pad(arr, ((0, pad_h), (0, pad_w)), constant_values=False)
        blocks = padded.reshape(padded.shape[0] // s, s, padded.shape[1] // s, s)
        counts.append(int(blocks.any(axis=(1, 3)).sum()))
    return np.asarray(counts, dtype=np.int64)


def fractal_dimension(mask, box_sizes=None):
    """Box-counting dimension of the pore set and the fit quality.

    Default box sizes are powers of two up to ``min(H, W) / 4``; pass an
    explicit list for fixtures with other natural scales (e.g. powers of
    three). Returns ``(dimension, fit_r2)``.
    """
    arr = check_mask(mask)
    if not np.any(arr):
        raise DegenerateInputError("fractal dimension undefined for an empty mask")
    if min(arr.shape) < 8:
        raise DegenerateInputError(
            f"mask too small for box counting: min side {min(arr.shape)} < 8"
        )
    if box_sizes is None:
        limit = min(arr.shape) // 4
        box_sizes = []
        s = 1
        while s <= limit:
            box_sizes.append(s)
            s *= 2
    box_sizes = [int(s) for s in box_sizes]
    if len(box_sizes) < 2:
        raise DegenerateInputError("box counting needs at least two box sizes")

    counts = box_counts(arr, box_sizes)
    log_inv_s = -np.log(np.asarray(box_sizes, dtype=np.float64))
    log_n = np.log(counts.astype(np.float64))
    slope, intercept = np.polyfit(log_inv_s, log_n, 1)
    fitted = slope * log_inv_s + intercept
    ss_res = float(((log_n - fitted) ** 2).sum())
    ss_tot = float(((log_n - log_n.mean()) ** 2).sum())
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res < 1e-12 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return float(slope), r2


@dataclass(frozen=True)
class MorphReport:
    """Aggregate morphological summary of one mask."""

    porosity: float
    component_count: int
    largest_component_fraction: float
    mean_aspect_ratio: float | None
    fractal_dimension: float | None
    fit_r2: float | None
    excluded_small_components: int
    flags: tuple = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return {
            "porosity": self.porosity,
            "component_count": self.component_count,
            "largest_component_fraction": self.largest_component_fraction,
            "mean_aspect_ratio": self.mean_aspect_ratio,
            "fractal_dimension": self.fractal_dimension,
            "fit_r2": self.fit_r2,
            "excluded_small_components": self.excluded_small_components,
            "flags": list(self.flags),
        }


def morph_report(mask, min_pixels: int = 5) -> MorphReport:
    """Full morphological report; degenerate sub-measurements are flagged, not fatal."""
    arr = check_mask(mask)
    k, largest = connectivity(arr)
    ratios, mean_ratio = aspect_ratios(arr, min_pixels)
    flags = []
    if not len(ratios):
        mean_ratio = None
        flags.append("no_components_at_min_pixels")
    try:
        dim, r2 = fractal_dimension(arr)
    except DegenerateInputError:
        dim, r2 = None, None
        flags.append("fractal_dimension_degenerate")
    return MorphReport(
        porosity=porosity(arr),
        component_count=k,
        largest_component_fraction=largest,
        mean_aspect_ratio=mean_ratio,
        fractal_dimension=dim,
        fit_r2=r2,
        excluded_small_components=k - len(ratios),
        flags=tuple(flags),
    )
