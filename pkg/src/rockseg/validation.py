"""Input validation helpers shared across the package.

Data containers are plain numpy arrays with fixed conventions:

* grayscale image -- 2-D ``uint8`` (8-bit) or ``uint16`` (16-bit) array,
  shape ``(height, width)``
* real field      -- float64 array, shape ``(height, width)`` or
  ``(channels, height, width)``, all values finite
* binary mask     -- 2-D bool array, ``True`` marks pore pixels
* label map       -- 2-D integer array, label 0 reserved for background

Randomness always flows through an explicit ``numpy.random.Generator``
backed by the PCG64 bit generator; :func:`check_rng` accepts either a
Generator or an integer seed, and :func:`spawn_rng` derives independent
substreams from ``(seed, index)`` via ``numpy.random.SeedSequence``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "DegenerateInputError",
    "check_gray_image",
    "check_mask",
    "check_field",
    "check_same_shape",
    "check_rng",
    "spawn_rng",
    "max_intensity",
]


class DegenerateInputError(ValueError):
    """Structurally valid input that is numerically degenerate for the operation."""


def check_gray_image(img) -> np.ndarray:
    """Validate a grayscale image and return it as an ndarray.

    Accepts 2-D ``uint8`` or ``uint16`` arrays with at least one pixel.
    """
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {arr.shape}")
    if arr.dtype not in (np.dtype(np.uint8), np.dtype(np.uint16)):
        raise ValueError(f"expected uint8 or uint16 image, got dtype {arr.dtype}")
    if arr.size == 0:
        raise ValueError("image must contain at least one pixel")
    return arr


def max_intensity(img: np.ndarray) -> int:
    """Largest representable intensity of an image (255 or 65535)."""
    return int(np.iinfo(img.dtype).max)


def check_mask(mask) -> np.ndarray:
    """Validate a binary mask (2-D bool array)."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D mask, got shape {arr.shape}")
    if arr.dtype != np.dtype(bool):
        raise ValueError(f"expected bool mask, got dtype {arr.dtype}")
    if arr.size == 0:
        raise ValueError("mask must contain at least one pixel")
    return arr


def check_field(field, single_channel: bool = False) -> np.ndarray:
    """Validate a real-valued field and return it as float64.

    Fields are ``(H, W)`` or channel-major ``(C, H, W)`` arrays of finite
    floats; flat 1-D vectors are accepted for scalar-chain work. With
    ``single_channel=True`` a ``(1, H, W)`` array is squeezed and anything
    multi-channel is rejected.
    """
    arr = np.asarray(field, dtype=np.float64)
    if arr.ndim not in (1, 2, 3):
        raise ValueError(f"expected a 1-D, 2-D, or 3-D field, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("field must contain at least one element")
    if not np.all(np.isfinite(arr)):
        raise ValueError("field contains non-finite values")
    if single_channel and arr.ndim == 3:
        if arr.shape[0] != 1:
            raise ValueError(f"expected a single-channel field, got {arr.shape[0]} channels")
        arr = arr[0]
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "inputs") -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what} have mismatched shapes {a.shape} and {b.shape}")


def check_rng(rng) -> np.random.Generator:
    """Coerce an integer seed or Generator into a ``numpy.random.Generator``.

    Integer seeds always construct a PCG64-backed generator so that seeded
    runs are reproducible across platforms.
    """
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(rng))))
    raise TypeError(f"expected an int seed or numpy Generator, got {type(rng).__name__}")


def spawn_rng(seed: int, index: int) -> np.random.Generator:
    """Independent substream for output ``index`` of a run seeded with ``seed``.

    The substream is ``PCG64(SeedSequence((seed, index)))``; outputs derived
    this way are order-independent and safe to generate in parallel.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((int(seed), int(index)))))
