"""Image containers, bit-exact PGM I/O, field normalization, and synthetic fixtures.

The interchange format is netpbm PGM, either P2 (ASCII) or P5 (binary),
with maxval 255 or 65535. 16-bit P5 rasters are big-endian per the PGM
convention. Round trips through :func:`save_pgm` / :func:`load_pgm` are
bit-exact for both formats and both bit depths.

Grayscale images map to real-valued diffusion fields over the symmetric
range [-1, 1]: intensity ``v`` becomes ``2 v / (2**bits - 1) - 1``, so the
darkest representable pixel is -1 and the brightest +1. Quantization back
to integers rounds half away from zero.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .validation import check_field, check_gray_image, check_rng, max_intensity

__all__ = [
    "PgmFormatError",
    "load_pgm",
    "save_pgm",
    "to_field",
    "from_field",
    "quantize_gray",
    "synth_fixture",
    "add_gaussian_noise",
    "MATRIX_LEVEL",
    "PORE_LEVEL",
]

# Synthetic fixture intensities (fractions of the dynamic range): bright
# solid matrix with dark pore disks, the usual CT contrast.
MATRIX_LEVEL = 0.8
PORE_LEVEL = 0.2

_SUPPORTED_MAXVALS = {255: np.uint8, 65535: np.uint16}


class PgmFormatError(ValueError):
    """Raised for malformed or unsupported PGM files."""


def _tokenize_header(data: bytes):
    """Yield (token, end_offset) for whitespace-separated header tokens.

    Comments run from ``#`` to end of line and may appear between tokens.
    """
    i = 0
    n = len(data)
    while i < n:
        c = data[i : i + 1]
        if c in b" \t\r\n\x0b\x0c":
            i += 1
        elif c == b"#":
            j = data.find(b"\n", i)
            i = n if j < 0 else j + 1
        else:
            j = i
            while j < n and data[j : j + 1] not in b" \t\r\n\x0b\x0c#":
                j += 1
            yield data[i:j], j
            i = j


def load_pgm(path) -> np.ndarray:
    """Load a PGM P2/P5 file as a uint8 or uint16 image array.

    Raises
    ------
    PgmFormatError
        On a malformed header, unsupported maxval, or truncated payload.
    """
    with open(path, "rb") as fh:
        data = fh.read()

    tokens = _tokenize_header(data)
    try:
        magic, _ = next(tokens)
    except StopIteration:
        raise PgmFormatError("malformed header: empty file") from None
    if magic not in (b"P2", b"P5"):
        raise PgmFormatError(f"malformed header: unsupported magic {magic!r}")

    fields = []
    offset = len(data)
    try:
        for _ in range(3):
            tok, offset = next(tokens)
            fields.append(int(tok))
    except (StopIteration, ValueError):
        raise PgmFormatError("malformed header: expected width, height, maxval") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PgmFormatError(f"malformed header: invalid dimensions {width}x{height}")
    if maxval not in _SUPPORTED_MAXVALS:
        raise PgmFormatError(f"unsupported maxval {maxval} (must be 255 or 65535)")
    dtype = _SUPPORTED_MAXVALS[maxval]
    count = width * height

    if magic == b"P5":
        # Exactly one whitespace byte separates the header from the raster.
        payload = data[offset + 1 :]
        itemsize = 2 if maxval == 65535 else 1
        if len(payload) < count * itemsize:
            raise PgmFormatError("truncated payload")
        if len(payload) > count * itemsize:
            raise PgmFormatError("trailing data after raster")
        raw = np.frombuffer(payload, dtype=">u2" if itemsize == 2 else np.uint8)
        pixels = raw.astype(dtype)
    else:
        values = []
        for tok, _ in tokens:
            try:
                values.append(int(tok))
            except ValueError:
                raise PgmFormatError(f"malformed sample {tok!r}") from None
        if len(values) < count:
            raise PgmFormatError("truncated payload")
        if len(values) > count:
            raise PgmFormatError("trailing data after raster")
        pixels = np.asarray(values, dtype=np.int64)
        if pixels.min() < 0 or pixels.max() > maxval:
            raise PgmFormatError("sample out of range")
        pixels = pixels.astype(dtype)

    return pixels.reshape(height, width)


def save_pgm(img, path, format: str = "binary") -> None:
    """Write an image as PGM, P5 (``binary``) or P2 (``ascii``).

    The file is written atomically (temp file + rename) so partially
    written images are never observed.
    """
    arr = check_gray_image(img)
    if format not in ("ascii", "binary"):
        raise ValueError(f"format must be 'ascii' or 'binary', got {format!r}")
    maxval = max_intensity(arr)
    height, width = arr.shape

    if format == "binary":
        raster = arr.astype(">u2" if maxval == 65535 else np.uint8).tobytes()
        blob = f"P5\n{width} {height}\n{maxval}\n".encode("ascii") + raster
    else:
        lines = [f"P2\n{width} {height}\n{maxval}\n"]
        for row in arr:
            lines.append(" ".join(str(int(v)) for v in row) + "\n")
        blob = "".join(lines).encode("ascii")

    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".pgm.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_field(img) -> np.ndarray:
    """Normalize an integer image to a single-channel float64 field in [-1, 1]."""
    arr = check_gray_image(img)
    maxval = max_intensity(arr)
    return 2.0 * arr.astype(np.float64) / maxval - 1.0


def quantize_gray(values: np.ndarray, bit_depth: int) -> np.ndarray:
    """Clamp to the intensity range and round half away from zero."""
    if bit_depth == 8:
        maxval, dtype = 255, np.uint8
    elif bit_depth == 16:
        maxval, dtype = 65535, np.uint16
    else:
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    clipped = np.clip(values, 0.0, float(maxval))
    # values are non-negative after the clip, so half-away-from-zero == floor(x + 0.5)
    return np.floor(clipped + 0.5).astype(dtype)


def from_field(field, bit_depth: int = 8) -> np.ndarray:
    """Quantize a single-channel field back to an integer image.

    Inverse of :func:`to_field`: field values are clamped to [-1, 1] before
    quantization, and every representable intensity round-trips exactly.
    """
    arr = check_field(field, single_channel=True)
    maxval = 255 if bit_depth == 8 else 65535
    scaled = (np.clip(arr, -1.0, 1.0) + 1.0) / 2.0 * maxval
    return quantize_gray(scaled, bit_depth)


def add_gaussian_noise(img, sigma: float, rng) -> np.ndarray:
    """Perturb each pixel by N(0, (sigma * dynamic range)**2), clamped.

    ``sigma`` is a fraction of the dynamic range; ``sigma=0`` is the
    identity. Noise is drawn elementwise in row-major order.
    """
    arr = check_gray_image(img)
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return arr.copy()
    rng = check_rng(rng)
    maxval = max_intensity(arr)
    noisy = arr.astype(np.float64) + sigma * maxval * rng.standard_normal(arr.shape)
    return quantize_gray(noisy, 8 if maxval == 255 else 16)


def synth_fixture(
    width: int,
    height: int,
    n_pores: int,
    radius_range,
    noise_sigma: float,
    rng,
    return_meta: bool = False,
):
    """Seeded synthetic rock slice: bright matrix with dark pore disks.

    Draws ``n_pores`` disks with centers uniform over the image and integer
    radii uniform in ``radius_range`` (inclusive), then adds Gaussian noise
    of standard deviation ``noise_sigma`` times the dynamic range. The
    returned mask is the noise-free pore truth. Per pore, the draw order is
    center x, center y, radius; the noise field is drawn last.

    Returns ``(image, mask)``, or ``(image, mask, meta)`` with the drawn
    disks when ``return_meta`` is set.
    """
    if width < 1 or height < 1:
        raise ValueError("width and height must be positive")
    if n_pores < 0:
        raise ValueError("n_pores must be non-negative")
    rmin, rmax = radius_range
    if not (0 < rmin <= rmax < min(width, height) / 2):
        raise ValueError(f"invalid radius range {radius_range} for {width}x{height} image")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    rng = check_rng(rng)

    maxval = 255
    matrix = int(round(MATRIX_LEVEL * maxval))
    pore = int(round(PORE_LEVEL * maxval))

    mask = np.zeros((height, width), dtype=bool)
    ys, xs = np.mgrid[0:height, 0:width]
    disks = []
    for _ in range(n_pores):
        cx = int(rng.integers(0, width))
        cy = int(rng.integers(0, height))
        r = int(rng.integers(rmin, rmax + 1))
        mask |= (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
        disks.append({"cx": cx, "cy": cy, "r": r})

    image = np.full((height, width), matrix, dtype=np.uint8)
    image[mask] = pore
    if noise_sigma > 0:
        image = add_gaussian_noise(image, noise_sigma, rng)

    if return_meta:
        meta = {
            "n_pores": n_pores,
            "radii": [d["r"] for d in disks],
            "disks": disks,
            "noise_sigma": noise_sigma,
            "matrix_intensity": matrix,
            "pore_intensity": pore,
        }
        return image, mask, meta
    return image, mask
