"""Paired (image, mask) augmentation: dihedral transforms and diffusion mixing.

Classical transforms are pixel permutations applied identically to both
channels, so porosity and the intensity histogram are preserved exactly
and the pair never desynchronizes. Diffusion augmentation stacks the
normalized image and the mask (encoded as -1/+1) into a two-channel
field, partially noises it to ``t_mix``, and denoises back with a noise
predictor; the mask channel is re-binarized at 0, the midpoint of the
field range.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .diffusion import NoisePredictor, VarianceSchedule, forward_jump, reverse_step
from .image import from_field, save_pgm, to_field
from .validation import check_gray_image, check_mask, check_rng, check_same_shape, spawn_rng

__all__ = [
    "PairedSample",
    "rotate90",
    "hflip",
    "vflip",
    "random_augment",
    "diffusion_augment",
    "generate_dataset",
]


@dataclass(frozen=True)
class PairedSample:
    """A grayscale image with its aligned binary pore mask."""

    image: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        img = check_gray_image(self.image)
        mask = check_mask(self.mask)
        check_same_shape(img, mask, "image and mask")
        object.__setattr__(self, "image", img)
        object.__setattr__(self, "mask", mask)


def rotate90(sample: PairedSample, quarter_turns: int) -> PairedSample:
    """Rotate image and mask together by counterclockwise quarter turns."""
    k = quarter_turns % 4
    return PairedSample(np.rot90(sample.image, k), np.rot90(sample.mask, k))


def hflip(sample: PairedSample) -> PairedSample:
    """Mirror across the vertical axis (left-right)."""
    return PairedSample(np.fliplr(sample.image), np.fliplr(sample.mask))


def vflip(sample: PairedSample) -> PairedSample:
    """Mirror across the horizontal axis (top-bottom)."""
    return PairedSample(np.flipud(sample.image), np.flipud(sample.mask))


def random_augment(sample: PairedSample, rng) -> PairedSample:
    """Uniform random dihedral transform: quarter turns plus a flip coin.

    Draws the turn count from {0..3}, then an independent horizontal-flip
    coin, covering all 8 dihedral outcomes with equal probability.
    """
    rng = check_rng(rng)
    turns = int(rng.integers(0, 4))
    flip = bool(rng.integers(0, 2))
    out = rotate90(sample, turns)
    return hflip(out) if flip else out


def diffusion_augment(
    sample: PairedSample,
    t_mix: int,
    predictor: NoisePredictor,
    sched: VarianceSchedule,
    rng,
) -> PairedSample:
    """Regenerate a pair through a partial forward/reverse diffusion cycle.

    The mask rides as a second channel encoded {False, True} -> {-1, +1};
    ``t_mix`` controls how much structure is kept (small values perturb
    texture, large values approach free generation). The image channel is
    re-quantized at the input bit depth and the mask channel re-binarized
    at 0.
    """
    t_mix = sched.check_step(t_mix)
    rng = check_rng(rng)
    bit_depth = 8 if sample.image.dtype == np.uint8 else 16
    field = np.stack([to_field(sample.image), np.where(sample.mask, 1.0, -1.0)])
    x, _ = forward_jump(field, t_mix, sched, rng=rng)
    for t in range(t_mix, 0, -1):
        x = reverse_step(x, t, predictor, sched, rng)
    return PairedSample(from_field(x[0], bit_depth), x[1] > 0.0)


def generate_dataset(
    samples,
    n_out: int,
    t_mix: int,
    predictor: NoisePredictor,
    sched: VarianceSchedule,
    seed: int,
    out_dir,
    classical_only: bool = False,
) -> dict:
    """Write ``n_out`` augmented pairs plus a JSON manifest to ``out_dir``.

    Output ``i`` is produced from the independent substream
    ``spawn_rng(seed, i)``, which first draws the source index and then
    drives the augmentation; outputs are order-independent and byte-stable
    for a given seed. Files are named ``NNNN_img.pgm`` / ``NNNN_mask.pgm``.
    With ``classical_only`` the diffusion cycle is replaced by a random
    dihedral transform.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("generate_dataset needs at least one input sample")
    if n_out < 0:
        raise ValueError(f"n_out must be non-negative, got {n_out}")
    os.makedirs(out_dir, exist_ok=True)

    entries = []
    for i in range(n_out):
        rng = spawn_rng(seed, i)
        src = int(rng.integers(0, len(samples)))
        if classical_only:
            out = random_augment(samples[src], rng)
        else:
            out = diffusion_augment(samples[src], t_mix, predictor, sched, rng)
        img_name = f"{i:04d}_img.pgm"
        mask_name = f"{i:04d}_mask.pgm"
        save_pgm(out.image, os.path.join(out_dir, img_name))
        mask_img = np.where(out.mask, 255, 0).astype(np.uint8)
        save_pgm(mask_img, os.path.join(out_dir, mask_name))
        entries.append({"index": i, "source": src, "image": img_name, "mask": mask_name})

    manifest = {
        "seed": int(seed),
        "t_mix": None if classical_only else int(t_mix),
        "classical_only": bool(classical_only),
        "n_out": int(n_out),
        "outputs": entries,
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    tmp = manifest_path + ".tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, manifest_path)
    return manifest
