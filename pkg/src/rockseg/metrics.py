"""Segmentation evaluation: confusion counts, P/R/accuracy/F1, Jaccard, soft IoU loss, BCE.

Binary metrics treat ``True`` as pore. Degenerate denominators do not
raise: the affected metric takes its conventional value (0, or 1 for the
Jaccard of two empty masks) and :func:`evaluate_binary` reports which
metrics were degenerate.

The soft IoU loss follows the global-ratio form: numerator and
denominator are summed over all classes and pixels before dividing, not
averaged per class. For hard {0,1} single-class predictions it reduces
exactly to ``1 - jaccard``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .validation import DegenerateInputError, check_mask, check_same_shape

__all__ = [
    "ConfusionCounts",
    "confusion",
    "precision",
    "recall",
    "accuracy",
    "f1",
    "jaccard",
    "evaluate_binary",
    "iou_loss",
    "bce_with_logits",
    "save_soft",
    "load_soft",
]


@dataclass(frozen=True)
class ConfusionCounts:
    """Pixel counts of the binary pore/matrix confusion matrix."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(pred, truth) -> ConfusionCounts:
    """Count TP/FP/FN/TN between a predicted and a ground-truth pore mask."""
    p = check_mask(pred)
    g = check_mask(truth)
    check_same_shape(p, g, "pred and truth")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = int(np.count_nonzero(~p & ~g))
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def precision(c: ConfusionCounts) -> float:
    """TP / (TP + FP); 0 when nothing was predicted as pore."""
    denom = c.tp + c.fp
    return c.tp / denom if denom else 0.0


def recall(c: ConfusionCounts) -> float:
    """TP / (TP + FN); 0 when the truth has no pore."""
    denom = c.tp + c.fn
    return c.tp / denom if denom else 0.0


def accuracy(c: ConfusionCounts) -> float:
    """(TP + TN) / all pixels."""
    return (c.tp + c.tn) / c.total if c.total else 0.0


def f1(c: ConfusionCounts) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    p = precision(c)
    r = recall(c)
    return 2.0 * p * r / (p + r) if p + r else 0.0


def jaccard(pred, truth) -> float:
    """Intersection over union of the pore sets; 1 when both are empty."""
    c = confusion(pred, truth)
    denom = c.tp + c.fp + c.fn
    return c.tp / denom if denom else 1.0


def evaluate_binary(pred, truth) -> dict:
    """All binary metrics plus degeneracy flags, as a JSON-friendly dict."""
    c = confusion(pred, truth)
    flags = []
    if c.tp + c.fp == 0:
        flags.append("precision_no_predicted_pore")
    if c.tp + c.fn == 0:
        flags.append("recall_no_true_pore")
    if precision(c) + recall(c) == 0:
        flags.append("f1_degenerate")
    if c.tp + c.fp + c.fn == 0:
        flags.append("jaccard_both_empty")
    return {
        "tp": c.tp,
        "fp": c.fp,
        "fn": c.fn,
        "tn": c.tn,
        "precision": precision(c),
        "recall": recall(c),
        "accuracy": accuracy(c),
        "f1": f1(c),
        "jaccard": jaccard(pred, truth),
        "degeneracy_flags": flags,
    }


def _as_class_stack(arr, name: str) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    if out.ndim == 1:
        out = out[None, None, ...]
    elif out.ndim == 2:
        out = out[None, ...]
    if out.ndim != 3:
        raise ValueError(f"{name} must be (H, W) or (C, H, W), got shape {out.shape}")
    return out


def iou_loss(pred, truth) -> float:
    """Soft intersection-over-union loss, one global ratio over classes and pixels.

    ``pred`` holds per-class probabilities in [0, 1]; ``truth`` the {0, 1}
    class memberships. ``1 - loss`` is the soft IoU; a loss of 0 means
    perfect overlap.
    """
    s = _as_class_stack(pred, "pred")
    g = _as_class_stack(truth, "truth")
    if s.shape != g.shape:
        raise ValueError(f"pred shape {s.shape} does not match truth {g.shape}")
    if np.any(s < 0) or np.any(s > 1):
        raise ValueError("pred probabilities must lie in [0, 1]")
    if not np.all((g == 0) | (g == 1)):
        raise ValueError("truth memberships must be 0 or 1")
    intersection = float((g * s).sum())
    union = float((g + s - g * s).sum())
    if union == 0.0:
        raise DegenerateInputError("iou_loss undefined: empty prediction and truth")
    return 1.0 - intersection / union


def bce_with_logits(logits, targets) -> float:
    """Mean binary cross-entropy on raw logits, numerically stable.

    Uses the fused form ``max(x, 0) - x*y + log(1 + exp(-|x|))``, finite
    for arbitrarily large logits.
    """
    x = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"logits shape {x.shape} does not match targets {y.shape}")
    if np.any(y < 0) or np.any(y > 1):
        raise ValueError("targets must lie in [0, 1]")
    loss = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    return float(loss.mean())


def save_soft(path, probs) -> None:
    """Write per-class probabilities as a JSON header line plus raw float64.

    Layout: one ASCII line of JSON ``{"classes", "height", "width",
    "dtype": "<f8", "order": "chw"}`` terminated by a newline, followed by
    the channel-major array bytes (little-endian float64).
    """
    arr = _as_class_stack(probs, "probs")
    header = {
        "classes": int(arr.shape[0]),
        "height": int(arr.shape[1]),
        "width": int(arr.shape[2]),
        "dtype": "<f8",
        "order": "chw",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("ascii") + b"\n")
        fh.write(arr.astype("<f8").tobytes())


def load_soft(path) -> np.ndarray:
    """Read a soft-prediction file written by :func:`save_soft`."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("ascii"))
        shape = (header["classes"], header["height"], header["width"])
        dtype = header["dtype"]
    except (ValueError, KeyError) as exc:
        raise ValueError(f"malformed soft-prediction header: {exc}") from None
    expected = int(np.prod(shape)) * np.dtype(dtype).itemsize
    if len(payload) != expected:
        raise ValueError(
            f"soft-prediction payload has {len(payload)} bytes, expected {expected}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(shape).astype(np.float64)
