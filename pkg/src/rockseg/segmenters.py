"""Classical baseline segmenters: Otsu, intensity k-means, GMM via EM, watershed.

All segmenters are deterministic: clustering runs on the intensity
histogram with quantile initialization rather than random restarts, so the
same image always yields the same labels. Labels are ordered by ascending
cluster centroid/mean, which for rock CT puts the dark pore phase at
label 0.

Plain functions carry the algorithms; thin sklearn-style estimator
wrappers (``fit``/``predict``/``get_params``) follow at the bottom.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator

from .validation import (
    DegenerateInputError,
    check_gray_image,
    check_same_shape,
    max_intensity,
)

__all__ = [
    "GmmParams",
    "otsu_threshold",
    "binarize",
    "kmeans_intensity",
    "gmm_em",
    "generate_markers",
    "watershed",
    "OtsuSegmenter",
    "KMeansSegmenter",
    "GmmSegmenter",
    "WatershedSegmenter",
]

# Relative variance floor for EM, as a fraction of the dynamic range.
GMM_VARIANCE_FLOOR_FRACTION = 1e-4


def _histogram(arr: np.ndarray) -> np.ndarray:
    return np.bincount(arr.ravel(), minlength=max_intensity(arr) + 1)


def otsu_threshold(img) -> int:
    """Threshold maximizing the between-class intensity variance.

    Convention: pixels ``<= t`` form class 0. The maximization runs in
    exact integer arithmetic, so ties are broken by the smallest ``t``
    without floating-point ambiguity.

    Raises
    ------
    DegenerateInputError
        If the image contains fewer than two distinct intensities.
    """
    arr = check_gray_image(img)
    hist = _histogram(arr)
    if np.count_nonzero(hist) < 2:
        raise DegenerateInputError("degenerate histogram: fewer than two distinct intensities")

    counts = [int(c) for c in hist]
    total = sum(counts)
    total_sum = sum(v * c for v, c in enumerate(counts))

    # Between-class variance at threshold t is proportional to
    # (s0*n1 - s1*n0)^2 / (n0*n1); compare candidates by cross-multiplying.
    best_t = -1
    best_num = -1
    best_den = 1
    n0 = 0
    s0 = 0
    for t in range(len(counts) - 1):
        n0 += counts[t]
        s0 += t * counts[t]
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        s1 = total_sum - s0
        num = (s0 * n1 - s1 * n0) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def binarize(img, threshold: int, pore_is_dark: bool = True) -> np.ndarray:
    """Threshold an image to a pore mask; pores are the dark phase in CT."""
    arr = check_gray_image(img)
    if pore_is_dark:
        return arr <= threshold
    return arr > threshold


def _intensity_quantile(hist: np.ndarray, q: float) -> int:
    """Smallest intensity whose cumulative pixel count reaches fraction ``q``."""
    cum = np.cumsum(hist)
    return int(np.searchsorted(cum, q * cum[-1], side="left"))


def kmeans_intensity(img, k: int, max_iter: int = 100, tol: float = 1e-4):
    """Lloyd's algorithm on the intensity histogram.

    Centroid ``i`` starts at the ``(i + 0.5) / k`` intensity quantile;
    assignment ties go to the lower-index (smaller) centroid; iteration
    stops when the largest centroid move drops below ``tol``. Output labels
    are ordered by ascending centroid. An empty cluster keeps its previous
    centroid.

    Returns ``(labels, centroids, info)`` where ``info`` carries the
    iteration count and the within-cluster sum-of-squares trace.
    """
    arr = check_gray_image(img)
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    hist = _histogram(arr)
    occupied = np.nonzero(hist)[0]
    if len(occupied) < k:
        raise DegenerateInputError(
            f"k={k} exceeds the {len(occupied)} distinct intensities present"
        )
    values = occupied.astype(np.float64)
    weights = hist[occupied].astype(np.float64)

    centroids = np.array(
        [float(_intensity_quantile(hist, (i + 0.5) / k)) for i in range(k)]
    )

    trace = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        assign = np.argmin(np.abs(values[:, None] - centroids[None, :]), axis=1)
        new_centroids = centroids.copy()
        for i in range(k):
            sel = assign == i
            mass = weights[sel].sum()
            if mass > 0:
                new_centroids[i] = (weights[sel] * values[sel]).sum() / mass
        move = float(np.max(np.abs(new_centroids - centroids)))
        centroids = new_centroids
        trace.append(float((weights * (values - centroids[assign]) ** 2).sum()))
        if move < tol:
            break

    order = np.argsort(centroids, kind="stable")
    centroids = centroids[order]
    assign = np.argmin(np.abs(values[:, None] - centroids[None, :]), axis=1)

    lut = np.zeros(len(hist), dtype=np.int32)
    lut[occupied] = assign
    labels = lut[arr]
    info = {"n_iter": n_iter, "objective_trace": np.asarray(trace)}
    return labels, centroids, info


@dataclass(frozen=True)
class GmmParams:
    """1-D Gaussian mixture over intensities."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        m = np.asarray(self.means, dtype=np.float64)
        v = np.asarray(self.variances, dtype=np.float64)
        if not (w.shape == m.shape == v.shape) or w.ndim != 1:
            raise ValueError("weights, means, variances must be 1-D and equally sized")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be non-negative and sum to 1")
        if np.any(v <= 0):
            raise ValueError("variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def k(self) -> int:
        return len(self.weights)


def _log_responsibilities(values: np.ndarray, params: GmmParams):
    """Per-value log joint densities, shape (n_values, k)."""
    w, m, v = params.weights, params.means, params.variances
    with np.errstate(divide="ignore"):
        log_w = np.log(w)
    return (
        log_w[None, :]
        - 0.5 * np.log(2.0 * np.pi * v)[None, :]
        - (values[:, None] - m[None, :]) ** 2 / (2.0 * v[None, :])
    )


def gmm_em(img, k: int, max_iter: int = 200, tol: float = 1e-8):
    """Histogram-weighted EM for a 1-D Gaussian mixture of intensities.

    Initialization comes from :func:`kmeans_intensity` (deterministic), so
    EM itself is deterministic. Variances are floored at
    ``(1e-4 * dynamic range)**2`` to prevent component collapse. Components
    are reported in ascending-mean order and labels are the argmax
    responsibility, ties to the lower index.

    Returns ``(params, labels, loglik_trace)``; the trace is non-decreasing
    up to 1e-9 floating-point slack.
    """
    arr = check_gray_image(img)
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    hist = _histogram(arr)
    occupied = np.nonzero(hist)[0]
    if len(occupied) < k:
        raise DegenerateInputError(
            f"degenerate input: k={k} exceeds the {len(occupied)} distinct intensities present"
        )
    values = occupied.astype(np.float64)
    weights = hist[occupied].astype(np.float64)
    total = weights.sum()
    floor = (GMM_VARIANCE_FLOOR_FRACTION * max_intensity(arr)) ** 2

    _, centroids, _ = kmeans_intensity(img, k)
    assign = np.argmin(np.abs(values[:, None] - centroids[None, :]), axis=1)
    mix_w = np.empty(k)
    mix_m = centroids.copy()
    mix_v = np.empty(k)
    for i in range(k):
        sel = assign == i
        mass = weights[sel].sum()
        mix_w[i] = mass / total
        if mass > 0:
            mix_m[i] = (weights[sel] * values[sel]).sum() / mass
            mix_v[i] = (weights[sel] * (values[sel] - mix_m[i]) ** 2).sum() / mass
        else:
            mix_v[i] = floor
    mix_v = np.maximum(mix_v, floor)
    params = GmmParams(mix_w, mix_m, mix_v)

    trace = []
    for _ in range(max_iter):
        log_joint = _log_responsibilities(values, params)
        log_norm = logsumexp(log_joint, axis=1)
        loglik = float((weights * log_norm).sum())
        trace.append(loglik)

        resp = np.exp(log_joint - log_norm[:, None])
        resp_mass = weights[:, None] * resp
        comp_mass = resp_mass.sum(axis=0)
        new_w = comp_mass / total
        new_m = params.means.copy()
        new_v = params.variances.copy()
        alive = comp_mass > 0
        new_m[alive] = (resp_mass[:, alive] * values[:, None]).sum(axis=0) / comp_mass[alive]
        new_v[alive] = (resp_mass[:, alive] * (values[:, None] - new_m[None, alive]) ** 2).sum(
            axis=0
        ) / comp_mass[alive]
        params = GmmParams(new_w, new_m, np.maximum(new_v, floor))

        if len(trace) >= 2 and trace[-1] - trace[-2] < tol:
            break

    order = np.argsort(params.means, kind="stable")
    params = GmmParams(params.weights[order], params.means[order], params.variances[order])

    assign = np.argmax(_log_responsibilities(values, params), axis=1)
    lut = np.zeros(len(hist), dtype=np.int32)
    lut[occupied] = assign
    labels = lut[arr]
    return params, labels, np.asarray(trace)


def generate_markers(img, low_quantile: float, high_quantile: float) -> np.ndarray:
    """Seed labels for watershed: 1 in the dark tail, 2 in the bright tail.

    Label 1 marks pixels at or below the ``low_quantile`` intensity (pore
    seeds), label 2 those at or above the ``high_quantile`` intensity
    (matrix seeds), and 0 the undecided middle.
    """
    arr = check_gray_image(img)
    if not (0.0 < low_quantile < high_quantile < 1.0):
        raise ValueError(
            f"quantiles must satisfy 0 < low < high < 1, got {low_quantile}, {high_quantile}"
        )
    hist = _histogram(arr)
    v_low = _intensity_quantile(hist, low_quantile)
    v_high = _intensity_quantile(hist, high_quantile)
    if v_low >= v_high:
        raise DegenerateInputError(
            f"degenerate quantiles: low and high bands overlap at intensity {v_low}"
        )
    markers = np.zeros(arr.shape, dtype=np.int32)
    markers[arr <= v_low] = 1
    markers[arr >= v_high] = 2
    return markers


def watershed(topography, markers) -> np.ndarray:
    """Priority-flood watershed from labeled markers over an intensity map.

    All marked pixels enter a min-priority queue keyed by (intensity,
    insertion sequence); popped pixels claim their unlabeled 4-neighbors.
    The insertion-sequence key makes plateau ties deterministic. Every
    pixel ends up with exactly one nonzero label.
    """
    topo = check_gray_image(topography)
    marks = np.asarray(markers)
    if not np.issubdtype(marks.dtype, np.integer):
        raise ValueError(f"markers must be an integer label map, got dtype {marks.dtype}")
    check_same_shape(topo, marks, "topography and markers")
    if np.any(marks < 0):
        raise ValueError("marker labels must be non-negative")
    if not np.any(marks > 0):
        raise ValueError("no markers: at least one nonzero label is required")

    height, width = topo.shape
    out = marks.astype(np.int32).copy()
    heap = []
    seq = 0
    for y in range(height):
        for x in range(width):
            label = out[y, x]
            if label != 0:
                heapq.heappush(heap, (int(topo[y, x]), seq, y, x, int(label)))
                seq += 1

    while heap:
        _, _, y, x, label = heapq.heappop(heap)
        for ny, nx in ((y - 1, x), (y, x - 1), (y, x + 1), (y + 1, x)):
            if 0 <= ny < height and 0 <= nx < width and out[ny, nx] == 0:
                out[ny, nx] = label
                heapq.heappush(heap, (int(topo[ny, nx]), seq, ny, nx, label))
                seq += 1
    return out


class OtsuSegmenter(BaseEstimator):
    """Binary pore/matrix segmentation by Otsu's threshold."""

    def __init__(self, pore_is_dark: bool = True):
        self.pore_is_dark = pore_is_dark

    def fit(self, X, y=None):
        self.threshold_ = otsu_threshold(X)
        return self

    def predict(self, X):
        return binarize(X, self.threshold_, self.pore_is_dark)

    def fit_predict(self, X, y=None):
        return self.fit(X).predict(X)


class KMeansSegmenter(BaseEstimator):
    """Intensity k-means with deterministic quantile initialization."""

    def __init__(self, k: int = 2, max_iter: int = 100, tol: float = 1e-4):
        self.k = k
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        labels, centroids, info = kmeans_intensity(X, self.k, self.max_iter, self.tol)
        self.labels_ = labels
        self.cluster_centers_ = centroids
        self.n_iter_ = info["n_iter"]
        return self

    def predict(self, X):
        arr = check_gray_image(X)
        c = self.cluster_centers_
        flat = np.argmin(np.abs(arr.astype(np.float64).ravel()[:, None] - c[None, :]), axis=1)
        return flat.reshape(arr.shape).astype(np.int32)

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_


class GmmSegmenter(BaseEstimator):
    """Gaussian-mixture segmentation of the intensity histogram via EM."""

    def __init__(self, k: int = 2, max_iter: int = 200, tol: float = 1e-8):
        self.k = k
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        params, labels, trace = gmm_em(X, self.k, self.max_iter, self.tol)
        self.params_ = params
        self.weights_ = params.weights
        self.means_ = params.means
        self.variances_ = params.variances
        self.labels_ = labels
        self.loglik_trace_ = trace
        return self

    def predict(self, X):
        arr = check_gray_image(X)
        values = arr.astype(np.float64).ravel()
        log_joint = _log_responsibilities(values, self.params_)
        return np.argmax(log_joint, axis=1).reshape(arr.shape).astype(np.int32)

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_


class WatershedSegmenter(BaseEstimator):
    """Marker-based watershed with quantile-derived seeds.

    Carries no fitted state: markers are derived from the image being
    segmented, so ``predict`` alone does the work.
    """

    def __init__(self, low_quantile: float = 0.1, high_quantile: float = 0.9):
        self.low_quantile = low_quantile
        self.high_quantile = high_quantile

    def fit(self, X, y=None):
        check_gray_image(X)
        return self

    def predict(self, X):
        markers = generate_markers(X, self.low_quantile, self.high_quantile)
        return watershed(X, markers)

    def fit_predict(self, X, y=None):
        return self.fit(X).predict(X)
