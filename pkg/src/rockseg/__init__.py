"""rockseg: digital-rock image segmentation, diffusion augmentation, and morphology.

Desk-scale toolkit for porous-media image analysis: bit-exact PGM I/O,
denoising pre-filters, classical segmentation baselines (Otsu, k-means,
GMM, watershed), the forward/reverse diffusion machinery used for paired
image+mask augmentation, segmentation metrics, and pore morphology
estimation. Everything stochastic is driven by explicit PCG64 generators,
so seeded runs reproduce byte-for-byte.
"""

from .augment import (
    PairedSample,
    diffusion_augment,
    generate_dataset,
    hflip,
    random_augment,
    rotate90,
    vflip,
)
from .diffusion import (
    GaussianOraclePredictor,
    NoisePredictor,
    StoredNoisePredictor,
    VarianceSchedule,
    forward_jump,
    forward_step,
    make_linear_schedule,
    recover_x0,
    reverse_step,
    sample,
)
from .filters import (
    DualFilter,
    GaussianBlur,
    MedianFilter,
    UnsharpMask,
    dual_filter,
    gaussian_blur,
    median_filter,
    unsharp_mask,
)
from .image import (
    PgmFormatError,
    add_gaussian_noise,
    from_field,
    load_pgm,
    save_pgm,
    synth_fixture,
    to_field,
)
from .metrics import (
    ConfusionCounts,
    accuracy,
    bce_with_logits,
    confusion,
    evaluate_binary,
    f1,
    iou_loss,
    jaccard,
    precision,
    recall,
)
from .morphology import (
    MorphReport,
    aspect_ratios,
    connectivity,
    fractal_dimension,
    label_components,
    morph_report,
    porosity,
)
from .segmenters import (
    GmmParams,
    GmmSegmenter,
    KMeansSegmenter,
    OtsuSegmenter,
    WatershedSegmenter,
    binarize,
    generate_markers,
    gmm_em,
    kmeans_intensity,
    otsu_threshold,
    watershed,
)
from .validation import DegenerateInputError, check_rng, spawn_rng

__version__ = "0.1.0"
