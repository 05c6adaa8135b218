"""Command-line interface: every pipeline stage as a composable subcommand.

Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 numerical
degeneracy. Stochastic subcommands require ``--seed`` and echo it in the
report; rerunning any subcommand with identical flags and seed produces
byte-identical artifacts. Reports carry the tool version, the fully
resolved parameter set, and SHA-256 checksums of the inputs, and never
embed timestamps.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .augment import PairedSample, generate_dataset
from .diffusion import (
    GaussianOraclePredictor,
    forward_jump,
    make_linear_schedule,
    recover_x0,
    sample,
)
from .filters import dual_filter, gaussian_blur, median_filter, unsharp_mask
from .image import PgmFormatError, from_field, load_pgm, save_pgm, synth_fixture, to_field
from .metrics import evaluate_binary, iou_loss, load_soft
from .morphology import morph_report
from .segmenters import (
    binarize,
    generate_markers,
    gmm_em,
    kmeans_intensity,
    otsu_threshold,
    watershed,
)
from .validation import DegenerateInputError, check_rng, max_intensity

USAGE_ERROR = 1
DATA_ERROR = 2
DEGENERATE_ERROR = 3


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit code 2; the spec wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _emit_report(report: dict, path) -> None:
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if path:
        _atomic_write_text(path, text)
    print(text, end="")


def _base_report(command: str, params: dict, inputs=()) -> dict:
    return {
        "tool": "rockseg",
        "version": __version__,
        "subcommand": command,
        "params": params,
        "inputs": {str(p): _sha256(p) for p in inputs},
    }


def _load_mask(path) -> np.ndarray:
    """Masks travel as PGM: any nonzero intensity counts as pore."""
    return load_pgm(path) > 0


def _save_mask(mask, path) -> None:
    save_pgm(np.where(mask, 255, 0).astype(np.uint8), path)


def _scale_labels(labels: np.ndarray, maxval: int) -> np.ndarray:
    """Spread label values over the gray range for PGM output."""
    k = int(labels.max())
    lo = int(labels.min())
    span = k - lo
    dtype = np.uint8 if maxval == 255 else np.uint16
    if span == 0:
        return np.zeros(labels.shape, dtype=dtype)
    return ((labels - lo) * (maxval // span)).astype(dtype)


def _parse_oracle(text: str):
    try:
        mu, sigma2 = (float(v) for v in text.split(","))
    except ValueError:
        raise ValueError(f"--oracle expects 'mu,sigma2', got {text!r}") from None
    return mu, sigma2


def _cmd_synth(args) -> dict:
    img, mask, meta = synth_fixture(
        args.width,
        args.height,
        args.n_pores,
        (args.radius_min, args.radius_max),
        args.noise_sigma,
        check_rng(args.seed),
        return_meta=True,
    )
    save_pgm(img, args.out_image, args.format)
    _save_mask(mask, args.out_mask)
    sidecar = {
        "seed": args.seed,
        "n_pores": args.n_pores,
        "radii": meta["radii"],
        "noise_sigma": args.noise_sigma,
    }
    if args.sidecar:
        _atomic_write_text(args.sidecar, json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    report = _base_report(
        "synth",
        {
            "width": args.width,
            "height": args.height,
            "n_pores": args.n_pores,
            "radius_min": args.radius_min,
            "radius_max": args.radius_max,
            "noise_sigma": args.noise_sigma,
            "format": args.format,
        },
    )
    report["seed"] = args.seed
    report["fixture"] = sidecar | {"disks": meta["disks"]}
    report["outputs"] = {"image": args.out_image, "mask": args.out_mask}
    return report


def _cmd_denoise(args) -> dict:
    img = load_pgm(args.input)
    if args.method == "median":
        out = median_filter(img, args.window)
    elif args.method == "gaussian":
        out = gaussian_blur(img, args.sigma)
    elif args.method == "unsharp":
        out = unsharp_mask(img, args.sigma, args.amount)
    else:
        out = dual_filter(img, args.sigma, args.amount, args.window)
    save_pgm(out, args.output, args.format)
    report = _base_report(
        "denoise",
        {
            "method": args.method,
            "window": args.window,
            "sigma": args.sigma,
            "amount": args.amount,
            "format": args.format,
        },
        [args.input],
    )
    report["outputs"] = {"image": args.output}
    return report


def _cmd_segment(args) -> dict:
    img = load_pgm(args.input)
    maxval = max_intensity(img)
    params = {
        "method": args.method,
        "k": args.k,
        "low_q": args.low_q,
        "high_q": args.high_q,
        "tol": args.tol,
        "max_iter": args.max_iter,
        "pore_is_dark": args.pore_is_dark,
        "format": args.format,
    }
    report = _base_report("segment", params, [args.input])

    if args.method == "otsu":
        threshold = otsu_threshold(img)
        labels = (img > threshold).astype(np.int32)
        report["threshold"] = threshold
        report["pore_class"] = 0 if args.pore_is_dark else 1
    elif args.method == "kmeans":
        labels, centroids, info = kmeans_intensity(img, args.k, args.max_iter, args.tol)
        report["centroids"] = [float(c) for c in centroids]
        report["iterations"] = info["n_iter"]
    elif args.method == "gmm":
        gmm, labels, trace = gmm_em(img, args.k, args.max_iter, args.tol)
        report["weights"] = [float(w) for w in gmm.weights]
        report["means"] = [float(m) for m in gmm.means]
        report["variances"] = [float(v) for v in gmm.variances]
        report["iterations"] = len(trace)
        report["loglik"] = float(trace[-1])
    else:
        markers = generate_markers(img, args.low_q, args.high_q)
        labels = watershed(img, markers)
        report["marker_counts"] = {
            "pore_seeds": int(np.count_nonzero(markers == 1)),
            "matrix_seeds": int(np.count_nonzero(markers == 2)),
        }

    save_pgm(_scale_labels(labels, maxval), args.output, args.format)
    report["outputs"] = {"labels": args.output}
    return report


def _cmd_metrics(args) -> dict:
    pred = _load_mask(args.pred)
    truth = _load_mask(args.truth)
    inputs = [args.pred, args.truth] + ([args.soft] if args.soft else [])
    report = _base_report("metrics", {"soft": args.soft}, inputs)
    report.update(evaluate_binary(pred, truth))
    if args.soft:
        probs = load_soft(args.soft)
        if probs.shape[1:] != truth.shape:
            raise ValueError(
                f"soft prediction {probs.shape[1:]} does not match truth {truth.shape}"
            )
        if probs.shape[0] == 1:
            onehot = truth[None].astype(np.float64)
        elif probs.shape[0] == 2:
            onehot = np.stack([truth, ~truth]).astype(np.float64)
        else:
            raise ValueError("binary truth supports soft predictions with 1 or 2 classes")
        report["iou_loss"] = iou_loss(probs, onehot)
    return report


def _cmd_morph(args) -> dict:
    report = _base_report("morph", {"min_pixels": args.min_pixels}, args.mask)
    rows = {}
    for path in args.mask:
        rows[str(path)] = morph_report(_load_mask(path), args.min_pixels).as_dict()
    report["reports"] = rows
    if args.csv:
        fields = [
            "mask",
            "porosity",
            "component_count",
            "largest_component_fraction",
            "mean_aspect_ratio",
            "fractal_dimension",
            "fit_r2",
            "excluded_small_components",
        ]
        tmp = f"{args.csv}.tmp"
        with open(tmp, "w", newline="", encoding="ascii") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for path, rep in rows.items():
                writer.writerow({"mask": path} | {k: rep[k] for k in fields[1:]})
        os.replace(tmp, args.csv)
    return report


def _cmd_diffuse(args) -> dict:
    sched = make_linear_schedule(args.T, args.beta_start, args.beta_end)
    params = {
        "mode": args.mode,
        "t": args.t,
        "T": args.T,
        "beta_start": args.beta_start,
        "beta_end": args.beta_end,
        "format": args.format,
    }
    rng = check_rng(args.seed)
    if args.mode == "forward":
        if not args.input:
            raise ValueError("forward mode requires --input")
        if args.t is None:
            raise ValueError("forward mode requires --t")
        img = load_pgm(args.input)
        bit_depth = 8 if max_intensity(img) == 255 else 16
        x_t, _ = forward_jump(to_field(img), args.t, sched, rng=rng)
        save_pgm(from_field(x_t, bit_depth), args.output, args.format)
        report = _base_report("diffuse", params, [args.input])
    else:
        mu, sigma2 = _parse_oracle(args.oracle)
        predictor = GaussianOraclePredictor(mu, sigma2, sched)
        field = sample((args.height, args.width), predictor, sched, rng)
        save_pgm(from_field(field, 8), args.output, args.format)
        params["oracle"] = {"mu0": mu, "sigma0_sq": sigma2}
        params["width"], params["height"] = args.width, args.height
        report = _base_report("diffuse", params)
    report["seed"] = args.seed
    report["schedule"] = {
        "T": sched.T,
        "beta_start": float(sched.beta[0]),
        "beta_end": float(sched.beta[-1]),
        "alpha_bar_T": float(sched.alpha_bar[-1]),
    }
    report["outputs"] = {"image": args.output}
    return report


def _find_pairs(in_dir):
    names = sorted(n for n in os.listdir(in_dir) if n.endswith("_img.pgm"))
    pairs = []
    for name in names:
        mask_name = name[: -len("_img.pgm")] + "_mask.pgm"
        mask_path = os.path.join(in_dir, mask_name)
        if not os.path.exists(mask_path):
            raise FileNotFoundError(f"no mask {mask_name} for image {name}")
        pairs.append((os.path.join(in_dir, name), mask_path))
    if not pairs:
        raise FileNotFoundError(f"no *_img.pgm files in {in_dir}")
    return pairs


def _cmd_augment(args) -> dict:
    pair_paths = _find_pairs(args.in_dir)
    samples = [PairedSample(load_pgm(ip), _load_mask(mp)) for ip, mp in pair_paths]
    sched = make_linear_schedule(args.T, args.beta_start, args.beta_end)
    t_mix = args.t_mix if args.t_mix is not None else max(1, args.T // 4)

    if args.oracle:
        mu, sigma2 = _parse_oracle(args.oracle)
    else:
        # Default oracle: moments of the input image fields.
        fields = np.concatenate([to_field(s.image).ravel() for s in samples])
        mu = float(fields.mean())
        sigma2 = max(float(fields.var()), 1e-6)
    predictor = GaussianOraclePredictor(mu, sigma2, sched)

    manifest = generate_dataset(
        samples,
        args.n,
        t_mix,
        predictor,
        sched,
        args.seed,
        args.out_dir,
        classical_only=args.classical_only,
    )
    report = _base_report(
        "augment",
        {
            "in": args.in_dir,
            "out": args.out_dir,
            "n": args.n,
            "t_mix": t_mix,
            "T": args.T,
            "beta_start": args.beta_start,
            "beta_end": args.beta_end,
            "classical_only": args.classical_only,
            "oracle": {"mu0": mu, "sigma0_sq": sigma2},
        },
        [p for pair in pair_paths for p in pair],
    )
    report["seed"] = args.seed
    report["manifest"] = manifest
    return report


def _selftest_inversion() -> str:
    rng = check_rng(20240501)
    sched = make_linear_schedule(50)
    worst = 0.0
    for _ in range(50):
        x0 = rng.standard_normal((16, 16))
        t = int(rng.integers(1, sched.T + 1))
        x_t, eps = forward_jump(x0, t, sched, rng=rng)
        rec = recover_x0(x_t, t, eps, sched)
        worst = max(worst, float(np.max(np.abs(rec - x0)) / np.max(np.abs(x0))))
    if worst > 1e-10:
        raise DegenerateInputError(f"jump inversion identity violated: {worst:.3e}")
    return f"jump inversion identity (worst relative error {worst:.2e})"


def _selftest_merge() -> str:
    rng = check_rng(20240502)
    sched = make_linear_schedule(200)
    n = 100_000
    for _ in range(5):
        t = int(rng.integers(2, sched.T + 1))
        a_t = sched.alpha[t - 1]
        a_p = sched.alpha[t - 2]
        total = np.sqrt(a_t - a_t * a_p) * rng.standard_normal(n)
        total += np.sqrt(1.0 - a_t) * rng.standard_normal(n)
        target = 1.0 - a_t * a_p
        var = float(total.var())
        se = target * np.sqrt(2.0 / (n - 1))
        if abs(var - target) > 3 * se:
            raise DegenerateInputError(
                f"merged-noise variance {var:.6f} not within 3 SE of {target:.6f}"
            )
    return "two-noise Gaussian merge variance (5 random steps, 1e5 draws)"


def _selftest_otsu() -> str:
    rng = check_rng(20240503)
    for _ in range(20):
        hist = rng.integers(0, 50, size=256)
        hist[int(rng.integers(0, 256))] += 500
        pixels = np.repeat(np.arange(256, dtype=np.uint8), hist)
        if len(np.unique(pixels)) < 2:
            continue
        img = pixels.reshape(1, -1)
        got = otsu_threshold(img)
        # independent exhaustive search with per-threshold recomputation
        best_t, best = -1, (-1, 1)
        counts = [int(c) for c in hist]
        for t in range(255):
            n0 = sum(counts[: t + 1])
            n1 = sum(counts[t + 1 :])
            if n0 == 0 or n1 == 0:
                continue
            s0 = sum(v * c for v, c in enumerate(counts[: t + 1]))
            s1 = sum(v * c for v, c in enumerate(counts)) - s0
            num = (s0 * n1 - s1 * n0) ** 2
            den = n0 * n1
            if num * best[1] > best[0] * den:
                best_t, best = t, (num, den)
        if got != best_t:
            raise DegenerateInputError(f"otsu mismatch: {got} vs exhaustive {best_t}")
    return "otsu threshold vs exhaustive between-class variance (20 histograms)"


def _cmd_selftest(args) -> dict:
    checks = [_selftest_inversion, _selftest_merge, _selftest_otsu]
    results = []
    for check in checks:
        message = check()
        results.append(message)
        print(f"selftest ok: {message}")
    report = _base_report("selftest", {})
    report["checks"] = results
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rockseg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rockseg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    def add_report(p):
        p.add_argument("--report", help="write the JSON report here as well as stdout")

    def add_format(p):
        p.add_argument(
            "--format", choices=("ascii", "binary"), default="binary", help="PGM flavor"
        )

    p = sub.add_parser("synth", help="generate a seeded synthetic fixture pair")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--n-pores", type=int, default=8)
    p.add_argument("--radius-min", type=int, default=3)
    p.add_argument("--radius-max", type=int, default=9)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-image", required=True)
    p.add_argument("--out-mask", required=True)
    p.add_argument("--sidecar", help="write fixture metadata JSON here")
    add_format(p)
    add_report(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("denoise", help="median/gaussian/unsharp/dual filtering")
    p.add_argument("--method", choices=("median", "gaussian", "unsharp", "dual"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--window", type=int, default=3)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--amount", type=float, default=1.0)
    add_format(p)
    add_report(p)
    p.set_defaults(func=_cmd_denoise)

    p = sub.add_parser("segment", help="otsu/kmeans/gmm/watershed baselines")
    p.add_argument("--method", choices=("otsu", "kmeans", "gmm", "watershed"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--low-q", type=float, default=0.1)
    p.add_argument("--high-q", type=float, default=0.9)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--pore-is-dark", action=argparse.BooleanOptionalAction, default=True)
    add_format(p)
    add_report(p)
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("metrics", help="score a predicted mask against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--soft", help="soft-prediction file for the IoU loss")
    add_report(p)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("morph", help="morphological report of one or more masks")
    p.add_argument("--mask", nargs="+", required=True)
    p.add_argument("--min-pixels", type=int, default=5)
    p.add_argument("--csv", help="also write one CSV row per mask")
    add_report(p)
    p.set_defaults(func=_cmd_morph)

    p = sub.add_parser("diffuse", help="forward noising or oracle-driven sampling")
    p.add_argument("--mode", choices=("forward", "sample"), required=True)
    p.add_argument("--input")
    p.add_argument("--output", required=True)
    p.add_argument("--t", type=int, help="target step for forward mode")
    p.add_argument("--T", type=int, default=1000)
    p.add_argument("--beta-start", type=float, default=1e-4)
    p.add_argument("--beta-end", type=float, default=0.02)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--oracle", default="0.0,1.0", help="mu,sigma2 of the Gaussian oracle")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    add_format(p)
    add_report(p)
    p.set_defaults(func=_cmd_diffuse)

    p = sub.add_parser("augment", help="generate an augmented paired dataset")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t-mix", type=int, help="partial noising depth (default T/4)")
    p.add_argument("--T", type=int, default=1000)
    p.add_argument("--beta-start", type=float, default=1e-4)
    p.add_argument("--beta-end", type=float, default=0.02)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--classical-only", action="store_true")
    p.add_argument("--oracle", help="mu,sigma2 (default: estimated from the inputs)")
    add_report(p)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("selftest", help="run the built-in analytic oracle suites")
    add_report(p)
    p.set_defaults(func=_cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        report = args.func(args)
    except DegenerateInputError as exc:
        print(f"rockseg: {exc}", file=sys.stderr)
        return DEGENERATE_ERROR
    except (PgmFormatError, OSError, ValueError) as exc:
        print(f"rockseg: {exc}", file=sys.stderr)
        return DATA_ERROR
    _emit_report(report, args.report)
    return 0


if __name__ == "__main__":
    sys.exit(main())
