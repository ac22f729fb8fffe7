"""Rate-distortion evaluation: run a codec over an image set, score every
iteration, and aggregate into curve rows."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import codec as codec_mod
from . import tensor as T
from .codec import run_iterations
from .errors import UsageError
from .images import pad_image, to_signed, to_uint8
from .metrics import METRICS, RdRow, curve_from_rows
from .params import content_hash
from .tensor import Tensor


@dataclass(frozen=True)
class ImageResult:
    image_id: str
    iteration: int
    metric: str
    bpp_raw: float
    bpp_coded: float  # nan when not entropy-coded
    quality: float


def _evaluate_one(image_id, pixels, model, iterations, entropy_model, metric_names, msssim_scales):
    arch = model.arch
    h0, w0 = pixels.shape[:2]
    padded, _ = pad_image(pixels, arch.pad_multiple)
    x = Tensor(to_signed(padded, dtype=arch.np_dtype)[None])
    with T.no_grad():
        trace = run_iterations(model, x, iterations=iterations, binarize="deterministic")
    bits_per_iter = int(np.prod(trace.codes[0].data.shape[1:]))
    coded_prefix = None
    if entropy_model is not None:
        _, offsets = entropy_model.encode([c.data for c in trace.codes])
        coded_prefix = offsets
    results = []
    pixel_count = h0 * w0
    for t in range(iterations):
        recon = to_uint8(trace.reconstructions[t].data[0])[:h0, :w0]
        bpp_raw = bits_per_iter * (t + 1) / pixel_count
        bpp_coded = coded_prefix[t] * 8 / pixel_count if coded_prefix else math.nan
        for name in metric_names:
            fn = METRICS[name]
            q = fn(pixels, recon, scales=msssim_scales) if name == "msssim" else fn(pixels, recon)
            results.append(ImageResult(image_id, t + 1, name, bpp_raw, bpp_coded, q))
    return results


def evaluate_images(model, images, iterations=None, entropy_model=None,
                    metrics=("msssim", "psnr"), msssim_scales=5, workers=1):
    """Per-image, per-iteration metric results.

    ``images`` is a list of (image_id, uint8 RGB array) pairs.  Images are
    evaluated in parallel worker threads; result order is deterministic
    (sorted by image id, then iteration).
    """
    if not images:
        raise UsageError("no images to evaluate")
    k = iterations or model.arch.iterations
    for name in metrics:
        if name not in METRICS:
            raise UsageError(f"unknown metric {name!r}; have {sorted(METRICS)}")

    def job(item):
        image_id, pixels = item
        return _evaluate_one(image_id, pixels, model, k, entropy_model, metrics, msssim_scales)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(job, images))
    else:
        chunks = [job(item) for item in images]
    flat = [r for chunk in chunks for r in chunk]
    return sorted(flat, key=lambda r: (r.image_id, r.metric, r.iteration))


def rd_rows(model, images, iterations=None, entropy_model=None,
            metrics=("msssim", "psnr"), msssim_scales=5, workers=1):
    """Aggregate :func:`evaluate_images` results into one row per
    (metric, iteration): the rate-distortion curve data."""
    per_image = evaluate_images(
        model, images, iterations=iterations, entropy_model=entropy_model,
        metrics=metrics, msssim_scales=msssim_scales, workers=workers,
    )
    model_id = content_hash(model).hex()[:12]
    k = iterations or model.arch.iterations
    rows = []
    for metric in metrics:
        for t in range(1, k + 1):
            cell = [r for r in per_image if r.metric == metric and r.iteration == t]
            qs = np.array([r.quality for r in cell], dtype=np.float64)
            coded = np.array([r.bpp_coded for r in cell], dtype=np.float64)
            rows.append(RdRow(
                model_id=model_id,
                metric=metric,
                iteration=t,
                bpp_raw=float(np.mean([r.bpp_raw for r in cell])),
                bpp_coded=float(np.mean(coded)) if not np.any(np.isnan(coded)) else math.nan,
                quality_mean=float(qs.mean()),
                quality_std=float(qs.std()),
                n_images=len(cell),
            ))
    return rows


def rd_points(model, images, iterations=None, entropy_model=None, metric="msssim",
              coded=False, msssim_scales=5, workers=1):
    """Rate-distortion curve for one metric over an image set.

    ``coded=True`` plots entropy-coded rates (requires ``entropy_model``);
    otherwise raw code rates.  Quality is the per-iteration mean over the
    image set.
    """
    if coded and entropy_model is None:
        raise UsageError("coded rates need an entropy model")
    rows = rd_rows(
        model, images, iterations=iterations, entropy_model=entropy_model,
        metrics=(metric,), msssim_scales=msssim_scales, workers=workers,
    )
    return curve_from_rows(rows, metric, coded=coded)
