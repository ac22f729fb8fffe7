"""Full-reference quality metrics and rate-distortion bookkeeping.

MS-SSIM follows the standard multi-scale construction: an 11x11 Gaussian
window (sigma 1.5), K1 = 0.01, K2 = 0.03, five scales weighted
(0.0448, 0.2856, 0.3001, 0.2363, 0.1333), contrast-structure terms from the
finer scales and the full SSIM at the coarsest, each filtered in valid mode
and downsampled by 2x2 mean pooling between scales.  It is applied to each
RGB channel independently and the channel scores are averaged.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import UsageError

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_WINDOW_SIZE = 11
_WINDOW_SIGMA = 1.5
_K1, _K2 = 0.01, 0.03
PSNR_CAP = 99.0


def _gaussian_window(size=_WINDOW_SIZE, sigma=_WINDOW_SIGMA):
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-(r**2) / (2.0 * sigma**2))
    return w / w.sum()


_WIN = _gaussian_window()


def _filter_valid(img):
    """Separable Gaussian filtering, valid region only."""
    out = correlate1d(img, _WIN, axis=0, mode="constant")
    out = correlate1d(out, _WIN, axis=1, mode="constant")
    r = _WINDOW_SIZE // 2
    return out[r:-r, r:-r]

def _ssim_maps(a, b, c1, c2):
    mu_a = _filter_valid(a)
    mu_b = _filter_valid(b)
    sigma_a = _filter_valid(a * a) - mu_a * mu_a
    sigma_b = _filter_valid(b * b) - mu_b * mu_b
    sigma_ab = _filter_valid(a * b) - mu_a * mu_b
    lum = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    cs = (2.0 * sigma_ab + c2) / (sigma_a + sigma_b + c2)
    return lum, cs


def _downsample(img):
    h, w = img.shape
    h2, w2 = h // 2, w // 2
    return img[: h2 * 2, : w2 * 2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def _msssim_channel(a, b, scales, weights, c1, c2):
    scores = []
    for s in range(scales):
        lum, cs = _ssim_maps(a, b, c1, c2)
        if s < scales - 1:
            scores.append(cs.mean())
            a, b = _downsample(a), _downsample(b)
        else:
            scores.append((lum * cs).mean())
    total = 1.0
    for w, v in zip(weights, scores):
        total *= max(v, 0.0) ** w
    return total


def msssim(a, b, data_range=255.0, scales=5):
    """Multi-scale structural similarity in [0, 1]; 1.0 iff identical.

    Inputs are (H, W) or (H, W, C) arrays on the 8-bit scale by default.
    Images must measure at least 11 * 2**(scales - 1) on each side; pass a
    smaller ``scales`` for small images.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise UsageError(f"image shapes differ: {a.shape} vs {b.shape}")
    if not 1 <= scales <= len(MSSSIM_WEIGHTS):
        raise UsageError(f"scales must be in [1, {len(MSSSIM_WEIGHTS)}]")
    need = _WINDOW_SIZE * 2 ** (scales - 1)
    if min(a.shape[0], a.shape[1]) < need:
        raise UsageError(
            f"image {a.shape[1]}x{a.shape[0]} too small for {scales} dyadic scales "
            f"(needs >= {need} per side); use fewer scales or a larger image"
        )
    weights = np.asarray(MSSSIM_WEIGHTS[:scales], dtype=np.float64)
    weights = weights / weights.sum()
    c1 = (_K1 * data_range) ** 2
    c2 = (_K2 * data_range) ** 2
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    vals = [
        _msssim_channel(a[:, :, ch], b[:, :, ch], scales, weights, c1, c2)
        for ch in range(a.shape[2])
    ]
    return float(np.mean(vals))


def psnr(a, b, data_range=255.0, cap=PSNR_CAP):
    """Peak signal-to-noise ratio in dB; identical images report the cap."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise UsageError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return cap
    return min(10.0 * math.log10(data_range**2 / mse), cap)


METRICS = {"msssim": msssim, "psnr": psnr}


@dataclass(frozen=True)
class RdPoint:
    bpp: float
    quality: float
    metric: str
    iteration: int


@dataclass
class RdCurve:
    points: list

    def __post_init__(self):
        bpps = [p.bpp for p in self.points]
        if any(b <= 0 for b in bpps):
            raise UsageError("bits-per-pixel must be positive")
        if bpps != sorted(bpps):
            raise UsageError("rate-distortion points must have increasing bpp")


def auc(curve, max_bpp=2.0):
    """Area under the quality-vs-bpp curve from its lowest bpp up to ``max_bpp``.

    Trapezoidal integration with linear interpolation; the curve is clamped
    at ``max_bpp`` and never extrapolated below its first point.
    """
    pts = curve.points if isinstance(curve, RdCurve) else [RdPoint(b, q, "", i) for i, (b, q) in enumerate(curve)]
    pts = sorted(pts, key=lambda p: p.bpp)
    if len(pts) < 2:
        raise UsageError("need at least two rate-distortion points")
    if pts[0].bpp > max_bpp:
        raise UsageError(f"all points above the {max_bpp} bpp limit")
    xs = np.array([p.bpp for p in pts], dtype=np.float64)
    ys = np.array([p.quality for p in pts], dtype=np.float64)
    if xs[-1] > max_bpp:
        y_end = float(np.interp(max_bpp, xs, ys))
        keep = xs < max_bpp
        xs = np.append(xs[keep], max_bpp)
        ys = np.append(ys[keep], y_end)
    trapezoid = getattr(np, "trapezoid", np.trapz)
    return float(trapezoid(ys, xs))


@dataclass(frozen=True)
class RdRow:
    """One aggregate row: a (metric, iteration) cell of the evaluation CSV."""

    model_id: str
    metric: str
    iteration: int
    bpp_raw: float
    bpp_coded: float  # nan when no entropy model was applied
    quality_mean: float
    quality_std: float
    n_images: int


CSV_COLUMNS = ("model_id", "metric", "iteration", "bpp_raw", "bpp_coded",
               "quality_mean", "quality_std", "n_images")


def write_rd_csv(path, rows):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(CSV_COLUMNS)
        for r in rows:
            out.writerow([
                r.model_id, r.metric, r.iteration,
                repr(r.bpp_raw),
                "" if math.isnan(r.bpp_coded) else repr(r.bpp_coded),
                repr(r.quality_mean), repr(r.quality_std), r.n_images,
            ])


def curve_from_rows(rows, metric, coded=False):
    pts = [
        RdPoint(
            bpp=r.bpp_coded if coded else r.bpp_raw,
            quality=r.quality_mean,
            metric=metric,
            iteration=r.iteration,
        )
        for r in sorted(rows, key=lambda r: r.iteration)
        if r.metric == metric
    ]
    return RdCurve(pts)
