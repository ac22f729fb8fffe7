"""Short codec training plus a rate-distortion readout.

Trains the desk-profile codec briefly on photographic tiles, then prints
the per-iteration quality curve and its area under the curve.  A short run
like this only starts to converge; the acceptance suite in
tests/test_acceptance.py does the full desk-scale run.

Run:  python3 demos/05_training_and_rd.py    (a few minutes)
"""

import numpy as np
import skimage.data

from rnic.codec import desk_architecture
from rnic.data import PatchSet, extract_tiles
from rnic.evaluate import rd_rows
from rnic.metrics import auc, curve_from_rows
from rnic.train import TrainConfig, train_codec

patches = PatchSet.concatenate([
    extract_tiles(skimage.data.astronaut(), "astronaut"),
    extract_tiles(skimage.data.coffee(), "coffee"),
])
print(f"training on {len(patches)} tiles of two photographs")

cfg = TrainConfig(steps=250, batch_size=8, learning_rate=2e-3, seed=3, iterations=8, log_interval=50)
model, hist = train_codec(patches, desk_architecture(), cfg)
print(f"loss: {np.mean(hist[:10]):.4f} -> {np.mean(hist[-10:]):.4f}\n")

images = [("chelsea", skimage.data.chelsea()[:288, :448])]
rows = rd_rows(model, images, iterations=8, msssim_scales=5)
print("iter  bpp     msssim   psnr")
by_iter = {}
for r in rows:
    by_iter.setdefault(r.iteration, {})[r.metric] = r
for t in sorted(by_iter):
    m, p = by_iter[t]["msssim"], by_iter[t]["psnr"]
    print(f"{t:>4}  {m.bpp_raw:.4f}  {m.quality_mean:.4f}  {p.quality_mean:6.2f}")

curve = curve_from_rows(rows, "msssim")
print(f"\nMS-SSIM area under the curve (up to 2 bpp): {auc(curve):.4f}")
print("(raw desk-profile rates stop well below 2 bpp; the curve is clamped)")
