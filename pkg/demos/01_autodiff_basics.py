"""A tour of the tensor library: forward ops and gradient checking.

Run:  python3 demos/01_autodiff_basics.py
"""

import numpy as np

from rnic import tensor as T
from rnic.tensor import Tensor

rng = np.random.default_rng(0)

print("== strided convolution ==")
x = Tensor(rng.standard_normal((1, 32, 32, 3)).astype(np.float32))
w = Tensor(T.glorot_uniform(rng, (3, 3, 3, 64)))
out = T.conv2d(x, w, stride=2)
print(f"conv 3x3x64 stride 2: {x.shape} -> {out.shape}")

print("\n== depth to space ==")
t = Tensor(np.arange(4, dtype=np.float32).reshape(1, 1, 1, 4))
print("depth [0,1,2,3] becomes the 2x2 block:")
print(T.depth_to_space(t, 2).data.reshape(2, 2))

print("\n== masked convolution stays causal ==")
mask = T.raster_causal_mask(7, 7)
print(f"7x7 raster-causal mask keeps {int(mask.sum())} of 49 taps")
mw = Tensor(rng.standard_normal((7, 7, 1, 1)).astype(np.float32))
img = rng.standard_normal((1, 5, 5, 1)).astype(np.float32)
base = T.masked_conv2d(Tensor(img), mw, mask).data
img2 = img.copy()
img2[0, 2, 3, 0] += 100.0  # later in raster order than (2, 2)
moved = T.masked_conv2d(Tensor(img2), mw, mask).data
print("output at (2,2) after perturbing (2,3):",
      "unchanged" if base[0, 2, 2] == moved[0, 2, 2] else "CHANGED (bug!)")

print("\n== gradients vs central finite differences ==")
x64 = Tensor(rng.standard_normal((1, 5, 5, 2)), requires_grad=True)
w64 = Tensor(rng.standard_normal((3, 3, 2, 2)), requires_grad=True)
loss = T.tensor_sum(T.sigmoid(T.conv2d(x64, w64, stride=1)))
loss.backward()

h = 1e-5
flat = w64.data.reshape(-1)
i = 7
orig = flat[i]
flat[i] = orig + h
fp = float(T.tensor_sum(T.sigmoid(T.conv2d(Tensor(x64.data), Tensor(w64.data), stride=1))).data)
flat[i] = orig - h
fm = float(T.tensor_sum(T.sigmoid(T.conv2d(Tensor(x64.data), Tensor(w64.data), stride=1))).data)
flat[i] = orig
numeric = (fp - fm) / (2 * h)
analytic = w64.grad.reshape(-1)[i]
print(f"dL/dw[7]: analytic {analytic:.8f}  numeric {numeric:.8f}  "
      f"rel.err {abs(analytic - numeric) / max(1, abs(numeric)):.2e}")
