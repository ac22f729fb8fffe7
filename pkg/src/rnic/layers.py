"""Plain convolution layers used by the codec and entropy models."""

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Conv2d:
    """Convolution layer owning its kernel and optional bias."""

    def __init__(self, rng, kh, kw, cin, cout, stride=1, padding="same", bias=True, dtype=np.float32):
        self.stride = stride
        self.padding = padding
        self.w = Tensor(T.glorot_uniform(rng, (kh, kw, cin, cout), dtype), requires_grad=True)
        self.b = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True) if bias else None

    def named_params(self):
        out = [("w", self.w)]
        if self.b is not None:
            out.append(("b", self.b))
        return out

    def __call__(self, x):
        return T.conv2d(x, self.w, self.b, stride=self.stride, padding=self.padding)


class MaskedConv2d:
    """Stride-1 convolution whose kernel is zeroed at and after the raster center."""

    def __init__(self, rng, kh, kw, cin, cout, dtype=np.float32):
        self.mask = T.raster_causal_mask(kh, kw, dtype)
        self.w = Tensor(T.glorot_uniform(rng, (kh, kw, cin, cout), dtype), requires_grad=True)
        self.b = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True)

    def named_params(self):
        return [("w", self.w), ("b", self.b)]

    def __call__(self, x):
        return T.masked_conv2d(x, self.w, self.mask, self.b)


def collect_params(prefix, modules):
    """Flatten (name, module) pairs into dotted parameter names."""
    out = []
    for name, module in modules:
        for pname, p in module.named_params():
            out.append((f"{prefix}{name}.{pname}" if prefix else f"{name}.{pname}", p))
    return out
