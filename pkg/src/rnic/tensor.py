"""Dense NHWC tensors with reverse-mode automatic differentiation.

Arrays are numpy-backed, shaped (batch, height, width, depth) for image
data; scalars and flat parameters are allowed too.  Every operation that
participates in training records a backward closure on its output, so
calling :meth:`Tensor.backward` on a scalar loss replays the recorded
graph in reverse topological order and accumulates gradients into the
``requires_grad`` leaves.

Gradient recording can be suspended with :func:`no_grad` for inference.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, UsageError

_grad_enabled = True


@contextmanager
def no_grad():
    """Suspend gradient recording inside the ``with`` block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled():
    return _grad_enabled


class Tensor:
    """A numpy array plus the bookkeeping needed for reverse-mode autodiff.

    Treat instances as immutable once created: operations return new
    tensors and never write into their inputs' ``data``.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        if isinstance(data, np.ndarray):
            self.data = data
        elif isinstance(data, np.generic):  # numpy scalar: keep its dtype
            self.data = np.asarray(data)
        else:
            self.data = np.asarray(data, dtype=np.float32)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- graph replay ----------------------------------------------------

    def backward(self, grad=None):
        """Accumulate gradients of ``self`` into every reachable leaf.

        ``self`` must be a scalar unless an explicit seed ``grad`` is given.
        """
        if grad is None:
            if self.data.size != 1:
                raise UsageError("backward() without an explicit seed needs a scalar tensor")
            grad = np.ones_like(self.data)
        order = _toposort(self)
        self.grad = np.asarray(grad, dtype=self.data.dtype)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            if node._parents and node is not self:
                node.grad = None  # free interior gradients early

    # -- operator sugar ---------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def sum(self):
        return tensor_sum(self)

    def mean(self):
        return mean(self)

    def abs(self):
        return absolute(self)


def _toposort(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    return order


def _accum(t, g):
    if t.requires_grad or t._backward is not None:
        t.grad = np.array(g, dtype=t.data.dtype) if t.grad is None else t.grad + g


def _wrap2(a, b):
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.data.dtype))
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.data.dtype))
    return a, b


def _track(*tensors):
    return _grad_enabled and any(t.requires_grad or t._backward is not None for t in tensors)


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, (d, s) in enumerate(zip(g.shape, shape)) if s == 1 and d != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise arithmetic ----------------------------------------------


def add(a, b):
    a, b = _wrap2(a, b)
    out_data = a.data + b.data
    if not _track(a, b):
        return Tensor(out_data)

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return Tensor(out_data, _parents=(a, b), _backward=bw)


def sub(a, b):
    a, b = _wrap2(a, b)
    out_data = a.data - b.data
    if not _track(a, b):
        return Tensor(out_data)

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return Tensor(out_data, _parents=(a, b), _backward=bw)


def mul(a, b):
    if not isinstance(b, Tensor):  # scalar fast path
        s = float(b)
        out_data = a.data * s
        if not _track(a):
            return Tensor(out_data)

        def bw_scalar(g):
            _accum(a, g * s)

        return Tensor(out_data, _parents=(a,), _backward=bw_scalar)
    out_data = a.data * b.data
    if not _track(a, b):
        return Tensor(out_data)

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, _parents=(a, b), _backward=bw)


def div(a, b):
    a, b = _wrap2(a, b)
    out_data = a.data / b.data
    if not _track(a, b):
        return Tensor(out_data)

    def bw(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return Tensor(out_data, _parents=(a, b), _backward=bw)


def absolute(a):
    out_data = np.abs(a.data)
    if not _track(a):
        return Tensor(out_data)

    def bw(g):
        _accum(a, g * np.sign(a.data))

    return Tensor(out_data, _parents=(a,), _backward=bw)


def maximum(a, floor):
    """Elementwise max against a python scalar; gradient follows ``a`` where it wins."""
    out_data = np.maximum(a.data, floor)
    if not _track(a):
        return Tensor(out_data)
    mask = a.data > floor

    def bw(g):
        _accum(a, g * mask)

    return Tensor(out_data, _parents=(a,), _backward=bw)


def clip(a, lo, hi):
    out_data = np.clip(a.data, lo, hi)
    if not _track(a):
        return Tensor(out_data)
    mask = (a.data >= lo) & (a.data <= hi)

    def bw(g):
        _accum(a, g * mask)

    return Tensor(out_data, _parents=(a,), _backward=bw)


# -- nonlinearities --------------------------------------------------------


def sigmoid(a):
    out_data = expit(a.data)
    if not _track(a):
        return Tensor(out_data)

    def bw(g):
        _accum(a, g * out_data * (1.0 - out_data))

    return Tensor(out_data, _parents=(a,), _backward=bw)


def tanh(a):
    out_data = np.tanh(a.data)
    if not _track(a):
        return Tensor(out_data)

    def bw(g):
        _accum(a, g * (1.0 - out_data * out_data))

    return Tensor(out_data, _parents=(a,), _backward=bw)


def elu(a):
    """Exponential linear unit: x for x > 0, exp(x) - 1 otherwise. Range (-1, inf)."""
    x = a.data
    out_data = np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
    if not _track(a):
        return Tensor(out_data)

    def bw(g):
        _accum(a, g * np.where(x > 0, np.ones((), dtype=x.dtype), out_data + 1.0))

    return Tensor(out_data, _parents=(a,), _backward=bw)


def sqrt(a):
    out_data = np.sqrt(a.data)
    if not _track(a):
        return Tensor(out_data)

    def bw(g):
        _accum(a, g * 0.5 / out_data)

    return Tensor(out_data, _parents=(a,), _backward=bw)


def log(a):
    out_data = np.log(a.data)
    if not _track(a):
        return Tensor(out_data)

    def bw(g):
        _accum(a, g / a.data)

    return Tensor(out_data, _parents=(a,), _backward=bw)


# -- reductions -------------------------------------------------------------


def tensor_sum(a):
    out_data = np.asarray(a.data.sum(), dtype=a.data.dtype)
    if not _track(a):
        return Tensor(out_data)

    def bw(g):
        _accum(a, np.broadcast_to(g, a.data.shape))

    return Tensor(out_data, _parents=(a,), _backward=bw)


def mean(a):
    n = a.data.size
    out_data = np.asarray(a.data.mean(), dtype=a.data.dtype)
    if not _track(a):
        return Tensor(out_data)

    def bw(g):
        _accum(a, np.broadcast_to(g / n, a.data.shape))

    return Tensor(out_data, _parents=(a,), _backward=bw)


# -- structural ops ----------------------------------------------------------


def concat(tensors, axis=3):
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    if not _track(*tensors):
        return Tensor(out_data)
    sizes = [t.data.shape[axis] for t in tensors]

    def bw(g):
        start = 0
        for t, size in zip(tensors, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(start, start + size)
            _accum(t, g[tuple(idx)])
            start += size

    return Tensor(out_data, _parents=tuple(tensors), _backward=bw)


def narrow(a, start, size, axis=3):
    """Contiguous slice along ``axis`` (used to split fused gate stacks)."""
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + size)
    idx = tuple(idx)
    out_data = a.data[idx]
    if not _track(a):
        return Tensor(out_data)

    def bw(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        _accum(a, full)

    return Tensor(out_data, _parents=(a,), _backward=bw)


def depth_to_space(a, block=2):
    """Rearrange depth groups of ``block**2`` into block x block spatial tiles.

    Depth index (dy*block + dx)*out_depth + c lands at spatial offset (dy, dx).
    Exact inverse of :func:`space_to_depth`.
    """
    b, h, w, d = a.data.shape
    if d % (block * block) != 0:
        raise ConfigurationError(f"depth {d} not divisible by block^2 = {block * block}")
    od = d // (block * block)
    out_data = (
        a.data.reshape(b, h, w, block, block, od)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(b, h * block, w * block, od)
    )
    if not _track(a):
        return Tensor(out_data)

    def bw(g):
        gg = (
            g.reshape(b, h, block, w, block, od)
            .transpose(0, 1, 3, 2, 4, 5)
            .reshape(b, h, w, d)
        )
        _accum(a, gg)

    return Tensor(out_data, _parents=(a,), _backward=bw)


def space_to_depth(a, block=2):
    b, h, w, d = a.data.shape
    if h % block != 0 or w % block != 0:
        raise ConfigurationError(f"spatial dims ({h}, {w}) not divisible by block {block}")
    oh, ow = h // block, w // block
    out_data = (
        a.data.reshape(b, oh, block, ow, block, d)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(b, oh, ow, d * block * block)
    )
    if not _track(a):
        return Tensor(out_data)

    def bw(g):
        gg = (
            g.reshape(b, oh, ow, block, block, d)
            .transpose(0, 1, 3, 2, 4, 5)
            .reshape(b, h, w, d)
        )
        _accum(a, gg)

    return Tensor(out_data, _parents=(a,), _backward=bw)


def zoh_upsample(a, factor):
    """Zero-order-hold upsampling: replicate each value over a factor x factor block."""
    out_data = np.repeat(np.repeat(a.data, factor, axis=1), factor, axis=2)
    if not _track(a):
        return Tensor(out_data)
    b, h, w, d = a.data.shape

    def bw(g):
        _accum(a, g.reshape(b, h, factor, w, factor, d).sum(axis=(2, 4)))

    return Tensor(out_data, _parents=(a,), _backward=bw)


# -- convolution -------------------------------------------------------------


def same_padding(size, kernel, stride):
    """Padding (before, after) so output size is ceil(size / stride)."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def _resolve_padding(padding, h, w, kh, kw, sy, sx):
    if padding == "same":
        return same_padding(h, kh, sy), same_padding(w, kw, sx)
    if padding == "valid":
        return (0, 0), (0, 0)
    (pt, pb), (pl, pr) = padding
    return (pt, pb), (pl, pr)


def conv2d(x, w, b=None, stride=1, padding="same"):
    """Strided 2-D convolution with full depth mixing.

    ``x`` is (batch, h, w, cin); ``w`` is (kh, kw, cin, cout); optional bias
    ``b`` is (cout,).  ``padding`` is "same", "valid", or explicit
    ((top, bottom), (left, right)).  "same" output size is ceil(size/stride).
    """
    sy, sx = (stride, stride) if isinstance(stride, int) else stride
    if sy < 1 or sx < 1:
        raise ConfigurationError("stride must be >= 1")
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ConfigurationError("conv2d expects rank-4 input and kernel")
    bsz, h, wdt, cin = x.data.shape
    kh, kw, wcin, cout = w.data.shape
    if cin != wcin:
        raise ConfigurationError(f"kernel expects depth {wcin}, input has depth {cin}")
    (pt, pb), (pl, pr) = _resolve_padding(padding, h, wdt, kh, kw, sy, sx)
    xp = np.pad(x.data, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if (pt or pb or pl or pr) else x.data
    oh = (h + pt + pb - kh) // sy + 1
    ow = (wdt + pl + pr - kw) // sx + 1

    cols = np.empty((bsz, oh, ow, kh, kw, cin), dtype=x.data.dtype)
    for i in range(kh):
        ys = slice(i, i + (oh - 1) * sy + 1, sy)
        for j in range(kw):
            xs = slice(j, j + (ow - 1) * sx + 1, sx)
            cols[:, :, :, i, j, :] = xp[:, ys, xs, :]
    k = kh * kw * cin
    w2d = w.data.reshape(k, cout)
    out_data = cols.reshape(-1, k) @ w2d
    if b is not None:
        out_data += b.data
    out_data = out_data.reshape(bsz, oh, ow, cout)

    inputs = (x, w) if b is None else (x, w, b)
    if not _track(*inputs):
        return Tensor(out_data)

    def bw(g):
        g2d = g.reshape(-1, cout)
        if w.requires_grad or w._backward is not None:
            _accum(w, (cols.reshape(-1, k).T @ g2d).reshape(w.data.shape))
        if b is not None:
            _accum(b, g2d.sum(axis=0))
        if x.requires_grad or x._backward is not None:
            dcols = (g2d @ w2d.T).reshape(bsz, oh, ow, kh, kw, cin)
            dxp = np.zeros((bsz, h + pt + pb, wdt + pl + pr, cin), dtype=g.dtype)
            for i in range(kh):
                ys = slice(i, i + (oh - 1) * sy + 1, sy)
                for j in range(kw):
                    xs = slice(j, j + (ow - 1) * sx + 1, sx)
                    dxp[:, ys, xs, :] += dcols[:, :, :, i, j, :]
            _accum(x, dxp[:, pt : pt + h, pl : pl + wdt, :])

    return Tensor(out_data, _parents=inputs, _backward=bw)


def raster_causal_mask(kh, kw, dtype=np.float32):
    """Spatial mask keeping only taps strictly before the center in raster order.

    Rows above the center are fully active; the center row is active left of
    the center tap; the center tap and everything after it are zero.
    """
    mask = np.zeros((kh, kw), dtype=dtype)
    cy, cx = kh // 2, kw // 2
    mask[:cy, :] = 1.0
    mask[cy, :cx] = 1.0
    return mask


def _check_causal(mask):
    kh, kw = mask.shape
    cy, cx = kh // 2, kw // 2
    flat = mask.reshape(-1)
    center = cy * kw + cx
    if np.any(flat[center:] != 0.0):
        raise ConfigurationError("mask is not strictly raster-causal at or after the center tap")


def masked_conv2d(x, w, mask, b=None):
    """Stride-1 same-padded convolution with raster-causal spatial masking.

    The mask must zero the center tap and every tap after it in raster
    order, so output (y, x) depends only on inputs strictly before (y, x).
    """
    if mask.shape != w.data.shape[:2]:
        raise ConfigurationError("mask shape must match the kernel's spatial extent")
    _check_causal(np.asarray(mask))
    mk = Tensor(np.asarray(mask, dtype=w.data.dtype).reshape(mask.shape[0], mask.shape[1], 1, 1))
    return conv2d(x, mul(w, mk), b=b, stride=1, padding="same")


# -- binarization -------------------------------------------------------------


def binarize_stochastic(a, rng):
    """Sample codes in {-1, +1} with P(+1) = (1 + a) / 2; straight-through gradient."""
    u = rng.random(a.data.shape)
    out_data = np.where(u < (1.0 + a.data) * 0.5, 1.0, -1.0).astype(a.data.dtype)
    if not _track(a):
        return Tensor(out_data)

    def bw(g):
        _accum(a, g)

    return Tensor(out_data, _parents=(a,), _backward=bw)


def binarize_sign(a):
    """Deterministic codes: sign of the activation with sign(0) := +1."""
    out_data = np.where(a.data >= 0.0, 1.0, -1.0).astype(a.data.dtype)
    if not _track(a):
        return Tensor(out_data)

    def bw(g):
        _accum(a, g)

    return Tensor(out_data, _parents=(a,), _backward=bw)


# -- parameter initialization --------------------------------------------------


def glorot_uniform(rng, shape, dtype=np.float32):
    """Uniform init on [-s, s] with s = sqrt(6 / (fan_in + fan_out)).

    For conv kernels (kh, kw, cin, cout): fan_in = kh*kw*cin, fan_out = kh*kw*cout.
    """
    if len(shape) == 4:
        rf = shape[0] * shape[1]
        fan_in, fan_out = rf * shape[2], rf * shape[3]
    elif len(shape) == 2:
        fan_in, fan_out = shape
    else:
        fan_in = fan_out = int(np.prod(shape))
    s = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape).astype(dtype)
