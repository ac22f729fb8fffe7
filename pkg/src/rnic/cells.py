"""Convolutional recurrent cells: LSTM, associative LSTM, GRU, residual GRU.

Each cell is a pure step function ``cell(x, state) -> (output, new_state)``.
The input convolution may be strided (its kernel size comes from the layer
spec); the hidden convolution always runs at the output resolution with
stride 1.  All gates of a cell are produced by fused convolutions and then
split along depth, which is output-equivalent to per-gate convolutions.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigurationError
from .tensor import Tensor

LSTM = "lstm"
ASSOCIATIVE_LSTM = "alstm"
GRU = "gru"
RESIDUAL_GRU = "rgru"

CELL_KINDS = (LSTM, ASSOCIATIVE_LSTM, GRU, RESIDUAL_GRU)

RESIDUAL_BLEND = 0.1  # weight of both residual shortcuts in the residual GRU


@dataclass
class LstmState:
    c: Tensor
    h: Tensor


@dataclass
class GruState:
    h: Tensor


@dataclass
class AssocLstmState:
    """Complex cell/hidden state stored as paired real and imaginary planes.

    ``h`` keeps the concatenated (Re, Im) layout so it doubles as the cell
    output; ``c_re``/``c_im`` hold the complex cell state.
    """

    c_re: Tensor
    c_im: Tensor
    h: Tensor


def _zeros(batch, h, w, depth, dtype):
    return Tensor(np.zeros((batch, h, w, depth), dtype=dtype))


def _check_state_shape(x, stride, depth, state_h):
    b, h, w, _ = x.data.shape
    oh, ow = -(-h // stride), -(-w // stride)
    if state_h.data.shape != (b, oh, ow, depth):
        raise ConfigurationError(
            f"state shape {state_h.data.shape} does not match layer output {(b, oh, ow, depth)}"
        )


def bound_magnitude(re, im, eps=1e-30):
    """Clamp a complex value to the unit disc: z if |z| <= 1 else z / |z|."""
    mag = T.sqrt(T.maximum(T.add(T.mul(re, re), T.mul(im, im)), eps))
    denom = T.maximum(mag, 1.0)
    return T.div(re, denom), T.div(im, denom)


class ConvLstm:
    """LSTM with gates [forget, input, output, candidate] from one fused conv."""

    def __init__(self, rng, in_depth, depth, kernel, stride=1, hidden_kernel=1, dtype=np.float32):
        self.in_depth = in_depth
        self.depth = depth
        self.stride = stride
        self.wx = Tensor(T.glorot_uniform(rng, (kernel, kernel, in_depth, 4 * depth), dtype), requires_grad=True)
        self.wh = Tensor(T.glorot_uniform(rng, (hidden_kernel, hidden_kernel, depth, 4 * depth), dtype), requires_grad=True)
        self.b = Tensor(np.zeros(4 * depth, dtype=dtype), requires_grad=True)

    def named_params(self):
        return [("wx", self.wx), ("wh", self.wh), ("b", self.b)]

    def zero_state(self, batch, out_h, out_w, dtype=None):
        dtype = dtype or self.wx.data.dtype
        return LstmState(
            c=_zeros(batch, out_h, out_w, self.depth, dtype),
            h=_zeros(batch, out_h, out_w, self.depth, dtype),
        )

    def __call__(self, x, state):
        _check_state_shape(x, self.stride, self.depth, state.h)
        d = self.depth
        gates = T.add(
            T.conv2d(x, self.wx, self.b, stride=self.stride),
            T.conv2d(state.h, self.wh, stride=1),
        )
        f = T.sigmoid(T.narrow(gates, 0, d))
        i = T.sigmoid(T.narrow(gates, d, d))
        o = T.sigmoid(T.narrow(gates, 2 * d, d))
        j = T.tanh(T.narrow(gates, 3 * d, d))
        c = T.add(T.mul(f, state.c), T.mul(i, j))
        h = T.mul(o, T.tanh(c))
        return h, LstmState(c=c, h=h)


class AssocConvLstm:
    """Associative LSTM over complex states held as paired (Re, Im) planes.

    The nominal layer depth D is realized as D/2 complex channels, so the
    concatenated (Re, Im) output has depth D.  Real gates f, i, o come from
    an unconstrained convolution over (x, Re h, Im h); the complex values
    j, r_i, r_o come from complex convolutions realized as paired real
    convolutions combined by complex multiplication rules.
    """

    def __init__(self, rng, in_depth, depth, kernel, stride=1, hidden_kernel=1, dtype=np.float32):
        if depth % 2 != 0:
            raise ConfigurationError("associative cell depth must be even to pair Re/Im planes")
        self.in_depth = in_depth
        self.depth = depth
        self.dc = depth // 2
        self.stride = stride
        dc = self.dc
        # x is real, so all nine pre-activation blocks stack into one kernel:
        # [f,i,o | Re(j,ri,ro) | Im(j,ri,ro)], each block dc channels wide.
        self.wx = Tensor(T.glorot_uniform(rng, (kernel, kernel, in_depth, 9 * dc), dtype), requires_grad=True)
        self.b = Tensor(np.zeros(9 * dc, dtype=dtype), requires_grad=True)
        self.ug = Tensor(T.glorot_uniform(rng, (hidden_kernel, hidden_kernel, depth, 3 * dc), dtype), requires_grad=True)
        self.u_re = Tensor(T.glorot_uniform(rng, (hidden_kernel, hidden_kernel, dc, 3 * dc), dtype), requires_grad=True)
        self.u_im = Tensor(T.glorot_uniform(rng, (hidden_kernel, hidden_kernel, dc, 3 * dc), dtype), requires_grad=True)

    def named_params(self):
        return [("wx", self.wx), ("b", self.b), ("ug", self.ug), ("u_re", self.u_re), ("u_im", self.u_im)]

    def zero_state(self, batch, out_h, out_w, dtype=None):
        dtype = dtype or self.wx.data.dtype
        return AssocLstmState(
            c_re=_zeros(batch, out_h, out_w, self.dc, dtype),
            c_im=_zeros(batch, out_h, out_w, self.dc, dtype),
            h=_zeros(batch, out_h, out_w, self.depth, dtype),
        )

    def __call__(self, x, state):
        _check_state_shape(x, self.stride, self.depth, state.h)
        dc = self.dc
        # Complex hidden conv: Re out uses (u_re, -u_im), Im out uses (u_im, u_re),
        # both applied to the stacked (Re h, Im h) planes.
        k_re = T.concat([self.u_re, T.mul(self.u_im, -1.0)], axis=2)
        k_im = T.concat([self.u_im, self.u_re], axis=2)
        uh = T.concat([self.ug, k_re, k_im], axis=3)
        pre = T.add(
            T.conv2d(x, self.wx, self.b, stride=self.stride),
            T.conv2d(state.h, uh, stride=1),
        )
        f = T.sigmoid(T.narrow(pre, 0, dc))
        i = T.sigmoid(T.narrow(pre, dc, dc))
        o = T.sigmoid(T.narrow(pre, 2 * dc, dc))
        re_blk, im_blk = T.narrow(pre, 3 * dc, 3 * dc), T.narrow(pre, 6 * dc, 3 * dc)
        j_re, j_im = bound_magnitude(T.narrow(re_blk, 0, dc), T.narrow(im_blk, 0, dc))
        ri_re, ri_im = bound_magnitude(T.narrow(re_blk, dc, dc), T.narrow(im_blk, dc, dc))
        ro_re, ro_im = bound_magnitude(T.narrow(re_blk, 2 * dc, dc), T.narrow(im_blk, 2 * dc, dc))

        upd_re = T.sub(T.mul(ri_re, j_re), T.mul(ri_im, j_im))
        upd_im = T.add(T.mul(ri_re, j_im), T.mul(ri_im, j_re))
        c_re = T.add(T.mul(f, state.c_re), T.mul(i, upd_re))
        c_im = T.add(T.mul(f, state.c_im), T.mul(i, upd_im))

        t_re = T.sub(T.mul(ro_re, c_re), T.mul(ro_im, c_im))
        t_im = T.add(T.mul(ro_re, c_im), T.mul(ro_im, c_re))
        b_re, b_im = bound_magnitude(t_re, t_im)
        h = T.concat([T.mul(o, b_re), T.mul(o, b_im)], axis=3)
        return h, AssocLstmState(c_re=c_re, c_im=c_im, h=h)


class ConvGru:
    """GRU: h' = (1 - z) * h + z * tanh(W x + U (r * h))."""

    def __init__(self, rng, in_depth, depth, kernel, stride=1, hidden_kernel=1, dtype=np.float32):
        self.in_depth = in_depth
        self.depth = depth
        self.stride = stride
        self.wx_zr = Tensor(T.glorot_uniform(rng, (kernel, kernel, in_depth, 2 * depth), dtype), requires_grad=True)
        self.b_zr = Tensor(np.zeros(2 * depth, dtype=dtype), requires_grad=True)
        self.uh_zr = Tensor(T.glorot_uniform(rng, (hidden_kernel, hidden_kernel, depth, 2 * depth), dtype), requires_grad=True)
        self.wx_c = Tensor(T.glorot_uniform(rng, (kernel, kernel, in_depth, depth), dtype), requires_grad=True)
        self.b_c = Tensor(np.zeros(depth, dtype=dtype), requires_grad=True)
        self.uh_c = Tensor(T.glorot_uniform(rng, (hidden_kernel, hidden_kernel, depth, depth), dtype), requires_grad=True)

    def named_params(self):
        return [
            ("wx_zr", self.wx_zr), ("b_zr", self.b_zr), ("uh_zr", self.uh_zr),
            ("wx_c", self.wx_c), ("b_c", self.b_c), ("uh_c", self.uh_c),
        ]

    def zero_state(self, batch, out_h, out_w, dtype=None):
        dtype = dtype or self.wx_zr.data.dtype
        return GruState(h=_zeros(batch, out_h, out_w, self.depth, dtype))

    def _blend(self, x, state):
        d = self.depth
        zr = T.sigmoid(
            T.add(
                T.conv2d(x, self.wx_zr, self.b_zr, stride=self.stride),
                T.conv2d(state.h, self.uh_zr, stride=1),
            )
        )
        z = T.narrow(zr, 0, d)
        r = T.narrow(zr, d, d)
        cand = T.tanh(
            T.add(
                T.conv2d(x, self.wx_c, self.b_c, stride=self.stride),
                T.conv2d(T.mul(r, state.h), self.uh_c, stride=1),
            )
        )
        one_minus_z = T.sub(1.0, z)
        return T.add(T.mul(one_minus_z, state.h), T.mul(z, cand))

    def __call__(self, x, state):
        _check_state_shape(x, self.stride, self.depth, state.h)
        h = self._blend(x, state)
        return h, GruState(h=h)


class ResidualConvGru(ConvGru):
    """GRU with two extra linear shortcuts, both weighted by 0.1.

    The state gains a projected copy of the previous state; the output adds
    a projected copy of the input on top of the state, so output and state
    differ whenever the input projection is nonzero.
    """

    def __init__(self, rng, in_depth, depth, kernel, stride=1, hidden_kernel=1, dtype=np.float32):
        super().__init__(rng, in_depth, depth, kernel, stride, hidden_kernel, dtype)
        self.w_hres = Tensor(T.glorot_uniform(rng, (1, 1, depth, depth), dtype), requires_grad=True)
        self.w_ox = Tensor(T.glorot_uniform(rng, (1, 1, in_depth, depth), dtype), requires_grad=True)

    def named_params(self):
        return super().named_params() + [("w_hres", self.w_hres), ("w_ox", self.w_ox)]

    def __call__(self, x, state):
        _check_state_shape(x, self.stride, self.depth, state.h)
        h = T.add(
            self._blend(x, state),
            T.mul(T.conv2d(state.h, self.w_hres, stride=1), RESIDUAL_BLEND),
        )
        out = T.add(h, T.mul(T.conv2d(x, self.w_ox, stride=self.stride), RESIDUAL_BLEND))
        return out, GruState(h=h)


_CELL_CLASSES = {
    LSTM: ConvLstm,
    ASSOCIATIVE_LSTM: AssocConvLstm,
    GRU: ConvGru,
    RESIDUAL_GRU: ResidualConvGru,
}


def build_cell(kind, rng, in_depth, depth, kernel, stride=1, hidden_kernel=1, dtype=np.float32):
    if kind not in _CELL_CLASSES:
        raise ConfigurationError(f"unknown cell kind {kind!r}; expected one of {CELL_KINDS}")
    return _CELL_CLASSES[kind](rng, in_depth, depth, kernel, stride, hidden_kernel, dtype)
