"""Learned probability model and lossless coding for binary code tensors.

The model estimates P(bit = 1) for every code position (y, x, d) from a
strictly raster-causal context:

1. a masked 7x7 convolution over the current iteration's codes (z0),
2. a line LSTM that walks scan lines top to bottom, taking z0 through a
   causal 1x2 input convolution and its own previous line through a 1x3
   state convolution,
3. two 1x1 convolutions, the last with a sigmoid, giving per-bit Bernoulli
   parameters.

For multi-iteration streams, a small recurrent network summarizes the
previous iteration's codes into a feature map z1 that is concatenated onto
z0, so later iterations are predicted with knowledge of earlier ones.  z1
needs no masking: previous iterations are fully known at decode time.

Coding interleaves model evaluation with the range coder column by column,
and the decoder mirrors the identical evaluation order, so probabilities
match bit for bit on both sides.
"""

from dataclasses import dataclass, asdict
import math

import numpy as np
from scipy.special import expit

from . import tensor as T
from .cells import ConvLstm
from .coder import RangeDecoder, RangeEncoder, quantize_probs
from .errors import ConfigurationError, UsageError
from .layers import Conv2d, MaskedConv2d, collect_params
from .tensor import Tensor

PROB_EPS = 2.0**-20  # sigmoid outputs are clamped inside (eps, 1 - eps)
_LOG2 = math.log(2.0)


@dataclass(frozen=True)
class EntropyArchitecture:
    code_depth: int
    feature_depth: int = 64
    line_depth: int = 64
    context_kernel: int = 7
    progressive: bool = True
    dtype: str = "float32"

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    @property
    def line_input_depth(self):
        return self.feature_depth * 2 if self.progressive else self.feature_depth

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class _Z1Net:
    """Previous-iteration summary: two 3x3 convs, a 1x1 conv LSTM whose state
    persists across iterations, then two 1x1 convs.  All depths equal."""

    def __init__(self, rng, arch):
        dt = arch.np_dtype
        f = arch.feature_depth
        self.conv1 = Conv2d(rng, 3, 3, arch.code_depth, f, dtype=dt)
        self.conv2 = Conv2d(rng, 3, 3, f, f, dtype=dt)
        self.lstm = ConvLstm(rng, f, f, kernel=1, stride=1, hidden_kernel=1, dtype=dt)
        self.conv3 = Conv2d(rng, 1, 1, f, f, dtype=dt)
        self.conv4 = Conv2d(rng, 1, 1, f, f, dtype=dt)

    def named_params(self):
        return collect_params("", [
            ("conv1", self.conv1), ("conv2", self.conv2), ("lstm", self.lstm),
            ("conv3", self.conv3), ("conv4", self.conv4),
        ])

    def step(self, prev_codes, state):
        h = T.tanh(self.conv1(prev_codes))
        h = T.tanh(self.conv2(h))
        h, state = self.lstm(h, state)
        h = T.tanh(self.conv3(h))
        return self.conv4(h), state


class EntropyModel:
    """Context model over one codec's binary codes."""

    def __init__(self, arch, rng=None, seed=0):
        rng = rng if rng is not None else np.random.default_rng(seed)
        self.arch = arch
        dt = arch.np_dtype
        k = arch.context_kernel
        ld = arch.line_depth
        self.context_conv = MaskedConv2d(rng, k, k, arch.code_depth, arch.feature_depth, dtype=dt)
        # causal 1x2 input-to-state kernel covering columns (x-1, x) of z
        self.w_in = Tensor(T.glorot_uniform(rng, (1, 2, arch.line_input_depth, 4 * ld), dt), requires_grad=True)
        self.w_state = Tensor(T.glorot_uniform(rng, (1, 3, ld, 4 * ld), dt), requires_grad=True)
        self.b_gates = Tensor(np.zeros(4 * ld, dtype=dt), requires_grad=True)
        self.post1 = Conv2d(rng, 1, 1, ld, arch.feature_depth, dtype=dt)
        self.post2 = Conv2d(rng, 1, 1, arch.feature_depth, arch.code_depth, dtype=dt)
        self.z1net = _Z1Net(rng, arch) if arch.progressive else None

    def named_params(self):
        out = collect_params("", [("context_conv", self.context_conv)])
        out += [("line.w_in", self.w_in), ("line.w_state", self.w_state), ("line.b", self.b_gates)]
        out += collect_params("", [("post1", self.post1), ("post2", self.post2)])
        if self.z1net is not None:
            out += collect_params("z1.", [("", self.z1net)])
        return out

    def params(self):
        return [p for _, p in self.named_params()]

    # -- differentiable forward (training, analysis) -----------------------

    def _line_lstm(self, z):
        """Run the line LSTM over every scan line; returns (B, H, W, line_depth)."""
        bsz, h, w, _ = z.data.shape
        ld = self.arch.line_depth
        dt = self.arch.np_dtype
        c = Tensor(np.zeros((bsz, 1, w, ld), dtype=dt))
        hline = Tensor(np.zeros((bsz, 1, w, ld), dtype=dt))
        rows = []
        for y in range(h):
            row = T.narrow(z, y, 1, axis=1)
            gates = T.add(
                T.conv2d(row, self.w_in, self.b_gates, stride=1, padding=((0, 0), (1, 0))),
                T.conv2d(hline, self.w_state, stride=1, padding="same"),
            )
            f = T.sigmoid(T.narrow(gates, 0, ld))
            i = T.sigmoid(T.narrow(gates, ld, ld))
            o = T.sigmoid(T.narrow(gates, 2 * ld, ld))
            j = T.tanh(T.narrow(gates, 3 * ld, ld))
            c = T.add(T.mul(f, c), T.mul(i, j))
            hline = T.mul(o, T.tanh(c))
            rows.append(hline)
        return T.concat(rows, axis=1)

    def probabilities(self, codes, z1=None):
        """P(bit = 1) per position for one iteration's codes (+-1 valued).

        ``z1`` conditions on earlier iterations; omitted or None means no
        prior-iteration context (zeros are substituted when the model is
        progressive, so the first iteration uses the same weights).
        """
        if codes.data.shape[-1] != self.arch.code_depth:
            raise ConfigurationError(
                f"expected code depth {self.arch.code_depth}, got {codes.data.shape[-1]}"
            )
        z0 = self.context_conv(codes)
        if self.arch.progressive:
            if z1 is None:
                z1 = Tensor(np.zeros_like(z0.data))
            elif z1.data.shape != z0.data.shape:
                raise ConfigurationError("z1 shape does not match z0")
            z = T.concat([z0, z1], axis=3)
        else:
            if z1 is not None:
                raise ConfigurationError("model is not progressive but z1 was given")
            z = z0
        hidden = self._line_lstm(z)
        mid = T.tanh(self.post1(hidden))
        return T.clip(T.sigmoid(self.post2(mid)), PROB_EPS, 1.0 - PROB_EPS)

    def z1_initial_state(self, batch, code_h, code_w):
        return self.z1net.lstm.zero_state(batch, code_h, code_w)

    def z1_step(self, prev_codes, state):
        """Advance the cross-iteration summary with the codes just finished.

        Must not be called for the first iteration: there are no previous
        codes yet (the first iteration runs with zero z1).
        """
        if self.z1net is None:
            raise ConfigurationError("model is not progressive")
        if prev_codes is None:
            raise UsageError("z1 needs the previous iteration's codes; none exist at iteration 1")
        return self.z1net.step(prev_codes, state)

    def sequence_probabilities(self, codes_list):
        """Per-iteration probability tensors with z1 chained across iterations."""
        if not codes_list:
            raise UsageError("need at least one iteration of codes")
        out = []
        if self.arch.progressive:
            bsz, hc, wc, _ = codes_list[0].data.shape
            state = self.z1_initial_state(bsz, hc, wc)
            z1 = None
            for t, codes in enumerate(codes_list):
                if t > 0:
                    z1, state = self.z1_step(codes_list[t - 1], state)
                out.append(self.probabilities(codes, z1))
        else:
            for codes in codes_list:
                out.append(self.probabilities(codes))
        return out

    # -- sequential column evaluation (coding) ------------------------------

    def _walker(self, code_h, code_w, z1_data):
        return _ColumnWalker(self, code_h, code_w, z1_data)

    def _z1_maps(self, codes_arrays):
        """Precompute z1 per iteration from fully known earlier iterations."""
        maps = [None]
        if self.arch.progressive and len(codes_arrays) > 1:
            _, hc, wc, _ = codes_arrays[0].shape
            state = self.z1_initial_state(1, hc, wc)
            with T.no_grad():
                for prev in codes_arrays[:-1]:
                    z1, state = self.z1_step(Tensor(prev), state)
                    maps.append(z1.data)
        else:
            maps += [None] * (len(codes_arrays) - 1)
        return maps

    def encode(self, codes_list):
        """Entropy-code per-iteration (+-1) code tensors into one stream.

        Returns ``(data, offsets)`` where ``offsets[t]`` is the prefix length
        in bytes sufficient to decode iterations 0..t; truncating the stream
        at any offset leaves a decodable prefix.
        """
        arrays = [np.asarray(c.data if isinstance(c, Tensor) else c, dtype=self.arch.np_dtype) for c in codes_list]
        if not arrays:
            raise UsageError("no code tensors to encode")
        shape = arrays[0].shape
        if shape[0] != 1:
            raise UsageError("coding operates on one image at a time (batch 1)")
        for a in arrays:
            if a.shape != shape:
                raise ConfigurationError("all iterations must share one code shape")
        _, hc, wc, d = shape
        z1_maps = self._z1_maps(arrays)
        enc = RangeEncoder()
        offsets = []
        for codes, z1 in zip(arrays, z1_maps):
            walker = self._walker(hc, wc, z1)
            for y in range(hc):
                walker.start_line(y)
                for x in range(wc):
                    q = quantize_probs(walker.column_probs(y, x))
                    col = codes[0, y, x, :]
                    for dd in range(d):
                        enc.encode_bit(1 if col[dd] > 0 else 0, int(q[dd]))
                    walker.observe_column(y, x, col)
            offsets.append(enc.decoder_bytes_needed())
        data = enc.finish()
        return data, [min(o, len(data)) for o in offsets]

    def decode(self, data, code_h, code_w, iterations):
        """Inverse of :func:`encode`; returns per-iteration +-1 arrays."""
        if iterations < 1:
            raise UsageError("iterations must be >= 1")
        dt = self.arch.np_dtype
        d = self.arch.code_depth
        dec = RangeDecoder(data)
        out = []
        z1 = None
        state = self.z1_initial_state(1, code_h, code_w) if self.arch.progressive else None
        for t in range(iterations):
            if t > 0 and self.arch.progressive:
                with T.no_grad():
                    z1_t, state = self.z1_step(Tensor(out[-1]), state)
                z1 = z1_t.data
            codes = np.zeros((1, code_h, code_w, d), dtype=dt)
            walker = self._walker(code_h, code_w, z1)
            for y in range(code_h):
                walker.start_line(y)
                for x in range(code_w):
                    q = quantize_probs(walker.column_probs(y, x))
                    col = np.empty(d, dtype=dt)
                    for dd in range(d):
                        col[dd] = 1.0 if dec.decode_bit(int(q[dd])) else -1.0
                    codes[0, y, x, :] = col
                    walker.observe_column(y, x, col)
            out.append(codes)
        return out


class _ColumnWalker:
    """Column-by-column probability evaluation over partially revealed codes.

    Both the encoder (which knows the codes) and the decoder (which reveals
    them bit by bit) drive this walker the same way, so the probability each
    side feeds the range coder is computed by the identical float sequence.
    """

    def __init__(self, model, code_h, code_w, z1_data):
        arch = model.arch
        self.arch = arch
        self.h, self.w = code_h, code_w
        k = arch.context_kernel
        self.pad = k // 2
        dt = arch.np_dtype
        self.codes = np.zeros((code_h + 2 * self.pad, code_w + 2 * self.pad, arch.code_depth), dtype=dt)
        mask = model.context_conv.mask.reshape(k, k, 1, 1)
        self.ctx_w = (model.context_conv.w.data * mask).reshape(k * k * arch.code_depth, arch.feature_depth)
        self.ctx_b = model.context_conv.b.data
        self.w_in_left = model.w_in.data[0, 0]
        self.w_in_here = model.w_in.data[0, 1]
        self.w_state = model.w_state.data[0]  # (3, line_depth, 4*line_depth)
        self.b_gates = model.b_gates.data
        self.p1w = model.post1.w.data[0, 0]
        self.p1b = model.post1.b.data
        self.p2w = model.post2.w.data[0, 0]
        self.p2b = model.post2.b.data
        ld = arch.line_depth
        if z1_data is not None:
            self.z1 = z1_data[0]
        elif arch.progressive:  # first iteration of a progressive model
            self.z1 = np.zeros((code_h, code_w, arch.feature_depth), dtype=dt)
        else:
            self.z1 = None
        self.c_prev = np.zeros((code_w, ld), dtype=dt)
        self.h_prev = np.zeros((code_w, ld), dtype=dt)
        self.c_cur = np.zeros((code_w, ld), dtype=dt)
        self.h_cur = np.zeros((code_w, ld), dtype=dt)
        self.z_row = None
        self.state_row = None

    def start_line(self, y):
        if y > 0:
            self.c_prev, self.c_cur = self.c_cur, self.c_prev
            self.h_prev, self.h_cur = self.h_cur, self.h_prev
        # previous-line state contribution per column: 1x3 conv over h_prev
        hp = np.pad(self.h_prev, ((1, 1), (0, 0)))
        self.state_row = (
            hp[:-2] @ self.w_state[0] + hp[1:-1] @ self.w_state[1] + hp[2:] @ self.w_state[2]
        )
        self.z_row = np.zeros((self.w, self.arch.line_input_depth), dtype=self.codes.dtype)

    def _z_column(self, y, x):
        k = 2 * self.pad + 1
        window = self.codes[y : y + k, x : x + k, :]
        z0 = window.reshape(-1) @ self.ctx_w + self.ctx_b
        if self.z1 is not None:
            return np.concatenate([z0, self.z1[y, x, :]])
        return z0

    def column_probs(self, y, x):
        zc = self._z_column(y, x)
        self.z_row[x] = zc
        zl = self.z_row[x - 1] if x > 0 else np.zeros_like(zc)
        gates = zl @ self.w_in_left + zc @ self.w_in_here + self.state_row[x] + self.b_gates
        ld = self.arch.line_depth
        f = expit(gates[:ld])
        i = expit(gates[ld : 2 * ld])
        o = expit(gates[2 * ld : 3 * ld])
        j = np.tanh(gates[3 * ld :])
        c = f * self.c_prev[x] + i * j
        hcol = o * np.tanh(c)
        self.c_cur[x] = c
        self.h_cur[x] = hcol
        mid = np.tanh(hcol @ self.p1w + self.p1b)
        probs = expit(mid @ self.p2w + self.p2b)
        return np.clip(probs, PROB_EPS, 1.0 - PROB_EPS)

    def observe_column(self, y, x, col):
        self.codes[y + self.pad, x + self.pad, :] = col


def cross_entropy_bits(codes, probs):
    """Ideal code length in bits: -sum c*log2(p) + (1-c)*log2(1-p).

    ``codes`` may be +-1 or {0, 1} valued; ``probs`` must lie strictly inside
    (0, 1).  Differentiable in ``probs``.
    """
    data = codes.data if isinstance(codes, Tensor) else np.asarray(codes)
    c = Tensor((data > 0).astype(probs.data.dtype))
    one_minus_c = T.sub(1.0, c)
    ll = T.add(
        T.mul(c, T.log(probs)),
        T.mul(one_minus_c, T.log(T.sub(1.0, probs))),
    )
    return T.mul(T.tensor_sum(ll), -1.0 / _LOG2)
