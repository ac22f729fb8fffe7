"""The image codec: recurrent encoder, binarizer, recurrent decoder, gain net.

One iteration encodes the current residual down to a (H/16, W/16, code_depth)
tensor of {-1, +1} codes and decodes it back to an image-sized term.  Running
``run_iterations`` unrolls the loop, propagating recurrent state, under one
of three reconstruction modes:

- ``oneshot``:  each iteration predicts the full image from its codes.
- ``additive``: each iteration predicts a correction added to the running
  reconstruction.
- ``scaled``:   additive, with the residual multiplied by a per-block gain
  before encoding and the decoded term divided by the same gain.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from . import cells, tensor as T
from .errors import ConfigurationError, UsageError
from .layers import Conv2d, collect_params
from .tensor import Tensor

ONESHOT = "oneshot"
ADDITIVE = "additive"
SCALED = "scaled"
MODES = (ONESHOT, ADDITIVE, SCALED)

GAIN_BLOCK = 32  # one gain value per 32x32 pixel block (five stride-2 layers)
DOWNSCALE = 16  # total encoder downsampling factor


@dataclass(frozen=True)
class CodecArchitecture:
    """Layer depths and wiring for one codec model.

    ``enc_depths`` lists (input conv, rnn1..rnn3); ``dec_depths`` lists
    (input conv, rnn1..rnn4).  Kernels, strides, and hidden-kernel sizes are
    fixed by the topology: encoder layers downsample by 2 each, decoder
    layers upsample by 2 each through depth-to-space, and only the last two
    decoder cells use 3x3 hidden kernels.  When ``cell`` is the associative
    LSTM, the encoder uses plain LSTM cells (the associative variant is only
    effective on the decoder side).
    """

    cell: str = cells.GRU
    mode: str = ONESHOT
    enc_depths: tuple = (64, 256, 512, 512)
    code_depth: int = 32
    dec_depths: tuple = (512, 512, 512, 256, 128)
    gain_depth: int = 32
    iterations: int = 16
    dtype: str = "float32"

    def __post_init__(self):
        if self.cell not in cells.CELL_KINDS:
            raise ConfigurationError(f"unknown cell kind {self.cell!r}")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown reconstruction mode {self.mode!r}")
        for d in self.dec_depths[1:]:
            if d % 4 != 0:
                raise ConfigurationError("decoder cell depths must be divisible by 4 for depth-to-space")
        if self.iterations < 1:
            raise ConfigurationError("iteration count must be >= 1")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    @property
    def pad_multiple(self):
        return GAIN_BLOCK if self.mode == SCALED else DOWNSCALE

    def to_dict(self):
        d = asdict(self)
        d["enc_depths"] = list(self.enc_depths)
        d["dec_depths"] = list(self.dec_depths)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["enc_depths"] = tuple(d["enc_depths"])
        d["dec_depths"] = tuple(d["dec_depths"])
        return cls(**d)


def paper_architecture(cell=cells.GRU, mode=ONESHOT, dtype="float32"):
    """Full-size architecture: x16 downsampling to depth-32 codes, k=16."""
    return CodecArchitecture(cell=cell, mode=mode, dtype=dtype)


def desk_architecture(cell=cells.GRU, mode=ONESHOT, dtype="float32"):
    """Reduced profile (all depths divided by 8, k=8) for minutes-scale runs."""
    return CodecArchitecture(
        cell=cell,
        mode=mode,
        enc_depths=(8, 32, 64, 64),
        code_depth=4,
        dec_depths=(64, 64, 64, 32, 16),
        gain_depth=4,
        iterations=8,
        dtype=dtype,
    )


PROFILES = {"paper": paper_architecture, "desk": desk_architecture}


class Encoder:
    """Four stride-2 stages: one plain conv then three recurrent layers."""

    def __init__(self, rng, arch):
        dt = arch.np_dtype
        d0, d1, d2, d3 = arch.enc_depths
        kind = cells.LSTM if arch.cell == cells.ASSOCIATIVE_LSTM else arch.cell
        self.conv = Conv2d(rng, 3, 3, 3, d0, stride=2, dtype=dt)
        self.rnn = [
            cells.build_cell(kind, rng, d0, d1, 3, stride=2, hidden_kernel=1, dtype=dt),
            cells.build_cell(kind, rng, d1, d2, 3, stride=2, hidden_kernel=1, dtype=dt),
            cells.build_cell(kind, rng, d2, d3, 3, stride=2, hidden_kernel=1, dtype=dt),
        ]

    def named_params(self):
        mods = [("conv", self.conv)] + [(f"rnn{i + 1}", c) for i, c in enumerate(self.rnn)]
        return collect_params("", mods)

    def zero_state(self, batch, height, width, dtype=None):
        return [
            cell.zero_state(batch, height >> (2 + i), width >> (2 + i), dtype)
            for i, cell in enumerate(self.rnn)
        ]

    def __call__(self, x, states):
        h = self.conv(x)
        new_states = []
        for cell, st in zip(self.rnn, states):
            h, st = cell(h, st)
            new_states.append(st)
        return h, new_states


class Binarizer:
    """Stateless 1x1 conv with tanh activation followed by binarization.

    ``stochastic`` samples +-1 with P(+1) = (1 + a) / 2 (unbiased, used in
    training); ``deterministic`` takes the sign with sign(0) := +1 (used at
    inference so bitstreams are reproducible); ``bypass`` returns the tanh
    activation itself, for smooth-path diagnostics only.
    """

    def __init__(self, rng, arch):
        self.conv = Conv2d(rng, 1, 1, arch.enc_depths[-1], arch.code_depth, dtype=arch.np_dtype)

    def named_params(self):
        return collect_params("", [("conv", self.conv)])

    def activations(self, latent):
        return T.tanh(self.conv(latent))

    def __call__(self, latent, method="deterministic", rng=None):
        a = self.activations(latent)
        if method == "stochastic":
            if rng is None:
                raise UsageError("stochastic binarization needs an rng")
            return T.binarize_stochastic(a, rng)
        if method == "deterministic":
            return T.binarize_sign(a)
        if method == "bypass":
            return a
        raise UsageError(f"unknown binarization method {method!r}")


class Decoder:
    """Mirror of the encoder: four recurrent stages, each followed by
    depth-to-space upsampling, then a 1x1 conv with tanh to pixel range."""

    def __init__(self, rng, arch):
        dt = arch.np_dtype
        d0, d1, d2, d3, d4 = arch.dec_depths
        kernels = (2, 3, 3, 3)
        hidden = (1, 1, 3, 3)
        in_depths = (d0, d1 // 4, d2 // 4, d3 // 4)
        self.conv1 = Conv2d(rng, 1, 1, arch.code_depth, d0, dtype=dt)
        self.rnn = [
            cells.build_cell(arch.cell, rng, cin, d, k, stride=1, hidden_kernel=hk, dtype=dt)
            for cin, d, k, hk in zip(in_depths, (d1, d2, d3, d4), kernels, hidden)
        ]
        self.conv2 = Conv2d(rng, 1, 1, d4 // 4, 3, dtype=dt)

    def named_params(self):
        mods = [("conv1", self.conv1)] + [(f"rnn{i + 1}", c) for i, c in enumerate(self.rnn)] + [("conv2", self.conv2)]
        return collect_params("", mods)

    def zero_state(self, batch, code_h, code_w, dtype=None):
        return [
            cell.zero_state(batch, code_h << i, code_w << i, dtype)
            for i, cell in enumerate(self.rnn)
        ]

    def __call__(self, codes, states):
        h = self.conv1(codes)
        new_states = []
        for cell, st in zip(self.rnn, states):
            h, st = cell(h, st)
            new_states.append(st)
            h = T.depth_to_space(h, 2)
        return T.tanh(self.conv2(h)), new_states


class GainNet:
    """Per-block gain estimator: five stride-2 ELU convs, output offset by 2.

    Collapses each 32x32 block of the running reconstruction to one value in
    (1, inf); the first four layers are 3x3, the last is 2x2 with depth 1.
    """

    def __init__(self, rng, arch):
        dt = arch.np_dtype
        g = arch.gain_depth
        self.convs = [Conv2d(rng, 3, 3, 3, g, stride=2, dtype=dt)]
        self.convs += [Conv2d(rng, 3, 3, g, g, stride=2, dtype=dt) for _ in range(3)]
        self.convs.append(Conv2d(rng, 2, 2, g, 1, stride=2, dtype=dt))

    def named_params(self):
        return collect_params("", [(f"conv{i + 1}", c) for i, c in enumerate(self.convs)])

    def __call__(self, xhat):
        _, h, w, _ = xhat.data.shape
        if h % GAIN_BLOCK or w % GAIN_BLOCK:
            raise ConfigurationError(f"gain estimation needs dims divisible by {GAIN_BLOCK}, got {h}x{w}")
        out = xhat
        for conv in self.convs:
            out = T.elu(conv(out))
        return T.add(out, 2.0)


class CodecModel:
    """All learned pieces of one codec, built from a seeded rng."""

    def __init__(self, arch, rng=None, seed=0):
        rng = rng if rng is not None else np.random.default_rng(seed)
        self.arch = arch
        self.encoder = Encoder(rng, arch)
        self.binarizer = Binarizer(rng, arch)
        self.decoder = Decoder(rng, arch)
        self.gain = GainNet(rng, arch) if arch.mode == SCALED else None

    def named_params(self):
        mods = [("encoder", self.encoder), ("binarizer", self.binarizer), ("decoder", self.decoder)]
        if self.gain is not None:
            mods.append(("gain", self.gain))
        return collect_params("", mods)

    def params(self):
        return [p for _, p in self.named_params()]


@dataclass
class IterationTrace:
    """Per-iteration outputs of one unrolled run.

    ``codes[t]`` is the (B, H/16, W/16, code_depth) tensor of +-1 codes,
    ``reconstructions[t]`` the running estimate, ``residuals[t]`` the
    difference input - estimate, and ``gains[t]`` the gain map (scaled mode
    only, None otherwise).
    """

    mode: str
    input_shape: tuple
    codes: list = field(default_factory=list)
    reconstructions: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    gains: list = field(default_factory=list)

    def __len__(self):
        return len(self.codes)

    def code_bits(self):
        """Total raw code bits over all iterations (exact integer)."""
        return sum(int(np.prod(c.data.shape[1:])) for c in self.codes)

    def bits_per_pixel(self):
        b, h, w, _ = self.input_shape
        return self.code_bits() / (h * w)


def _check_input(x, arch):
    if x.data.ndim != 4 or x.data.shape[3] != 3:
        raise ConfigurationError("codec input must be (batch, height, width, 3)")
    m = arch.pad_multiple
    _, h, w, _ = x.data.shape
    if h % m or w % m:
        raise ConfigurationError(
            f"input dims {h}x{w} must be multiples of {m} here; pad upstream first"
        )


def _decoder_update(model, codes, dec_states, xhat_prev, gain_up, mode):
    """One decoder step plus reconstruction bookkeeping (shared by the
    full loop and the decode-only path, so both produce identical floats)."""
    dec_out, dec_states = model.decoder(codes, dec_states)
    if mode == ONESHOT:
        xhat = dec_out
    elif mode == ADDITIVE:
        xhat = T.add(xhat_prev, dec_out)
    else:
        xhat = T.add(xhat_prev, T.div(dec_out, gain_up))
    return xhat, dec_states


def run_iterations(model, x, iterations=None, binarize="deterministic", rng=None, mode=None):
    """Unroll the full encode/decode loop and return the trace.

    ``x`` must already be mapped to [-1, 1] and padded to the architecture's
    multiple.  ``binarize`` selects the binarizer behavior; deterministic
    runs are bit-reproducible.
    """
    arch = model.arch
    mode = mode or arch.mode
    k = iterations if iterations is not None else arch.iterations
    if k < 1:
        raise UsageError("iteration count must be >= 1")
    if mode == SCALED and model.gain is None:
        raise ConfigurationError("model has no gain network; rebuild with scaled mode")
    _check_input(x, arch)
    bsz, h, w, _ = x.data.shape

    enc_states = model.encoder.zero_state(bsz, h, w)
    dec_states = model.decoder.zero_state(bsz, h // DOWNSCALE, w // DOWNSCALE)
    xhat = Tensor(np.zeros_like(x.data))
    gain = Tensor(np.ones((bsz, h // GAIN_BLOCK, w // GAIN_BLOCK, 1), dtype=x.data.dtype)) if mode == SCALED else None
    residual = x
    trace = IterationTrace(mode=mode, input_shape=x.data.shape)

    for _ in range(k):
        if mode == SCALED:
            gain_up = T.zoh_upsample(gain, GAIN_BLOCK)
            enc_in = T.mul(residual, gain_up)
        else:
            gain_up = None
            enc_in = residual
        latent, enc_states = model.encoder(enc_in, enc_states)
        codes = model.binarizer(latent, binarize, rng)
        xhat, dec_states = _decoder_update(model, codes, dec_states, xhat, gain_up, mode)
        residual = T.sub(x, xhat)
        if mode == SCALED:
            gain = model.gain(xhat)
        trace.codes.append(codes)
        trace.reconstructions.append(xhat)
        trace.residuals.append(residual)
        trace.gains.append(gain if mode == SCALED else None)
    return trace


def reconstruct_from_codes(model, codes_list, mode=None, return_all=False):
    """Decode-only reconstruction from per-iteration code tensors."""
    arch = model.arch
    mode = mode or arch.mode
    if not codes_list:
        raise UsageError("need at least one iteration of codes")
    first = codes_list[0]
    bsz, ch, cw, _ = first.data.shape if isinstance(first, Tensor) else first.shape
    h, w = ch * DOWNSCALE, cw * DOWNSCALE
    dec_states = model.decoder.zero_state(bsz, ch, cw)
    dt = arch.np_dtype
    xhat = Tensor(np.zeros((bsz, h, w, 3), dtype=dt))
    gain = Tensor(np.ones((bsz, h // GAIN_BLOCK, w // GAIN_BLOCK, 1), dtype=dt)) if mode == SCALED else None
    outs = []
    for codes in codes_list:
        if not isinstance(codes, Tensor):
            codes = Tensor(np.asarray(codes, dtype=dt))
        gain_up = T.zoh_upsample(gain, GAIN_BLOCK) if mode == SCALED else None
        xhat, dec_states = _decoder_update(model, codes, dec_states, xhat, gain_up, mode)
        if mode == SCALED:
            gain = model.gain(xhat)
        if return_all:
            outs.append(xhat)
    return outs if return_all else xhat


def compute_loss(trace):
    """Mean-normalized L1 reconstruction loss summed over all iterations.

    The sum of |residual| over batch, pixels, channels, and iterations is
    weighted by 1 / (B * H * W * C * n), so a trace with perfect
    reconstructions scores 0 and the scale is comparable across configs.
    """
    b, h, w, c = trace.input_shape
    n = len(trace)
    beta = 1.0 / (b * h * w * c * n)
    total = None
    for r in trace.residuals:
        s = T.tensor_sum(T.absolute(r))
        total = s if total is None else T.add(total, s)
    return T.mul(total, beta)
