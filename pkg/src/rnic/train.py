"""Training loops for the codec and the entropy model.

Both loops are deterministic under a fixed seed: the same generator drives
weight init, batch sampling, and stochastic binarization, and summations
run in a fixed order, so two runs with one seed produce bit-identical loss
histories.
"""

import copy
import logging
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .codec import CodecModel, compute_loss, run_iterations
from .entropy import EntropyModel, cross_entropy_bits
from .errors import ConfigurationError, TrainingDiverged, UsageError
from .images import to_signed
from .optim import Adam
from .params import save_model
from .tensor import Tensor

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 32
    learning_rate: float = 2e-3
    seed: int = 0
    iterations: int = None  # unroll count; defaults to the architecture's
    checkpoint_interval: int = 200
    checkpoint_path: str = None  # when set, the model is saved there every interval
    log_interval: int = 100


def _snapshot(model):
    return [(name, p.data.copy()) for name, p in model.named_params()]


def _restore(model, snap):
    for (_, p), (_, data) in zip(model.named_params(), snap):
        p.data[...] = data


def train_codec(patches, arch, cfg, model=None):
    """Train a codec on 32x32 patches; returns (model, per-step loss history).

    ``patches`` is a PatchSet or a (N, 32, 32, 3) uint8 array.  Divergence
    (non-finite loss) restores the last checkpoint and raises
    :class:`TrainingDiverged`.
    """
    pixels = patches.patches if hasattr(patches, "patches") else np.asarray(patches)
    if len(pixels) == 0:
        raise UsageError("empty patch set")
    rng = np.random.default_rng(cfg.seed)
    if model is None:
        model = CodecModel(arch, rng=rng)
    data = to_signed(pixels, dtype=arch.np_dtype)
    opt = Adam(model.params(), lr=cfg.learning_rate)
    k = cfg.iterations or arch.iterations
    history = []
    good = _snapshot(model)
    good_step = 0
    for step in range(cfg.steps):
        idx = rng.integers(0, len(data), size=cfg.batch_size)
        x = Tensor(data[idx])
        trace = run_iterations(model, x, iterations=k, binarize="stochastic", rng=rng)
        loss = compute_loss(trace)
        value = float(loss.data)
        if not np.isfinite(value):
            _restore(model, good)
            raise TrainingDiverged(
                f"loss became non-finite at step {step}; restored step-{good_step} checkpoint",
                last_good_step=good_step,
            )
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(value)
        if cfg.checkpoint_interval and (step + 1) % cfg.checkpoint_interval == 0:
            good = _snapshot(model)
            good_step = step + 1
            if cfg.checkpoint_path:
                save_model(model, cfg.checkpoint_path)
        if cfg.log_interval and (step + 1) % cfg.log_interval == 0:
            log.info("codec step %d/%d loss %.5f", step + 1, cfg.steps, value)
    return model, history


def codes_from_patches(model, patches, iterations=None, batch_size=64):
    """Deterministic codes for every patch: (N, k, Hc, Wc, D) in {-1, +1}."""
    pixels = patches.patches if hasattr(patches, "patches") else np.asarray(patches)
    data = to_signed(pixels, dtype=model.arch.np_dtype)
    k = iterations or model.arch.iterations
    chunks = []
    with T.no_grad():
        for start in range(0, len(data), batch_size):
            x = Tensor(data[start : start + batch_size])
            trace = run_iterations(model, x, iterations=k, binarize="deterministic")
            chunks.append(np.stack([c.data for c in trace.codes], axis=1))
    return np.concatenate(chunks, axis=0)


def train_entropy(code_sequences, arch, cfg, codec_hash=None, model=None):
    """Train the context model on codes from one fixed codec.

    ``code_sequences`` is (N, k, Hc, Wc, D) in {-1, +1}.  ``codec_hash``
    binds the result to the codec that produced the codes and is mandatory.
    Returns (model, per-step bits-per-bit history).
    """
    if codec_hash is None:
        raise ConfigurationError("entropy training requires the producing codec's content hash")
    seqs = np.asarray(code_sequences, dtype=arch.np_dtype)
    if seqs.ndim != 5:
        raise UsageError("code sequences must be (N, iterations, h, w, depth)")
    n, k = seqs.shape[:2]
    if n == 0:
        raise UsageError("empty code dataset")
    rng = np.random.default_rng(cfg.seed)
    if model is None:
        model = EntropyModel(arch, rng=rng)
    model.codec_hash = codec_hash
    opt = Adam(model.params(), lr=cfg.learning_rate)
    bits_per_item = k * int(np.prod(seqs.shape[2:]))
    history = []
    for step in range(cfg.steps):
        idx = rng.integers(0, n, size=cfg.batch_size)
        batch = seqs[idx]
        codes_list = [Tensor(np.ascontiguousarray(batch[:, t])) for t in range(k)]
        probs = model.sequence_probabilities(codes_list)
        total = None
        for codes_t, probs_t in zip(codes_list, probs):
            ce = cross_entropy_bits(codes_t, probs_t)
            total = ce if total is None else T.add(total, ce)
        loss = T.mul(total, 1.0 / (cfg.batch_size * bits_per_item))  # bits per bit
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainingDiverged(f"entropy loss became non-finite at step {step}", last_good_step=step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(value)
        if cfg.log_interval and (step + 1) % cfg.log_interval == 0:
            log.info("entropy step %d/%d bits/bit %.4f", step + 1, cfg.steps, value)
    return model, history


def mean_cross_entropy(model, code_sequences):
    """Bits per bit of the model on held-out code sequences (no training)."""
    seqs = np.asarray(code_sequences, dtype=model.arch.np_dtype)
    n, k = seqs.shape[:2]
    total_bits = 0.0
    with T.no_grad():
        for i in range(n):
            codes_list = [Tensor(seqs[i : i + 1, t]) for t in range(k)]
            probs = model.sequence_probabilities(codes_list)
            for codes_t, probs_t in zip(codes_list, probs):
                total_bits += float(cross_entropy_bits(codes_t, probs_t).data)
    return total_bits / seqs.size


def deep_copy_model(model):
    return copy.deepcopy(model)
