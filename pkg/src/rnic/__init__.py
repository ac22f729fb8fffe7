"""Recurrent neural image codec.

An iterative residual image codec built on a small numpy tensor library
with reverse-mode autodiff: a convolutional recurrent encoder, a +-1
binarizer, a recurrent decoder with depth-to-space upsampling, three
reconstruction modes, a learned progressive entropy coder over the binary
codes backed by a carry-propagating range coder, quality metrics, training
loops, and a bit-exact compressed-file format.
"""

from .tensor import Tensor, no_grad
from .optim import Adam
from .cells import (
    ASSOCIATIVE_LSTM,
    CELL_KINDS,
    GRU,
    LSTM,
    RESIDUAL_GRU,
    AssocConvLstm,
    ConvGru,
    ConvLstm,
    ResidualConvGru,
    build_cell,
)
from .codec import (
    ADDITIVE,
    MODES,
    ONESHOT,
    PROFILES,
    SCALED,
    CodecArchitecture,
    CodecModel,
    IterationTrace,
    compute_loss,
    desk_architecture,
    paper_architecture,
    reconstruct_from_codes,
    run_iterations,
)
from .coder import RangeDecoder, RangeEncoder, decode_bits, encode_bits, quantize_prob
from .entropy import EntropyArchitecture, EntropyModel, cross_entropy_bits
from .metrics import RdCurve, RdPoint, RdRow, auc, msssim, psnr, write_rd_csv
from .data import PatchSet, extract_tiles, he_score, load_patches, sample_high_entropy, save_patches
from .train import TrainConfig, codes_from_patches, mean_cross_entropy, train_codec, train_entropy
from .params import content_hash, load_model, save_model
from .images import load_png, pad_image, save_png, to_signed, to_uint8
from .bitstream import (
    BitstreamHeader,
    compress_file,
    compress_image,
    decompress_file,
    decompress_image,
    pack_bits,
    unpack_bits,
)
from .evaluate import evaluate_images, rd_points, rd_rows
from . import errors

__version__ = "0.1.0"
