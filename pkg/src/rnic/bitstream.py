"""Compressed-file format and the end-to-end compress/decompress paths.

Header (little-endian, fixed length):

====== ===== =====================================================
offset bytes field
====== ===== =====================================================
0      4     magic ``RNIC``
4      1     version (1)
5      4     original width, u32
9      4     original height, u32
13     1     iteration count k
14     1     flags: bit0 entropy-coded payload, bit1 scaled mode
15     16    codec model content hash
31     16    entropy model content hash (zeros for raw payloads)
====== ===== =====================================================

Raw payloads pack codes MSB-first in (iteration, y, x, depth) order, each
iteration padded to a byte boundary, so any prefix of whole iteration
blocks decodes.  Entropy-coded payloads start with a table of k u32 prefix
lengths (bytes of the arithmetic stream sufficient to decode iterations
0..t) followed by the stream itself; truncating at any table entry leaves
a decodable prefix.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import codec as codec_mod
from . import tensor as T
from .codec import reconstruct_from_codes, run_iterations
from .errors import DecodeError, FormatError, ModelMismatchError, UsageError
from .images import load_png, pad_image, save_png, to_signed, to_uint8
from .params import content_hash
from .tensor import Tensor

MAGIC = b"RNIC"
VERSION = 1
_HEADER = struct.Struct("<4sBIIBB16s16s")
HEADER_LEN = _HEADER.size

FLAG_ENTROPY = 0x01
FLAG_SCALED = 0x02


@dataclass(frozen=True)
class BitstreamHeader:
    width: int
    height: int
    iterations: int
    entropy_coded: bool
    scaled: bool
    codec_hash: bytes
    entropy_hash: bytes

    def pack(self):
        flags = (FLAG_ENTROPY if self.entropy_coded else 0) | (FLAG_SCALED if self.scaled else 0)
        return _HEADER.pack(
            MAGIC, VERSION, self.width, self.height, self.iterations, flags,
            self.codec_hash, self.entropy_hash,
        )

    @classmethod
    def unpack(cls, data):
        if len(data) < HEADER_LEN:
            raise FormatError("bitstream shorter than its header")
        magic, version, width, height, k, flags, chash, ehash = _HEADER.unpack(data[:HEADER_LEN])
        if magic != MAGIC:
            raise FormatError("bad magic: not a compressed image stream")
        if version != VERSION:
            raise FormatError(f"unsupported bitstream version {version}")
        if width < 1 or height < 1 or k < 1:
            raise FormatError("header fields out of range")
        return cls(
            width=width, height=height, iterations=k,
            entropy_coded=bool(flags & FLAG_ENTROPY), scaled=bool(flags & FLAG_SCALED),
            codec_hash=chash, entropy_hash=ehash,
        )


def pack_bits(codes):
    """Pack +-1 codes MSB-first: -1 -> 0, +1 -> 1; zero-padded to a byte."""
    flat = (np.asarray(codes).reshape(-1) > 0).astype(np.uint8)
    return np.packbits(flat).tobytes()


def unpack_bits(data, shape):
    """Inverse of :func:`pack_bits` for a known code-tensor shape."""
    count = int(np.prod(shape))
    if len(data) != (count + 7) // 8:
        raise FormatError(f"payload block is {len(data)} bytes, expected {(count + 7) // 8}")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=count)
    return np.where(bits > 0, 1.0, -1.0).astype(np.float32).reshape(shape)


def _code_grid(header, multiple):
    ph = -(-header.height // multiple) * multiple
    pw = -(-header.width // multiple) * multiple
    return ph // codec_mod.DOWNSCALE, pw // codec_mod.DOWNSCALE


def compress_image(pixels, model, iterations=None, entropy_model=None):
    """Compress an RGB uint8 array; returns the full bitstream bytes."""
    arch = model.arch
    k = iterations or arch.iterations
    if k < 1 or k > 255:
        raise UsageError("iteration count must be in [1, 255]")
    codec_hash = content_hash(model)
    entropy_hash = b"\x00" * 16
    if entropy_model is not None:
        if getattr(entropy_model, "codec_hash", None) != codec_hash:
            raise ModelMismatchError("entropy model was trained for a different codec")
        if entropy_model.arch.code_depth != arch.code_depth:
            raise ModelMismatchError("entropy model code depth does not match the codec")
        entropy_hash = content_hash(entropy_model)

    h0, w0 = pixels.shape[:2]
    padded, _ = pad_image(pixels, arch.pad_multiple)
    x = Tensor(to_signed(padded, dtype=arch.np_dtype)[None])
    with T.no_grad():
        trace = run_iterations(model, x, iterations=k, binarize="deterministic")
    codes = [c.data for c in trace.codes]

    header = BitstreamHeader(
        width=w0, height=h0, iterations=k,
        entropy_coded=entropy_model is not None,
        scaled=arch.mode == codec_mod.SCALED,
        codec_hash=codec_hash, entropy_hash=entropy_hash,
    )
    if entropy_model is None:
        payload = b"".join(pack_bits(c) for c in codes)
    else:
        data, offsets = entropy_model.encode(codes)
        payload = struct.pack(f"<{k}I", *offsets) + data
    return header.pack() + payload


def decompress_image(stream, model, iterations=None, entropy_model=None):
    """Decode a bitstream back to an RGB uint8 array (cropped to original size)."""
    header = BitstreamHeader.unpack(stream)
    arch = model.arch
    if header.codec_hash != content_hash(model):
        raise ModelMismatchError("bitstream was produced by a different codec model")
    if header.scaled != (arch.mode == codec_mod.SCALED):
        raise FormatError("bitstream mode flag disagrees with the model's mode")
    j = header.iterations if iterations is None else iterations
    if j < 1:
        raise UsageError("need at least one iteration to reconstruct")
    if j > header.iterations:
        raise UsageError(f"stream holds {header.iterations} iterations, {j} requested")

    hc, wc = _code_grid(header, arch.pad_multiple)
    payload = stream[HEADER_LEN:]
    if header.entropy_coded:
        if entropy_model is None:
            raise UsageError("stream is entropy-coded; an entropy model is required")
        if content_hash(entropy_model) != header.entropy_hash:
            raise ModelMismatchError("bitstream was produced with a different entropy model")
        if getattr(entropy_model, "codec_hash", None) != header.codec_hash:
            raise ModelMismatchError("entropy model is not bound to this stream's codec")
        table_len = header.iterations * 4
        if len(payload) < table_len:
            raise DecodeError("truncated offsets table")
        offsets = struct.unpack(f"<{header.iterations}I", payload[:table_len])
        body = payload[table_len:]
        if len(body) < offsets[j - 1]:
            raise DecodeError(
                f"stream truncated: decoding {j} iterations needs {offsets[j - 1]} bytes, have {len(body)}"
            )
        codes = entropy_model.decode(body[: offsets[j - 1]], hc, wc, j)
    else:
        shape = (1, hc, wc, arch.code_depth)
        block = (int(np.prod(shape)) + 7) // 8
        if len(payload) < block * j:
            raise DecodeError(
                f"stream truncated: {j} iterations need {block * j} payload bytes, have {len(payload)}"
            )
        if len(payload) % block:
            raise FormatError("payload is not a whole number of iteration blocks")
        codes = [unpack_bits(payload[t * block : (t + 1) * block], shape) for t in range(j)]

    with T.no_grad():
        xhat = reconstruct_from_codes(model, codes, mode=arch.mode)
    pixels = to_uint8(xhat.data[0])
    return pixels[: header.height, : header.width]


def compress_file(image_path, model, out_path, iterations=None, entropy_model=None):
    pixels = load_png(image_path)
    stream = compress_image(pixels, model, iterations=iterations, entropy_model=entropy_model)
    with open(out_path, "wb") as fh:
        fh.write(stream)
    return len(stream)


def decompress_file(stream_path, model, out_path, iterations=None, entropy_model=None):
    try:
        with open(stream_path, "rb") as fh:
            stream = fh.read()
    except FileNotFoundError:
        raise UsageError(f"bitstream file not found: {stream_path}")
    pixels = decompress_image(stream, model, iterations=iterations, entropy_model=entropy_model)
    save_png(out_path, pixels)
    return pixels
