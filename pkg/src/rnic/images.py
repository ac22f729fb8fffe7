"""Image loading, pixel mapping, and padding.

Pixels map from [0, 255] to [-1, 1] via p / 127.5 - 1 so the codec's tanh
output range covers the whole pixel range; the inverse rounds to nearest
and clips.  Padding replicates the right and bottom edges (never zeros,
which would leak a dark border into edge blocks).
"""

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, UsageError


def load_png(path):
    """Read an image file as (H, W, 3) uint8 RGB."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except FileNotFoundError:
        raise UsageError(f"image file not found: {path}")
    except UnidentifiedImageError:
        raise FormatError(f"not a readable image file: {path}")


def save_png(path, pixels):
    Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def to_signed(pixels, dtype=np.float32):
    """uint8 [0, 255] -> float [-1, 1]."""
    return (np.asarray(pixels, dtype=dtype) / 127.5 - 1.0).astype(dtype)


def to_uint8(signed):
    """float [-1, 1] -> uint8 [0, 255], round-to-nearest-even then clip."""
    return np.clip(np.rint((np.asarray(signed) + 1.0) * 127.5), 0.0, 255.0).astype(np.uint8)


def pad_image(pixels, multiple):
    """Replicate-pad right/bottom to the next multiple; returns (padded, (h, w)).

    The original dimensions travel in the bitstream header so decoding can
    crop back.
    """
    h, w = pixels.shape[:2]
    ph = (multiple - h % multiple) % multiple
    pw = (multiple - w % multiple) % multiple
    if ph == 0 and pw == 0:
        return pixels, (h, w)
    padded = np.pad(pixels, ((0, ph), (0, pw), (0, 0)), mode="edge")
    return padded, (h, w)
