"""Patch datasets: tiling, compressibility scoring, high-entropy sampling.

The high-entropy sampler keeps the tiles that a deterministic lossless
compressor shrinks the least, a cheap proxy for "hard to compress" content.
"""

import io
import json
import struct
import warnings
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, UsageError

TILE = 32
_SCORE_LEVEL = 6  # fixed deflate level so scores are reproducible

_MAGIC = b"RNPS"
_VERSION = 1


@dataclass
class PatchSet:
    """Fixed-size RGB patches plus where each one came from.

    ``provenance[i]`` is (source_id, y, x, score); score is -1 until scored.
    """

    patches: np.ndarray = field(default_factory=lambda: np.zeros((0, TILE, TILE, 3), np.uint8))
    provenance: list = field(default_factory=list)

    def __len__(self):
        return len(self.patches)

    def __post_init__(self):
        p = self.patches
        if p.ndim != 4 or p.shape[1:] != (TILE, TILE, 3) or p.dtype != np.uint8:
            raise UsageError(f"patches must be (N, {TILE}, {TILE}, 3) uint8")
        if len(self.provenance) != len(p):
            raise UsageError("provenance length must match patch count")

    @staticmethod
    def concatenate(sets):
        if not sets:
            return PatchSet()
        return PatchSet(
            patches=np.concatenate([s.patches for s in sets], axis=0),
            provenance=[pv for s in sets for pv in s.provenance],
        )


def extract_tiles(image, source_id=""):
    """Cut an image into non-overlapping 32x32 tiles; remainders are dropped."""
    image = np.asarray(image)
    h, w = image.shape[:2]
    ny, nx = h // TILE, w // TILE
    if ny == 0 or nx == 0:
        warnings.warn(f"image {w}x{h} smaller than one {TILE}x{TILE} tile; nothing extracted")
        return PatchSet()
    cropped = image[: ny * TILE, : nx * TILE, :]
    tiles = (
        cropped.reshape(ny, TILE, nx, TILE, 3)
        .transpose(0, 2, 1, 3, 4)
        .reshape(ny * nx, TILE, TILE, 3)
    )
    prov = [(source_id, y * TILE, x * TILE, -1) for y in range(ny) for x in range(nx)]
    return PatchSet(patches=np.ascontiguousarray(tiles), provenance=prov)


def he_score(tile):
    """Compressed byte length of the raw tile under fixed-level deflate.

    Higher means harder to compress; deterministic for a given tile.
    """
    tile = np.ascontiguousarray(tile, dtype=np.uint8)
    return len(zlib.compress(tile.tobytes(), _SCORE_LEVEL))


def sample_high_entropy(image, count=100, source_id=""):
    """The ``count`` least-compressible tiles, score ties broken by (y, x)."""
    tiles = extract_tiles(image, source_id)
    n = len(tiles)
    if n == 0:
        return tiles
    scores = np.array([he_score(t) for t in tiles.patches])
    if n < count:
        warnings.warn(f"only {n} tiles available, fewer than the requested {count}")
        count = n
    order = sorted(range(n), key=lambda i: (-scores[i], tiles.provenance[i][1], tiles.provenance[i][2]))
    keep = order[:count]
    return PatchSet(
        patches=tiles.patches[keep],
        provenance=[
            (tiles.provenance[i][0], tiles.provenance[i][1], tiles.provenance[i][2], int(scores[i]))
            for i in keep
        ],
    )


def save_patches(patch_set, path):
    """Binary container: raw RGB patch blob plus a provenance index."""
    meta = json.dumps({
        "count": len(patch_set),
        "tile": TILE,
        "provenance": [list(p) for p in patch_set.provenance],
    }).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BI", _VERSION, len(meta)))
        fh.write(meta)
        fh.write(patch_set.patches.tobytes())


def load_patches(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    buf = io.BytesIO(blob)
    if buf.read(4) != _MAGIC:
        raise FormatError(f"{path}: not a patch-set file")
    version, meta_len = struct.unpack("<BI", buf.read(5))
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported patch-set version {version}")
    meta = json.loads(buf.read(meta_len))
    count = meta["count"]
    raw = buf.read(count * TILE * TILE * 3)
    if len(raw) != count * TILE * TILE * 3:
        raise FormatError(f"{path}: truncated patch data")
    patches = np.frombuffer(raw, dtype=np.uint8).reshape(count, TILE, TILE, 3)
    return PatchSet(patches=patches.copy(), provenance=[tuple(p) for p in meta["provenance"]])
