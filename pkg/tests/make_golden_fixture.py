"""Regenerate the golden bitstream fixtures under tests/data/.

Run from the repository root:  python3 tests/make_golden_fixture.py

The fixtures pin the compressed format: models are rebuilt from fixed
seeds (generator streams are platform-stable), so any change to the bit
layout, the range coder, or the model evaluation order shows up as a
byte-level diff in the acceptance suite.
"""

from pathlib import Path

import numpy as np

from rnic.bitstream import compress_image, decompress_image
from rnic.codec import CodecModel
from rnic.entropy import EntropyArchitecture, EntropyModel
from rnic.params import content_hash

from test_codec import tiny_arch

DATA = Path(__file__).parent / "data"

GOLDEN_CODEC_SEED = 42
GOLDEN_ENTROPY_SEED = 43
GOLDEN_IMAGE_SEED = 31337
GOLDEN_ITERATIONS = 3
GOLDEN_IMAGE_SHAPE = (48, 33)  # exercises replicate padding


def golden_models():
    model = CodecModel(tiny_arch(), seed=GOLDEN_CODEC_SEED)
    arch = EntropyArchitecture(code_depth=model.arch.code_depth, feature_depth=8, line_depth=8)
    ent = EntropyModel(arch, seed=GOLDEN_ENTROPY_SEED)
    ent.codec_hash = content_hash(model)
    return model, ent


def golden_image():
    gen = np.random.default_rng(GOLDEN_IMAGE_SEED)
    h, w = GOLDEN_IMAGE_SHAPE
    return gen.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def main():
    DATA.mkdir(exist_ok=True)
    model, ent = golden_models()
    pixels = golden_image()
    raw = compress_image(pixels, model, iterations=GOLDEN_ITERATIONS)
    coded = compress_image(pixels, model, iterations=GOLDEN_ITERATIONS, entropy_model=ent)
    (DATA / "golden_raw.rnic").write_bytes(raw)
    (DATA / "golden_coded.rnic").write_bytes(coded)
    decoded = decompress_image(raw, model)
    np.save(DATA / "golden_decoded.npy", decoded)
    assert np.array_equal(decompress_image(coded, model, entropy_model=ent), decoded)
    print(f"wrote golden fixtures: raw {len(raw)} B, coded {len(coded)} B, "
          f"decoded {decoded.shape}")


if __name__ == "__main__":
    main()
