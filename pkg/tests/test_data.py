"""Tiling, compressibility scoring, high-entropy sampling, patch container."""

import numpy as np
import pytest

from rnic.data import PatchSet, extract_tiles, he_score, load_patches, sample_high_entropy, save_patches
from rnic.errors import FormatError


def flat_tile(value=128):
    return np.full((32, 32, 3), value, np.uint8)


def noise_tile(gen):
    return gen.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)


def build_image(tiles_grid):
    """Assemble a grid of 32x32 tiles into one image."""
    rows = [np.concatenate(row, axis=1) for row in tiles_grid]
    return np.concatenate(rows, axis=0)


class TestExtractTiles:
    def test_hd_image_tile_count(self, rng):
        img = rng.integers(0, 256, size=(720, 1280, 3), dtype=np.uint8)
        tiles = extract_tiles(img)
        assert len(tiles) == 880  # 22 * 40

    def test_single_tile(self):
        assert len(extract_tiles(flat_tile())) == 1

    def test_no_full_row_of_tiles(self, rng):
        img = rng.integers(0, 256, size=(31, 64, 3), dtype=np.uint8)
        with pytest.warns(UserWarning):
            tiles = extract_tiles(img)
        assert len(tiles) == 0

    def test_coordinates_are_tile_multiples(self, rng):
        img = rng.integers(0, 256, size=(96, 70, 3), dtype=np.uint8)
        tiles = extract_tiles(img, source_id="x")
        assert len(tiles) == 3 * 2  # remainder column dropped
        for _, y, x, _ in tiles.provenance:
            assert y % 32 == 0 and x % 32 == 0

    def test_tiles_match_source_pixels(self, rng):
        img = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
        tiles = extract_tiles(img)
        for patch, (_, y, x, _) in zip(tiles.patches, tiles.provenance):
            assert np.array_equal(patch, img[y : y + 32, x : x + 32])


class TestHeScore:
    def test_flat_tile_near_floor(self):
        assert he_score(flat_tile()) < 100

    def test_noise_tile_incompressible(self, rng):
        assert he_score(noise_tile(rng)) > 3000

    def test_deterministic(self, rng):
        t = noise_tile(rng)
        assert he_score(t) == he_score(t.copy())


class TestSampleHighEntropy:
    def test_noise_tiles_always_win(self, rng):
        grid = [[flat_tile(i * 8 + j) for j in range(8)] for i in range(8)]
        noise_at = [(1, 2), (4, 7), (6, 0)]
        for (i, j) in noise_at:
            grid[i][j] = noise_tile(rng)
        img = build_image(grid)
        picked = sample_high_entropy(img, count=3)
        got = sorted((y // 32, x // 32) for _, y, x, _ in picked.provenance)
        assert got == sorted(noise_at)

    def test_score_dominance(self, rng):
        img = rng.integers(0, 256, size=(128, 128, 3), dtype=np.uint8)
        img[:64] //= 8  # make the top half smoother, hence more compressible
        picked = sample_high_entropy(img, count=6)
        tiles = extract_tiles(img)
        all_scores = {(y, x): he_score(t) for t, (_, y, x, _) in zip(tiles.patches, tiles.provenance)}
        picked_keys = {(y, x) for _, y, x, _ in picked.provenance}
        min_picked = min(all_scores[k] for k in picked_keys)
        max_excluded = max(all_scores[k] for k in all_scores if k not in picked_keys)
        assert min_picked >= max_excluded

    def test_tie_break_raster_order(self):
        img = build_image([[flat_tile(50) for _ in range(4)] for _ in range(2)])
        picked = sample_high_entropy(img, count=3)
        coords = [(y, x) for _, y, x, _ in picked.provenance]
        assert coords == [(0, 0), (0, 32), (0, 64)]

    def test_fewer_tiles_than_requested(self, rng):
        img = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
        with pytest.warns(UserWarning):
            picked = sample_high_entropy(img, count=100)
        assert len(picked) == 4


class TestPatchContainer:
    def test_roundtrip(self, tmp_path, rng):
        img = rng.integers(0, 256, size=(96, 96, 3), dtype=np.uint8)
        tiles = sample_high_entropy(img, count=5, source_id="img1.png")
        path = tmp_path / "patches.rnps"
        save_patches(tiles, path)
        loaded = load_patches(path)
        assert np.array_equal(loaded.patches, tiles.patches)
        assert loaded.provenance == tiles.provenance

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.rnps"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(FormatError):
            load_patches(path)

    def test_truncated_rejected(self, tmp_path, rng):
        img = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
        tiles = extract_tiles(img)
        path = tmp_path / "patches.rnps"
        save_patches(tiles, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 100])
        with pytest.raises(FormatError):
            load_patches(path)

    def test_concatenate(self, rng):
        a = extract_tiles(rng.integers(0, 256, size=(32, 64, 3), dtype=np.uint8), "a")
        b = extract_tiles(rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8), "b")
        both = PatchSet.concatenate([a, b])
        assert len(both) == 3
        assert both.provenance[2][0] == "b"
