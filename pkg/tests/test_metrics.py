"""Quality metrics and rate-distortion aggregation."""

import math

import numpy as np
import pytest
import skimage.data

from rnic.errors import UsageError
from rnic.metrics import RdCurve, RdPoint, auc, curve_from_rows, msssim, psnr, RdRow, write_rd_csv


@pytest.fixture(scope="module")
def photo():
    return skimage.data.astronaut()  # 512x512x3 natural photograph


class TestMsssim:
    def test_identity_is_one(self, photo):
        assert abs(msssim(photo, photo) - 1.0) < 1e-9

    def test_symmetry_bit_exact(self, photo, rng):
        noisy = np.clip(photo + rng.normal(0, 10, photo.shape), 0, 255)
        assert msssim(photo, noisy) == msssim(noisy, photo)

    def test_monotone_degradation(self, photo, rng):
        small = np.clip(photo + rng.normal(0, 2.55, photo.shape), 0, 255)
        large = np.clip(photo + rng.normal(0, 25.5, photo.shape), 0, 255)
        assert msssim(photo, large) < msssim(photo, small)

    def test_inverted_image_scores_near_zero(self, photo):
        assert msssim(photo, 255 - photo) < 0.1

    def test_too_small_for_five_scales(self, rng):
        a = rng.random((64, 64, 3)) * 255
        with pytest.raises(UsageError, match="scales"):
            msssim(a, a)

    def test_reduced_scales_on_small_images(self, rng):
        a = rng.random((32, 32, 3)) * 255
        assert abs(msssim(a, a, scales=2) - 1.0) < 1e-9

    def test_shape_mismatch(self, rng):
        with pytest.raises(UsageError):
            msssim(np.zeros((200, 200)), np.zeros((200, 208)))

    def test_bounded_unit_interval(self, photo, rng):
        noisy = np.clip(photo + rng.normal(0, 60, photo.shape), 0, 255)
        v = msssim(photo, noisy)
        assert 0.0 <= v <= 1.0


class TestPsnr:
    def test_identical_images_capped(self):
        a = np.full((16, 16, 3), 7, np.uint8)
        assert psnr(a, a) == 99.0

    def test_uniform_unit_offset(self):
        a = np.full((64, 64, 3), 100, np.uint8)
        assert psnr(a, a + 1) == pytest.approx(48.13, abs=0.01)

    def test_checkerboard_inverse_zero_db(self):
        base = np.indices((8, 8)).sum(axis=0) % 2
        a = (base * 255).astype(np.uint8)[:, :, None].repeat(3, axis=2)
        assert psnr(a, 255 - a) == pytest.approx(0.0, abs=1e-9)


class TestAuc:
    def test_unit_trapezoid(self):
        curve = RdCurve([RdPoint(1.0, 1.0, "m", 1), RdPoint(2.0, 1.0, "m", 2)])
        assert auc(curve) == pytest.approx(1.0)

    def test_constant_curve_from_eighth(self):
        pts = [RdPoint(0.125 * t, 1.8, "m", t) for t in range(1, 17)]
        assert auc(RdCurve(pts)) == pytest.approx(1.8 * 1.875, abs=1e-9)

    def test_constant_from_near_zero_rectangle(self):
        pts = [RdPoint(1e-9, 1.8, "m", 0), RdPoint(2.0, 1.8, "m", 1)]
        assert auc(RdCurve(pts)) == pytest.approx(3.6, abs=1e-6)

    def test_clamps_above_limit(self):
        pts = [RdPoint(1.0, 1.0, "m", 1), RdPoint(3.0, 3.0, "m", 2)]
        # interpolated quality at 2.0 is 2.0: area = (1+2)/2 * 1
        assert auc(RdCurve(pts)) == pytest.approx(1.5)

    def test_all_points_above_limit(self):
        pts = [RdPoint(2.5, 1.0, "m", 1), RdPoint(3.0, 1.0, "m", 2)]
        with pytest.raises(UsageError):
            auc(RdCurve(pts))

    def test_needs_two_points(self):
        with pytest.raises(UsageError):
            auc(RdCurve([RdPoint(1.0, 1.0, "m", 1)]))

    def test_monotone_in_quality(self, rng):
        bpps = np.sort(rng.random(8)) * 1.9 + 0.05
        lo = [RdPoint(float(b), float(q), "m", i) for i, (b, q) in enumerate(zip(bpps, rng.random(8)))]
        hi = [RdPoint(p.bpp, p.quality + 0.3, "m", p.iteration) for p in lo]
        assert auc(RdCurve(hi)) >= auc(RdCurve(lo))

    def test_curve_rejects_decreasing_bpp(self):
        with pytest.raises(UsageError):
            RdCurve([RdPoint(1.0, 1.0, "m", 1), RdPoint(0.5, 1.0, "m", 2)])


class TestCsv:
    def test_write_and_reread(self, tmp_path):
        rows = [
            RdRow("abc", "msssim", 1, 0.125, math.nan, 0.8, 0.01, 3),
            RdRow("abc", "msssim", 2, 0.25, 0.21, 0.9, 0.01, 3),
        ]
        path = tmp_path / "curve.csv"
        write_rd_csv(path, rows)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("model_id,metric,iteration,bpp_raw,bpp_coded")
        assert len(lines) == 3
        assert lines[1].split(",")[4] == ""  # nan bpp_coded stays blank

    def test_curve_from_rows_uses_requested_rate(self):
        rows = [
            RdRow("abc", "msssim", 1, 0.125, 0.1, 0.8, 0.0, 1),
            RdRow("abc", "msssim", 2, 0.25, 0.2, 0.9, 0.0, 1),
        ]
        raw = curve_from_rows(rows, "msssim", coded=False)
        coded = curve_from_rows(rows, "msssim", coded=True)
        assert [p.bpp for p in raw.points] == [0.125, 0.25]
        assert [p.bpp for p in coded.points] == [0.1, 0.2]
