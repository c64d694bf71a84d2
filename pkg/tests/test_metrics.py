"""PSNR/SSIM: closed-form cases, symmetry, transform invariance."""

import numpy as np
import pytest

from maskdenoise.metrics import MetricReport, compare, psnr, ssim
from maskdenoise.tensor import ShapeError


def rand_img(seed, shape=(32, 32, 3)):
    return np.random.default_rng(seed).random(shape)


class TestPsnr:
    def test_identical_images_hit_the_cap(self):
        a = rand_img(0)
        assert psnr(a, a) == 100.0

    def test_uniform_offset_point_one_is_twenty_db(self):
        a = 0.4 * np.ones((16, 16, 3))
        assert abs(psnr(a, a + 0.1) - 20.0) < 1e-12

    def test_inverted_binary_image_is_zero_db(self):
        a = (rand_img(1) > 0.5).astype(np.float64)
        assert abs(psnr(a, 1.0 - a)) < 1e-12

    def test_uniform_offset_closed_form(self):
        a = rand_img(2) * 0.5
        for delta in (0.02, 0.07, 0.3):
            assert abs(psnr(a, a + delta) - 20.0 * np.log10(1.0 / delta)) < 1e-9

    def test_permutation_invariance(self):
        a, b = rand_img(3), rand_img(4)
        perm = np.random.default_rng(5).permutation(a.size)
        ap = a.ravel()[perm].reshape(a.shape)
        bp = b.ravel()[perm].reshape(b.shape)
        assert psnr(a, b) == psnr(ap, bp)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_never_exceeds_cap(self):
        a = rand_img(6)
        b = a.copy()
        b.flat[0] += 1e-9
        assert psnr(a, b) == 100.0


class TestSsim:
    def test_self_similarity_is_one(self):
        a = rand_img(7, (24, 24, 3))
        assert abs(ssim(a, a) - 1.0) < 1e-9

    def test_constant_images_closed_form(self):
        # zero variance: contrast/structure term is exactly 1, luminance
        # term is (2*0.5*0.25 + 1e-4) / (0.5^2 + 0.25^2 + 1e-4)
        a = 0.5 * np.ones((32, 32, 3))
        b = 0.25 * np.ones((32, 32, 3))
        want = (2 * 0.5 * 0.25 + 1e-4) / (0.5**2 + 0.25**2 + 1e-4)
        assert abs(ssim(a, b) - want) < 1e-3

    def test_symmetry(self):
        a, b = rand_img(8), rand_img(9)
        assert abs(ssim(a, b) - ssim(b, a)) < 1e-12

    def test_rotating_both_inputs_changes_nothing(self):
        a, b = rand_img(10), rand_img(11)
        assert abs(ssim(a, b) - ssim(np.rot90(a), np.rot90(b))) < 1e-12

    def test_within_unit_interval_on_noise_pairs(self):
        for seed in range(5):
            s = ssim(rand_img(20 + seed), rand_img(40 + seed))
            assert -1.0 <= s <= 1.0

    def test_less_than_one_for_different_images(self):
        assert ssim(rand_img(12), rand_img(13)) < 1.0

    def test_grayscale_input_accepted(self):
        a = rand_img(14, (24, 24))
        assert abs(ssim(a, a) - 1.0) < 1e-9

    def test_image_smaller_than_window_rejected(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ssim(np.zeros((16, 16, 3)), np.zeros((16, 16)))


class TestReport:
    def test_compare_bundles_both_metrics(self):
        a = rand_img(15)
        rep = compare(a, a)
        assert rep == MetricReport(psnr_db=100.0, ssim=rep.ssim)
        assert abs(rep.ssim - 1.0) < 1e-9
