import numpy as np

from histgate.curation import ks_statistic
from histgate.imagecore import GrayImage, Histogram, compute_histogram
from histgate.translate import hist_match, match_lut


class TestHistMatch:
    def test_self_match_is_identity_on_8bit(self, rng):
        img = GrayImage(rng.integers(0, 256, (32, 32)) / 255.0)
        out = hist_match(img, compute_histogram(img))
        assert np.array_equal(out.pixels, img.pixels)

    def test_self_match_within_quantization(self, rng):
        img = GrayImage(rng.random((32, 32)))
        out = hist_match(img, compute_histogram(img))
        assert np.abs(out.pixels - img.pixels).max() <= 1 / 255

    def test_two_valued_to_delta(self, rng):
        img = GrayImage(np.where(rng.random((16, 16)) < 0.4, 0.2, 0.8))
        delta = np.zeros(256)
        delta[128] = 1.0
        out = hist_match(img, Histogram(delta, 1))
        assert np.unique(out.pixels).size == 1
        assert abs(out.pixels[0, 0] - 0.5) <= 1 / 255

    def test_degenerate_target_constant_output(self, rng):
        img = GrayImage(rng.random((16, 16)))
        delta = np.zeros(256)
        delta[37] = 1.0
        out = hist_match(img, Histogram(delta, 1))
        assert (out.pixels == 37 / 255).all()

    def test_monotone_in_intensity(self, rng):
        img = GrayImage(rng.random((24, 24)))
        target = compute_histogram(rng.random((24, 24)))
        out = hist_match(img, target)
        order = np.argsort(img.pixels.ravel(), kind="stable")
        remapped = out.pixels.ravel()[order]
        assert (np.diff(remapped) >= 0).all()

    def test_lut_non_decreasing(self, rng):
        lut = match_lut(compute_histogram(rng.random((16, 16))), compute_histogram(rng.random((16, 16))))
        assert (np.diff(lut) >= 0).all()

    def test_ks_non_worsening_on_shifted_input(self, rng):
        # smooth shifted input vs a reference profile
        target_px = np.clip(rng.normal(0.6, 0.15, (64, 64)), 0, 1)
        target = compute_histogram(target_px)
        shifted = GrayImage(np.clip(rng.normal(0.3, 0.15, (64, 64)), 0, 1))
        before = ks_statistic(compute_histogram(shifted), target)
        after = ks_statistic(compute_histogram(hist_match(shifted, target)), target)
        assert after <= before

    def test_matched_cdf_close_for_spread_input(self, rng):
        # wide, well-spread input: per-bin CDF error bounded by 2/256
        img = GrayImage(rng.random((128, 128)))
        target = compute_histogram(np.clip(rng.normal(0.5, 0.25, (128, 128)), 0, 1))
        out = hist_match(img, target)
        cdf_out = compute_histogram(out).cdf()
        cdf_target = target.cdf()
        assert np.abs(cdf_out - cdf_target).max() <= 2 / 256

    def test_output_on_byte_grid(self, rng):
        out = hist_match(GrayImage(rng.random((16, 16))), compute_histogram(rng.random((16, 16))))
        scaled = out.pixels * 255.0
        assert np.allclose(scaled, np.rint(scaled))
