import numpy as np
import pytest

from histgate.imagecore import GrayImage
from histgate.translate import fda_translate, low_freq_window, swap_low_freq_amplitude


class TestWindow:
    def test_dc_only_for_tiny_beta(self):
        rows, cols = low_freq_window((64, 64), 0.01)
        assert rows == slice(32, 33)
        assert cols == slice(32, 33)

    def test_symmetric_about_center(self):
        rows, cols = low_freq_window((64, 64), 0.1)
        b = int(np.floor(0.1 * 64))
        assert rows == slice(32 - b, 32 + b + 1)
        assert cols == slice(32 - b, 32 + b + 1)

    def test_rectangular_uses_min_side(self):
        rows, cols = low_freq_window((32, 128), 0.25)
        b = int(np.floor(0.25 * 32))
        assert rows.stop - rows.start == 2 * b + 1
        assert cols.stop - cols.start == 2 * b + 1


class TestSwap:
    def test_self_swap_identity(self, rng):
        src = rng.random((64, 64))
        for beta in (0.01, 0.1, 0.5):
            out = swap_low_freq_amplitude(src, src, beta)
            assert np.abs(out - src).max() < 1e-6

    def test_dc_only_matches_target_mean(self, rng):
        src = rng.random((48, 48))
        tgt = np.clip(rng.random((48, 48)) + 0.3, 0, 1)
        out = swap_low_freq_amplitude(src, tgt, 0.01)
        assert abs(out.mean() - tgt.mean()) < 1e-9
        # source structure preserved: only a constant offset was applied
        assert np.corrcoef(out.ravel(), src.ravel())[0, 1] > 0.999999

    def test_window_amplitude_equals_target(self, rng):
        src = rng.random((64, 64))
        tgt = rng.random((64, 64))
        out = swap_low_freq_amplitude(src, tgt, 0.1)
        f_out = np.fft.fftshift(np.fft.fft2(out))
        f_tgt = np.fft.fftshift(np.fft.fft2(tgt))
        rows, cols = low_freq_window(src.shape, 0.1)
        assert np.abs(np.abs(f_out[rows, cols]) - np.abs(f_tgt[rows, cols])).max() < 1e-6

    def test_source_phase_preserved(self, rng):
        src = rng.random((64, 64))
        tgt = rng.random((64, 64))
        out = swap_low_freq_amplitude(src, tgt, 0.15)
        f_out = np.fft.fft2(out)
        f_src = np.fft.fft2(src)
        significant = (np.abs(f_src) > 1e-9) & (np.abs(f_out) > 1e-9)
        # compare angles via the product to avoid wraparound artifacts
        dev = np.abs(np.angle(f_out * np.conj(f_src)))
        assert dev[significant].max() < 1e-6

    def test_amplitude_outside_window_untouched(self, rng):
        src = rng.random((64, 64))
        tgt = rng.random((64, 64))
        out = swap_low_freq_amplitude(src, tgt, 0.1)
        f_out = np.fft.fftshift(np.fft.fft2(out))
        f_src = np.fft.fftshift(np.fft.fft2(src))
        rows, cols = low_freq_window(src.shape, 0.1)
        mask = np.ones((64, 64), dtype=bool)
        mask[rows, cols] = False
        assert np.abs(np.abs(f_out[mask]) - np.abs(f_src[mask])).max() < 1e-6

    def test_shape_mismatch_rejected(self, rng):
        with pytest.raises(ValueError):
            swap_low_freq_amplitude(rng.random((32, 32)), rng.random((32, 48)), 0.1)

    def test_beta_bounds(self, rng):
        a = rng.random((16, 16))
        for beta in (0.0, -0.2, 0.6):
            with pytest.raises(ValueError):
                swap_low_freq_amplitude(a, a, beta)


class TestFdaTranslate:
    def test_output_is_valid_image(self, rng):
        src = GrayImage(rng.random((32, 32)))
        tgt = GrayImage(rng.random((32, 32)))
        out = fda_translate(src, tgt, 0.1)
        assert out.pixels.shape == src.pixels.shape
        assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0

    def test_moves_brightness_toward_target(self, rng):
        src = GrayImage(np.clip(rng.normal(0.3, 0.05, (64, 64)), 0, 1))
        tgt = GrayImage(np.clip(rng.normal(0.7, 0.05, (64, 64)), 0, 1))
        out = fda_translate(src, tgt, 0.05)
        assert abs(out.pixels.mean() - tgt.pixels.mean()) < abs(src.pixels.mean() - tgt.pixels.mean())
