import numpy as np
import pytest

from visioncorrect.errors import IllConditionedError, SizingError
from visioncorrect.image import GRAY, RGB, RasterImage, lowpass_scene, rgb_to_yuv
from visioncorrect.metrics import ssim
from visioncorrect.precorrect import (
    TileGrid,
    WienerParams,
    apply_spectrum_filter,
    convolve,
    convolve_plane,
    deconvolve,
    deconvolve_plane,
    kernel_spectrum,
    naive_inverse_ipsf,
    precorrect_color,
    precorrect_yuv,
    simulate_view,
    tiled_deconvolve,
    wiener_fir,
    wiener_ipsf,
)
from visioncorrect.psf import delta_kernel, disk_psf


def spatial_convolve_oracle(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Direct spatial-domain convolution with symmetric boundary handling."""
    kh, kw = kernel.shape
    ry, rx = kh // 2, kw // 2
    padded = np.pad(image, ((ry, ry), (rx, rx)), mode="symmetric")
    out = np.zeros_like(image)
    for dy in range(kh):
        for dx in range(kw):
            w = kernel[dy, dx]
            if w != 0.0:
                out += w * padded[dy : dy + image.shape[0], dx : dx + image.shape[1]]
    return out


class TestWienerParams:
    def test_text_rho_must_dominate(self):
        with pytest.raises(ValueError):
            WienerParams(rho=0.1, rho_text=0.05)

    def test_floor_positive(self):
        with pytest.raises(ValueError):
            WienerParams(spectrum_floor=0.0)


class TestConvolve:
    def test_delta_kernel_is_identity(self, rng):
        img = RasterImage(rng.random((33, 47)), GRAY)
        out = convolve(img, delta_kernel(9))
        assert np.abs(out.planes - img.planes).max() <= 1e-9

    def test_constant_image_stays_constant(self):
        img = RasterImage(np.full((32, 32), 0.42), GRAY)
        out = convolve(img, disk_psf(4, 9))
        assert np.abs(out.planes - 0.42).max() <= 1e-9

    def test_matches_spatial_oracle(self, rng):
        k = disk_psf(5, 11)
        for _ in range(20):
            img = rng.random((32, 32))
            fast = convolve_plane(img, k)
            oracle = spatial_convolve_oracle(img, k.values)
            assert np.abs(fast - oracle).max() <= 1e-6

    def test_kernel_larger_than_padded_image(self, rng):
        img = rng.random((8, 8))
        with pytest.raises(SizingError):
            convolve_plane(img, disk_psf(5, 11), pad=0)

    def test_preserves_mean(self, rng):
        img = rng.random((64, 64))
        out = convolve_plane(img, disk_psf(4, 9))
        assert abs(out.mean() - img.mean()) <= 1e-6


class TestWienerIpsf:
    def test_delta_zero_rho_is_unity(self):
        h = wiener_ipsf(delta_kernel(5), WienerParams(rho=0.0), (32, 32))
        assert np.abs(h - 1.0).max() == 0.0

    def test_large_rho_attenuation_bound(self):
        k = disk_psf(4, 9)
        rho = 100.0
        h = wiener_ipsf(k, WienerParams(rho=rho, rho_text=rho), (64, 64))
        khat = kernel_spectrum(k, (64, 64))
        assert np.all(np.abs(h) <= np.abs(khat) / rho + 1e-15)

    def test_zero_rho_below_floor_rejected(self):
        # a disk spectrum has deep nulls on a 64-point grid
        with pytest.raises(IllConditionedError):
            wiener_ipsf(disk_psf(5, 11), WienerParams(rho=0.0), (64, 64))

    def test_shape_must_hold_kernel(self):
        with pytest.raises(SizingError):
            wiener_ipsf(disk_psf(5, 11), WienerParams(), (8, 8))

    def test_round_trip_recovers_lowpass_image(self):
        k = disk_psf(5, 11)
        img = lowpass_scene(128)
        pre = deconvolve(img, k, WienerParams(rho=0.01, rho_text=0.05))
        rt = convolve(pre, k)
        assert ssim(img, rt) >= 0.95


class TestNaiveInverse:
    def test_delta_is_unity(self):
        h = naive_inverse_ipsf(delta_kernel(5), 0.01, (32, 32))
        assert np.abs(h - 1.0).max() == 0.0

    def test_zeros_below_threshold(self):
        k = disk_psf(5, 11)
        eps = 0.01
        h = naive_inverse_ipsf(k, eps, (64, 64))
        khat = kernel_spectrum(k, (64, 64))
        below = np.abs(khat) < eps
        assert below.any()
        assert np.all(h[below] == 0.0)

    def test_eps_must_be_positive(self):
        with pytest.raises(ValueError):
            naive_inverse_ipsf(disk_psf(3, 7), 0.0, (32, 32))

    def test_rings_harder_than_wiener_in_flat_regions(self):
        k = disk_psf(5, 11)
        card = np.full((128, 128), 0.35)
        card[40:88, 40:88] = 0.75
        pad = 16
        padded = np.pad(card, pad, mode="symmetric")
        naive = apply_spectrum_filter(padded, naive_inverse_ipsf(k, 0.01, padded.shape))
        naive = naive[pad:-pad, pad:-pad]
        wiener = deconvolve_plane(card, k, WienerParams(rho=0.01, rho_text=0.05))
        flat = np.zeros((128, 128), dtype=bool)
        flat[8:32, 8:32] = True
        flat[96:120, 96:120] = True
        assert (naive - card)[flat].var() > (wiener - card)[flat].var()


class TestDeconvolve:
    def test_delta_zero_rho_identity(self, rng):
        img = RasterImage(rng.random((48, 48)), GRAY)
        out = deconvolve(img, delta_kernel(9), WienerParams(rho=0.0))
        assert np.abs(out.planes - img.planes).max() <= 1e-9

    def test_all_black_stays_black(self):
        img = RasterImage(np.zeros((32, 32)), GRAY)
        out = deconvolve(img, disk_psf(4, 9), WienerParams())
        assert np.abs(out.planes).max() == 0.0

    def test_correction_beats_plain_blur(self, scene256_gray):
        k = disk_psf(5, 11)
        params = WienerParams()
        blurred = convolve(scene256_gray, k)
        corrected = convolve(deconvolve(scene256_gray, k, params), k)
        assert ssim(scene256_gray, corrected) > ssim(scene256_gray, blurred)

    def test_linearity_before_clamping(self, rng):
        k = disk_psf(5, 11)
        params = WienerParams()
        a, b = rng.random((64, 64)), rng.random((64, 64))
        combined = deconvolve_plane(0.3 * a + 0.6 * b, k, params)
        separate = 0.3 * deconvolve_plane(a, k, params) + 0.6 * deconvolve_plane(b, k, params)
        assert np.abs(combined - separate).max() <= 1e-6

    def test_translation_commutes_cyclically(self, rng):
        k = disk_psf(5, 11)
        params = WienerParams()
        img = rng.random((128, 128))
        rolled_first = deconvolve_plane(np.roll(img, (5, -3), (0, 1)), k, params, pad=0)
        rolled_after = np.roll(deconvolve_plane(img, k, params, pad=0), (5, -3), (0, 1))
        assert np.abs(rolled_first - rolled_after).max() <= 1e-6

    def test_fir_preserves_dc_gain(self):
        k = disk_psf(6, 13)
        for rho in (0.01, 0.05, 0.2):
            fir = wiener_fir(k, rho)
            assert fir.shape[0] % 2 == 1
            assert fir.sum() == pytest.approx(1.0 / (1.0 + rho), rel=1e-9)


class TestColorPath:
    def test_gray_content_matches_single_channel(self, rng, disk8):
        params = WienerParams()
        gray = rng.random((64, 64))
        rgb = RasterImage(np.stack([gray, gray, gray]), RGB)
        color = precorrect_color(rgb, disk8, params)
        single = deconvolve(RasterImage(gray[None], GRAY), disk8, params)
        for ch in range(3):
            assert np.abs(color.plane(ch) - single.plane(0)).max() <= 1e-6

    def test_chroma_planes_bit_identical(self, rng, disk8):
        params = WienerParams()
        for _ in range(5):
            yuv = rgb_to_yuv(RasterImage(rng.random((3, 48, 64)), RGB))
            out = precorrect_yuv(yuv, disk8, params)
            assert np.array_equal(out.plane(1), yuv.plane(1))
            assert np.array_equal(out.plane(2), yuv.plane(2))

    def test_less_hue_shift_than_per_channel_rgb(self, disk8):
        # saturated chart; independent per-channel filtering (the variant this
        # mode exists to avoid) serves as the oracle being beaten
        params = WienerParams()
        chart = np.zeros((3, 64, 96))
        colors = [
            (0.8, 0.2, 0.2), (0.2, 0.8, 0.2), (0.2, 0.2, 0.8), (0.8, 0.8, 0.2),
            (0.2, 0.8, 0.8), (0.8, 0.2, 0.8), (0.9, 0.5, 0.2), (0.5, 0.2, 0.8),
        ]
        for idx, color in enumerate(colors):
            row, col = divmod(idx, 4)
            sl = (slice(row * 32, (row + 1) * 32), slice(col * 24, (col + 1) * 24))
            for ch in range(3):
                chart[ch][sl] = color[ch]
        chart_img = RasterImage(chart, RGB)

        yuv_path = precorrect_color(chart_img, disk8, params)
        per_channel = np.stack([
            np.clip(_remap(deconvolve_plane(chart[ch], disk8, params)), 0, 1)
            for ch in range(3)
        ])
        assert _mean_hue_shift(chart, yuv_path.planes) < _mean_hue_shift(chart, per_channel)


def _remap(arr):
    lo, hi = arr.min(), arr.max()
    if lo >= 0 and hi <= 1:
        return arr
    return (arr - lo) / (hi - lo)


def _hue_degrees(planes):
    r, g, b = planes
    mx = planes.max(axis=0)
    mn = planes.min(axis=0)
    d = mx - mn
    sat = d > 1e-6
    h = np.zeros_like(mx)
    rm = sat & (mx == r)
    h[rm] = ((g - b)[rm] / d[rm]) % 6
    gm = sat & (mx == g) & ~rm
    h[gm] = (b - r)[gm] / d[gm] + 2
    bm = sat & (mx == b) & ~rm & ~gm
    h[bm] = (r - g)[bm] / d[bm] + 4
    return h * 60.0, sat


def _mean_hue_shift(a, b):
    ha, sa = _hue_degrees(a)
    hb, sb = _hue_degrees(b)
    mask = sa & sb
    d = np.abs(ha - hb)[mask]
    return float(np.minimum(d, 360.0 - d).mean())


class TestTiling:
    def test_grid_invariants(self):
        with pytest.raises(ValueError):
            TileGrid(tile_px=16)
        with pytest.raises(ValueError):
            TileGrid(pad_px=-1)

    def test_pad_below_kernel_radius_rejected(self, scene256_gray, disk8):
        with pytest.raises(SizingError, match="seams"):
            tiled_deconvolve(scene256_gray, disk8, WienerParams(), TileGrid(64, 4))

    def test_degenerate_tiling_equals_whole(self, scene256_gray, disk8):
        params = WienerParams()
        whole = deconvolve(scene256_gray, disk8, params, pad=16)
        tiled = tiled_deconvolve(scene256_gray, disk8, params, TileGrid(256, 16))
        np.testing.assert_array_equal(whole.planes, tiled.planes)

    def test_interiors_match_whole_image(self, scene256_gray, disk8):
        params = WienerParams()
        pad = 16  # kernel diameter
        whole = deconvolve(scene256_gray, disk8, params, pad=pad)
        tiled = tiled_deconvolve(scene256_gray, disk8, params, TileGrid(128, pad))
        interior = np.ones((256, 256), dtype=bool)
        for border in range(0, 257, 128):
            lo, hi = max(0, border - pad), min(256, border + pad)
            interior[lo:hi, :] = False
            interior[:, lo:hi] = False
        diff = np.abs(whole.plane(0) - tiled.plane(0))
        assert diff[interior].max() <= 1e-3

    def test_result_independent_of_worker_count(self, scene256_gray, disk8):
        params = WienerParams()
        serial = tiled_deconvolve(scene256_gray, disk8, params, TileGrid(64, 16), workers=1)
        threaded = tiled_deconvolve(scene256_gray, disk8, params, TileGrid(64, 16), workers=4)
        np.testing.assert_array_equal(serial.planes, threaded.planes)


class TestSimulateView:
    def test_yuv_simulation_keeps_chroma_planes(self, rng, disk8):
        img = rgb_to_yuv(RasterImage(rng.random((3, 48, 48)), RGB))
        sim = simulate_view(img, disk8)
        assert sim.colorspace == "YUV"
        np.testing.assert_array_equal(sim.plane(1), img.plane(1))
        np.testing.assert_array_equal(sim.plane(2), img.plane(2))

    def test_rgb_simulation_blurs_luma_only(self, scene512, disk8):
        sim = simulate_view(scene512, disk8)
        assert sim.colorspace == RGB
        blurred_luma = np.clip(convolve_plane(scene512.luma(), disk8), 0, 1)
        assert np.abs(rgb_to_yuv(sim).plane(0) - blurred_luma).max() <= 1e-6
