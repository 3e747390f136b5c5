"""Planar raster images, color-space conversion, and file I/O.

Images are stored as float64 planes of shape (channels, height, width)
with values in [0, 1].  Color math uses full-range BT.601: the luma plane
carries brightness, the two chroma planes are offset by 0.5 so white and
black both map to neutral chroma.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

GRAY = "GRAY"
RGB = "RGB"
YUV = "YUV"

_PLANES = {GRAY: 1, RGB: 3, YUV: 3}

# Full-range BT.601 RGB -> YUV (chroma offset +0.5 applied separately).
_RGB_TO_YUV = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168735891647856, -0.331264108352144, 0.5],
        [0.5, -0.418687589158345, -0.081312410841655],
    ]
)
_YUV_TO_RGB = np.linalg.inv(_RGB_TO_YUV)
_CHROMA_OFFSET = np.array([0.0, 0.5, 0.5]).reshape(3, 1, 1)


@dataclass(frozen=True)
class RasterImage:
    """Multi-plane image; planes share dimensions and live in [0, 1]."""

    planes: np.ndarray  # (channels, height, width)
    colorspace: str = GRAY

    def __post_init__(self):
        p = np.asarray(self.planes, dtype=np.float64)
        if p.ndim == 2:
            p = p[None, :, :]
        object.__setattr__(self, "planes", p)
        if p.ndim != 3:
            raise ValueError("planes must be a (channels, height, width) array")
        expected = _PLANES.get(self.colorspace)
        if expected is None:
            raise ValueError(f"unknown colorspace {self.colorspace!r}")
        if p.shape[0] != expected:
            raise ValueError(f"{self.colorspace} image needs {expected} plane(s), got {p.shape[0]}")
        if p.size and (p.min() < -1e-9 or p.max() > 1 + 1e-9):
            raise ValueError("pixel values must lie in [0, 1]")

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def channels(self) -> int:
        return self.planes.shape[0]

    def plane(self, i: int) -> np.ndarray:
        return self.planes[i]

    def luma(self) -> np.ndarray:
        """Brightness plane: the GRAY plane, the YUV Y plane, or BT.601 luma of RGB."""
        if self.colorspace == RGB:
            return np.tensordot(_RGB_TO_YUV[0], self.planes, axes=1)
        return self.planes[0]

    def to_uint8(self) -> np.ndarray:
        """(height, width[, channels]) uint8 view for display or encoding."""
        arr = np.clip(self.planes, 0.0, 1.0)
        out = (arr * 255.0 + 0.5).astype(np.uint8)
        return out[0] if self.channels == 1 else np.moveaxis(out, 0, -1)


def clamp01(arr: np.ndarray) -> np.ndarray:
    return np.clip(arr, 0.0, 1.0)


def from_array(arr: np.ndarray, colorspace: str | None = None) -> RasterImage:
    """Wrap an (H, W), (H, W, C) or (C, H, W) array, clamping to [0, 1]."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 2:
        return RasterImage(clamp01(a)[None], GRAY)
    if a.ndim == 3 and a.shape[-1] in (1, 3) and a.shape[0] not in (1, 3):
        a = np.moveaxis(a, -1, 0)
    cs = colorspace or (GRAY if a.shape[0] == 1 else RGB)
    return RasterImage(clamp01(a), cs)


def rgb_to_yuv(image: RasterImage) -> RasterImage:
    """Full-range BT.601 conversion; chroma planes carry a +0.5 offset."""
    if image.colorspace != RGB:
        raise ValueError("rgb_to_yuv needs an RGB image")
    yuv = np.tensordot(_RGB_TO_YUV, image.planes, axes=1) + _CHROMA_OFFSET
    return RasterImage(clamp01(yuv), YUV)


def yuv_to_rgb(image: RasterImage) -> RasterImage:
    """Inverse of :func:`rgb_to_yuv`; out-of-gamut values are clamped."""
    if image.colorspace != YUV:
        raise ValueError("yuv_to_rgb needs a YUV image")
    rgb = np.tensordot(_YUV_TO_RGB, image.planes - _CHROMA_OFFSET, axes=1)
    return RasterImage(clamp01(rgb), RGB)


def to_gray(image: RasterImage) -> RasterImage:
    return RasterImage(image.luma()[None], GRAY)


# ---------------------------------------------------------------------------
# File I/O


def load_png(data_or_path) -> RasterImage:
    """Read a PNG (path, file object, or bytes) as GRAY or RGB."""
    from PIL import Image

    if isinstance(data_or_path, (bytes, bytearray)):
        data_or_path = io.BytesIO(data_or_path)
    img = Image.open(data_or_path)
    if img.mode in ("L", "I;16", "I"):
        arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
        return RasterImage(arr[None], GRAY)
    arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return RasterImage(np.moveaxis(arr, -1, 0), RGB)


def save_png(image: RasterImage, path_or_buf) -> None:
    from PIL import Image

    arr = image.to_uint8()
    mode = "L" if image.channels == 1 else "RGB"
    Image.fromarray(arr, mode=mode).save(path_or_buf, format="PNG")


def png_bytes(image: RasterImage) -> bytes:
    buf = io.BytesIO()
    save_png(image, buf)
    return buf.getvalue()


_RAW_MAGIC = "floatplanes"


def save_raw(image: RasterImage, path) -> None:
    """Raw float planar file: one ASCII header line, then float32 planes."""
    header = f"{_RAW_MAGIC} {image.colorspace} {image.channels} {image.height} {image.width}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(image.planes.astype("<f4").tobytes())


def load_raw(path) -> RasterImage:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if not header or header[0] != _RAW_MAGIC:
            raise ValueError("not a raw float planar file")
        colorspace, channels, height, width = header[1], int(header[2]), int(header[3]), int(header[4])
        data = np.frombuffer(fh.read(), dtype="<f4").astype(np.float64)
    planes = data.reshape(channels, height, width)
    return RasterImage(clamp01(planes), colorspace)


# ---------------------------------------------------------------------------
# Deterministic synthetic scenes used by tests, the CLI and the demo service


def reference_scene(size: int = 512, seed: int = 7, lo: float = 0.30, hi: float = 0.70) -> RasterImage:
    """A deterministic photographic stand-in: gradients, shapes, texture, glyphs.

    The texture wavelengths sit where a moderate defocus disk attenuates
    hard but does not null, so correction quality is actually measurable.
    Mid-range contrast is intentional: full black-to-white content would
    force a strong output remap after inverse filtering and hide the
    structure the scene is meant to probe.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size

    img = np.stack([
        0.5 + 0.10 * np.sin(2 * np.pi * xx * 1.1),
        0.5 + 0.08 * np.cos(2 * np.pi * yy * 0.9),
        0.5 - 0.08 * (xx - yy),
    ])

    # oriented texture fields (wavelengths in pixels)
    fields = [
        (0.04, 0.44, 0.04, 0.48, 16.0, 0.30, 0.4),
        (0.54, 0.96, 0.52, 0.96, 10.0, 0.30, 1.3),
        (0.04, 0.40, 0.54, 0.96, 18.0, 0.28, 2.2),
        (0.58, 0.96, 0.04, 0.46, 9.5, 0.30, 0.8),
    ]
    for y0f, y1f, x0f, x1f, wl, amp, ang in fields:
        sl = (slice(int(y0f * size), int(y1f * size)),
              slice(int(x0f * size), int(x1f * size)))
        u = xx[sl] * np.cos(ang) + yy[sl] * np.sin(ang)
        img[:, sl[0], sl[1]] += amp * np.sin(2 * np.pi * u * size / wl)

    # checkerboard band across the middle
    cell = max(4, int(round(size / 30)))
    cb = ((np.floor(yy * size / cell) + np.floor(xx * size / cell)) % 2)
    sl = (slice(int(0.42 * size), int(0.58 * size)),
          slice(int(0.30 * size), int(0.70 * size)))
    img[:, sl[0], sl[1]] = 0.5 + 0.30 * (cb[sl] - 0.5)

    # glyph-like stroke rows
    h = max(8, size // 48)
    for row in range(3):
        y0 = int((0.46 + 0.05 * row) * size)
        x = int(0.05 * size)
        while x < int(0.28 * size):
            w = int(rng.integers(size // 50, size // 25))
            if rng.random() < 0.85:
                img[:, y0 : y0 + h, x : x + w] = 0.20
            x += w + int(rng.integers(size // 60, size // 34))

    return RasterImage(lo + (hi - lo) * clamp01(img), RGB)


def text_card(size: int = 256, ink: float = 0.05, paper: float = 0.95, seed: int = 3) -> RasterImage:
    """White card with black glyph-like strokes, for ringing experiments."""
    rng = np.random.default_rng(seed)
    img = np.full((size, size), paper)
    h = max(3, size // 40)
    for row in range(4):
        y0 = int((0.18 + 0.18 * row) * size)
        x = int(0.12 * size)
        while x < int(0.85 * size):
            w = int(rng.integers(size // 40, size // 14))
            img[y0 : y0 + h, x : x + w] = ink
            if rng.random() < 0.4:  # occasional vertical stem
                img[y0 - h : y0, x : x + max(2, w // 4)] = ink
            x += w + int(rng.integers(size // 50, size // 20))
    return RasterImage(img[None], GRAY)


def lowpass_scene(size: int = 128, cutoff_cycles: float = 4.0) -> RasterImage:
    """Band-limited test image: a few low-frequency sinusoids in [0.2, 0.8]."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    z = (
        np.sin(2 * np.pi * cutoff_cycles * xx)
        + np.cos(2 * np.pi * (cutoff_cycles * 0.7) * yy)
        + np.sin(2 * np.pi * (cutoff_cycles * 0.5) * (xx + yy))
    )
    z = (z - z.min()) / (z.max() - z.min())
    return RasterImage((0.2 + 0.6 * z)[None], GRAY)
