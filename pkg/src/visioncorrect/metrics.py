"""Image-quality metrics: PSNR, RMSE, absolute error, NCC, SSIM, diff maps.

Color inputs are reduced to the brightness plane for the combined scores;
PSNR is additionally reported per channel.  PSNR's peak term uses the
first argument's maximum, which makes it the only asymmetric metric here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import UndefinedCorrelationError
from .image import GRAY, RasterImage

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 1.0) ** 2
SSIM_C2 = (0.03 * 1.0) ** 2


def _check_dims(a: RasterImage, b: RasterImage) -> None:
    if a.planes.shape != b.planes.shape:
        raise ValueError(
            f"image dimensions differ: {a.planes.shape} vs {b.planes.shape}"
        )


def mse(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((x - y) ** 2))


def psnr_planes(x: np.ndarray, y: np.ndarray) -> float:
    """10*log10(max(x)^2 / MSE); +inf sentinel for identical inputs."""
    err = mse(x, y)
    if err == 0.0:
        return math.inf
    peak = float(x.max())
    if peak == 0.0:
        return -math.inf
    return 10.0 * math.log10(peak**2 / err)


def psnr(a: RasterImage, b: RasterImage) -> dict[str, float]:
    """Per-channel PSNR plus a combined (luma) figure, in dB."""
    _check_dims(a, b)
    out: dict[str, float] = {}
    if a.colorspace != GRAY:
        names = list(a.colorspace.lower())
        for i, name in enumerate(names):
            out[f"psnr_{name}"] = psnr_planes(a.plane(i), b.plane(i))
    out["psnr_y"] = psnr_planes(a.luma(), b.luma())
    return out


def rmse(a: RasterImage, b: RasterImage) -> float:
    _check_dims(a, b)
    return math.sqrt(mse(a.luma(), b.luma()))


def absolute_error(a: RasterImage, b: RasterImage):
    """AE map on the brightness plane, plus totals and percent difference.

    Returns (map, total, percent, per_channel_totals); percent is the total
    absolute difference over the first image's total brightness.
    """
    _check_dims(a, b)
    ae_map = np.abs(a.luma() - b.luma())
    total = float(ae_map.sum())
    denom = float(a.luma().sum())
    percent = math.inf if denom == 0 else 100.0 * total / denom
    per_channel = [
        float(np.abs(a.plane(i) - b.plane(i)).sum()) for i in range(a.channels)
    ]
    return ae_map, total, percent, per_channel


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size) - size // 2
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a: RasterImage, b: RasterImage, window: int = SSIM_WINDOW,
         c1: float = SSIM_C1, c2: float = SSIM_C2) -> float:
    """Mean local structural similarity over Gaussian-weighted windows.

    Images smaller than the window fall back to a single global
    (unweighted) window.
    """
    _check_dims(a, b)
    if window % 2 == 0:
        raise ValueError("window must be odd")
    x, y = a.luma(), b.luma()
    if min(x.shape) < window:
        return _ssim_global(x, y, c1, c2)
    w = _gaussian_window(window, SSIM_SIGMA)
    mu_x = fftconvolve(x, w, mode="valid")
    mu_y = fftconvolve(y, w, mode="valid")
    xx = fftconvolve(x * x, w, mode="valid")
    yy = fftconvolve(y * y, w, mode="valid")
    xy = fftconvolve(x * y, w, mode="valid")
    var_x = xx - mu_x**2
    var_y = yy - mu_y**2
    cov = xy - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def _ssim_global(x: np.ndarray, y: np.ndarray, c1: float, c2: float) -> float:
    mu_x, mu_y = float(x.mean()), float(y.mean())
    var_x, var_y = float(x.var()), float(y.var())
    cov = float(((x - mu_x) * (y - mu_y)).mean())
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return num / den


def ncc(a: RasterImage, b: RasterImage) -> float:
    """Pearson normalized cross-correlation of the brightness planes."""
    _check_dims(a, b)
    x, y = a.luma().ravel(), b.luma().ravel()
    sx, sy = float(x.std()), float(y.std())
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a constant image")
    return float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))


def diff_map(a: RasterImage, b: RasterImage, threshold: float = 0.05) -> RasterImage:
    """Binary highlight of pixels whose brightness differs by more than `threshold`."""
    _check_dims(a, b)
    mask = (np.abs(a.luma() - b.luma()) > threshold).astype(np.float64)
    return RasterImage(mask[None], GRAY)


def michelson_contrast(image: RasterImage) -> float:
    y = image.luma()
    hi, lo = float(y.max()), float(y.min())
    if hi + lo == 0.0:
        return 0.0
    return (hi - lo) / (hi + lo)


def contrast_ratio(output: RasterImage, reference: RasterImage) -> float:
    """Michelson contrast of the output relative to the reference image."""
    ref = michelson_contrast(reference)
    if ref == 0.0:
        return math.inf
    return michelson_contrast(output) / ref


@dataclass(frozen=True)
class MetricsReport:
    psnr_r: float
    psnr_g: float
    psnr_b: float
    psnr_y: float
    rmse: float
    ae_total: float
    ae_percent: float
    ncc: float
    ssim: float
    contrast_ratio: float
    extras: dict = field(default_factory=dict)

    _KEYS = ("psnr_r", "psnr_g", "psnr_b", "psnr_y", "rmse", "ae_total",
             "ae_percent", "ncc", "ssim", "contrast_ratio")

    def as_dict(self) -> dict:
        def jsonable(v: float):
            return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")

        out = {k: jsonable(getattr(self, k)) for k in self._KEYS}
        out.update(self.extras)
        return out

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.as_dict(), indent=indent)

    def to_text(self) -> str:
        return "\n".join(f"{k}={v}" for k, v in self.as_dict().items()) + "\n"


def compare(output: RasterImage, reference: RasterImage) -> MetricsReport:
    """Full report of `output` measured against `reference`."""
    p = psnr(reference, output)
    _, ae_total, ae_percent, _ = absolute_error(reference, output)
    try:
        ncc_val = ncc(reference, output)
    except UndefinedCorrelationError:
        ncc_val = math.nan
    return MetricsReport(
        psnr_r=p.get("psnr_r", p["psnr_y"]),
        psnr_g=p.get("psnr_g", p["psnr_y"]),
        psnr_b=p.get("psnr_b", p["psnr_y"]),
        psnr_y=p["psnr_y"],
        rmse=rmse(reference, output),
        ae_total=ae_total,
        ae_percent=ae_percent,
        ncc=ncc_val,
        ssim=ssim(reference, output),
        contrast_ratio=contrast_ratio(output, reference),
    )
