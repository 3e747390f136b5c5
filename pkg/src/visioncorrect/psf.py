"""Blur-kernel synthesis: rasterized defocus disks and pupil-phase PSFs.

The eye's defocus is modelled as a filled disk whose radius follows from
the pupil diameter, the plane of focus (thin lens) and the viewing
distance.  Higher-order aberrations are rendered through a pupil phase
built from Zernike polynomials and Fourier optics.  Every kernel produced
here is normalized so its entries sum to one: convolution with it neither
gains nor loses light.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import OpticalConfigError, SizingError

DEFAULT_WAVELENGTH_M = 550e-9  # peak photopic sensitivity
DEFAULT_EYE_DEPTH_M = 0.017
KERNEL_SUM_TOL = 1e-6

_SUPERSAMPLE = 16  # subsamples per pixel side for the disk rim ramp


@dataclass(frozen=True)
class Kernel:
    """A discretized, unit-sum point spread (or inverse) response.

    ``values`` is a 2-D float array with odd side lengths so a center
    texel exists; entries are non-negative and sum to 1 within 1e-6.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 2:
            raise ValueError("kernel values must be a 2-D grid")
        h, w = v.shape
        if h % 2 == 0 or w % 2 == 0:
            raise ValueError(f"kernel dimensions must be odd, got {w}x{h}")
        if np.any(v < 0):
            raise ValueError("kernel entries must be non-negative")
        total = float(v.sum())
        if abs(total - 1.0) > KERNEL_SUM_TOL:
            raise ValueError(f"kernel must sum to 1 within {KERNEL_SUM_TOL}, got {total}")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def radius_px(self) -> int:
        """Half-width of the grid (center texel to edge)."""
        return max(self.width, self.height) // 2

    def is_delta(self, tol: float = 1e-12) -> bool:
        c = self.values[self.height // 2, self.width // 2]
        return bool(abs(c - 1.0) <= tol)

    def to_text(self) -> str:
        """Plain-text grid: `width height` header, then rows of decimals."""
        lines = [f"{self.width} {self.height}"]
        for row in self.values:
            lines.append(" ".join(f"{v:.17g}" for v in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Kernel":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        w, h = (int(t) for t in lines[0].split())
        rows = [np.array([float(t) for t in ln.split()]) for ln in lines[1 : 1 + h]]
        values = np.vstack(rows)
        if values.shape != (h, w):
            raise ValueError("kernel text body does not match header dimensions")
        return cls(values)

    def to_png_bytes(self) -> bytes:
        """Grayscale PNG for visual inspection, scaled so the peak is 255."""
        from PIL import Image

        peak = float(self.values.max())
        scaled = np.zeros_like(self.values) if peak == 0 else self.values / peak
        img = Image.fromarray((scaled * 255.0 + 0.5).astype(np.uint8), mode="L")
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()


def delta_kernel(size: int = 1) -> Kernel:
    """Identity kernel: all energy in the center texel."""
    if size < 1 or size % 2 == 0:
        raise ValueError("delta kernel size must be odd and positive")
    v = np.zeros((size, size))
    v[size // 2, size // 2] = 1.0
    return Kernel(v)


@dataclass(frozen=True)
class OpticalSpec:
    """Viewer optics that determine the defocus blur radius.

    ``focal_length_m`` and ``eye_depth_m`` locate the plane of focus via
    the thin-lens relation; ``view_distance_m`` is the screen distance and
    ``pixel_pitch_m`` converts the physical blur radius to display pixels.
    """

    pupil_diameter_m: float = 0.004
    focal_length_m: float = 0.0168
    eye_depth_m: float = DEFAULT_EYE_DEPTH_M
    view_distance_m: float = 1.0
    pixel_pitch_m: float = 0.000254

    def __post_init__(self):
        for name in (
            "pupil_diameter_m",
            "focal_length_m",
            "eye_depth_m",
            "view_distance_m",
            "pixel_pitch_m",
        ):
            if getattr(self, name) <= 0:
                raise OpticalConfigError(f"{name} must be positive")

    @property
    def focus_distance_m(self) -> float:
        """Distance to the plane of focus, from 1/d_f + 1/d_e = 1/f."""
        inv = 1.0 / self.focal_length_m - 1.0 / self.eye_depth_m
        if inv == 0:
            raise OpticalConfigError("plane of focus is at infinity (1/f == 1/d_e)")
        d_f = 1.0 / inv
        if not math.isfinite(d_f) or d_f <= 0:
            raise OpticalConfigError(f"plane of focus is not in front of the eye (d_f={d_f})")
        return d_f

    @classmethod
    def from_diopters(
        cls,
        sphere_diopters: float,
        pupil_diameter_m: float = 0.004,
        view_distance_m: float = 1.0,
        pixel_pitch_m: float = 0.000254,
        eye_depth_m: float = DEFAULT_EYE_DEPTH_M,
    ) -> "OpticalSpec":
        """Build a spec from a spherical prescription.

        The far point of a myope with sphere power S sits at 1/|S| meters;
        the focal length is back-solved so the thin-lens path lands the
        plane of focus exactly there.
        """
        if sphere_diopters == 0:
            raise OpticalConfigError("zero sphere power needs no correction")
        d_f = 1.0 / abs(sphere_diopters)
        focal = 1.0 / (1.0 / d_f + 1.0 / eye_depth_m)
        return cls(
            pupil_diameter_m=pupil_diameter_m,
            focal_length_m=focal,
            eye_depth_m=eye_depth_m,
            view_distance_m=view_distance_m,
            pixel_pitch_m=pixel_pitch_m,
        )

    def with_distance(self, view_distance_m: float) -> "OpticalSpec":
        return OpticalSpec(
            pupil_diameter_m=self.pupil_diameter_m,
            focal_length_m=self.focal_length_m,
            eye_depth_m=self.eye_depth_m,
            view_distance_m=view_distance_m,
            pixel_pitch_m=self.pixel_pitch_m,
        )


class BlurRadius(NamedTuple):
    meters: float
    pixels: float


def blur_radius(spec: OpticalSpec) -> BlurRadius:
    """Defocus blur radius r = a * |d_f - d_0| / d_f, in meters and pixels."""
    d_f = spec.focus_distance_m
    r = spec.pupil_diameter_m * abs(d_f - spec.view_distance_m) / d_f
    return BlurRadius(meters=r, pixels=r / spec.pixel_pitch_m)


def disk_psf(radius_px: float, size: int) -> Kernel:
    """Rasterize a filled-disk PSF of the given radius on a `size`x`size` grid.

    The rim gets a one-pixel linear coverage ramp, computed by 16x16
    supersampling of each pixel, so the rasterized edge has no hard
    discontinuity.  The result is normalized to sum 1.
    """
    if radius_px < 0:
        raise ValueError(f"disk radius must be non-negative, got {radius_px}")
    if size % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {size}")
    if size < 2 * math.ceil(radius_px) + 1:
        raise SizingError(
            f"size {size} cannot hold a disk of radius {radius_px} "
            f"(needs at least {2 * math.ceil(radius_px) + 1})"
        )
    if radius_px == 0:
        return delta_kernel(size)

    c = size // 2
    ss = _SUPERSAMPLE
    # Fine-grid sample positions relative to the center texel's center.
    f = -c - 0.5 + (np.arange(size * ss) + 0.5) / ss
    inside = (f[:, None] ** 2 + f[None, :] ** 2) <= radius_px**2
    coverage = inside.reshape(size, ss, size, ss).mean(axis=(1, 3))
    total = coverage.sum()
    if total == 0:  # radius too small for any subsample: collapse to a delta
        return delta_kernel(size)
    return Kernel(coverage / total)


# ---------------------------------------------------------------------------
# Zernike pupil-phase PSFs


@dataclass(frozen=True)
class ZernikeSpec:
    """Pupil-phase description: (n, m, weight-in-micrometers) terms."""

    coefficients: Sequence[tuple[int, int, float]] = field(default_factory=tuple)
    pupil_radius_m: float = 0.002
    wavelength_m: float = DEFAULT_WAVELENGTH_M
    grid_size: int = 64

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(self.coefficients))
        if self.wavelength_m <= 0:
            raise OpticalConfigError("wavelength must be positive")
        if self.pupil_radius_m <= 0:
            raise OpticalConfigError("pupil radius must be positive")
        if self.grid_size < 32:
            raise SizingError(f"grid_size must be >= 32, got {self.grid_size}")
        for n, m, _w in self.coefficients:
            if n < 0 or abs(m) > n:
                raise ValueError(f"invalid Zernike indices (n={n}, m={m})")
            if (n - abs(m)) % 2 != 0:
                raise ValueError(f"Zernike term requires n-|m| even (n={n}, m={m})")


def zernike_radial(n: int, m_abs: int, rho: np.ndarray) -> np.ndarray:
    """Radial polynomial R_n^|m| on [0, 1]."""
    out = np.zeros_like(rho)
    for k in range((n - m_abs) // 2 + 1):
        coeff = (
            (-1) ** k
            * math.factorial(n - k)
            / (
                math.factorial(k)
                * math.factorial((n + m_abs) // 2 - k)
                * math.factorial((n - m_abs) // 2 - k)
            )
        )
        out = out + coeff * rho ** (n - 2 * k)
    return out


def zernike_term(n: int, m: int, rho: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Noll-normalized Zernike polynomial Z_n^m over (rho, theta)."""
    norm = math.sqrt(n + 1) if m == 0 else math.sqrt(2 * (n + 1))
    radial = zernike_radial(n, abs(m), rho)
    angular = np.cos(m * theta) if m >= 0 else np.sin(-m * theta)
    return norm * radial * angular


def _pupil_field(spec: ZernikeSpec, grid: int, ss: int) -> np.ndarray:
    """Supersampled rasterization of A * exp(-i*2*pi*phase/lambda).

    Each cell of the coarse grid averages ss*ss subsamples of the complex
    integrand; a hard-edged pupil raster would imprint the square lattice
    on the PSF and break the aberration's rotational symmetries.
    """
    c = grid // 2
    n_pupil = spec.grid_size
    half = n_pupil // 2 + 1  # pupil lives in this many cells around center
    side = 2 * half + 1
    # fine-grid positions covering the pupil's bounding block of cells
    f = -half - 0.5 + (np.arange(side * ss) + 0.5) / ss
    yy, xx = np.meshgrid(f, f, indexing="ij")
    rho = np.sqrt(xx**2 + yy**2) / (n_pupil / 2.0)
    inside = rho <= 1.0
    if spec.coefficients:
        theta = np.arctan2(yy, xx)
        phase_m = np.zeros_like(rho)
        rho_c = np.minimum(rho, 1.0)
        for n, m, weight_um in spec.coefficients:
            phase_m += (weight_um * 1e-6) * zernike_term(n, m, rho_c, theta)
        fine = np.where(inside, np.exp(-1j * 2.0 * np.pi * phase_m / spec.wavelength_m), 0.0)
    else:
        fine = inside.astype(np.complex128)
    block = fine.reshape(side, ss, side, ss).mean(axis=(1, 3))
    field = np.zeros((grid, grid), dtype=np.complex128)
    field[c - half : c + half + 1, c - half : c + half + 1] = block
    return field


def zernike_psf(spec: ZernikeSpec, pad_factor: int = 4, energy_keep: float = 0.999,
                supersample: int = 4) -> Kernel:
    """Render the PSF of a pupil with the given Zernike phase.

    Samples the aberration (in meters, weights supplied in micrometers) on
    the pupil disk, forms the pupil field A*exp(-i*2*pi*phase/lambda),
    takes the squared magnitude of its centered discrete Fourier transform,
    crops to the smallest centered odd window holding ``energy_keep`` of
    the energy, and normalizes to sum 1.  The kernel lives on the
    transform's sample grid.
    """
    grid = pad_factor * spec.grid_size + 1  # odd: rotations stay exactly on-sample
    c = grid // 2
    field_in = _pupil_field(spec, grid, supersample)
    spectrum = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(field_in)))
    psf = np.abs(spectrum) ** 2

    # prefix sums make each candidate crop window an O(1) lookup
    total = psf.sum()
    acc = np.zeros((grid + 1, grid + 1))
    np.cumsum(np.cumsum(psf, axis=0), axis=1, out=acc[1:, 1:])

    def window_sum(h: int) -> float:
        lo, hi = c - h, c + h + 1
        return acc[hi, hi] - acc[lo, hi] - acc[hi, lo] + acc[lo, lo]

    half = 0
    while half < c and window_sum(half) < energy_keep * total:
        half += 1
    cropped = psf[c - half : c + half + 1, c - half : c + half + 1]
    return Kernel(cropped / cropped.sum())
