"""Viewer pose: distance and viewing angles from face observations, and the
perspective-warped PSF that keeps correction valid off-axis.

The homography chain is intrinsics * depth-shift * tilt_y * tilt_x *
centering, so a zero-angle pose with the depth shift equal to the focal
length collapses to the identity.  Distance falls out of similar
triangles between the physical face and its on-camera image; angles come
from the face midpoint's normalized deviation from the frame center.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Protocol, Sequence

import numpy as np
from scipy import ndimage

from .errors import NoFaceError, PoseOutOfRangeError
from .psf import Kernel, OpticalSpec, blur_radius, disk_psf

DEFAULT_FOV_DEG = 80.0  # prototype camera field of view
POSE_UPDATE_HZ = 10.0
DISTANCE_HYSTERESIS = 0.02  # rebuild the kernel on >2% distance change
ANGLE_HYSTERESIS_RAD = math.radians(1.0)


@dataclass(frozen=True)
class ViewerPose:
    distance_m: float
    theta_x: float = 0.0
    theta_y: float = 0.0

    def __post_init__(self):
        if self.distance_m <= 0:
            raise ValueError("distance must be positive")
        if abs(self.theta_x) >= math.pi / 2 or abs(self.theta_y) >= math.pi / 2:
            raise ValueError("viewing angles must stay within +/-90 degrees")

    def differs_from(self, other: "ViewerPose | None",
                     distance_tol: float = DISTANCE_HYSTERESIS,
                     angle_tol: float = ANGLE_HYSTERESIS_RAD) -> bool:
        """Hysteresis test: is this pose far enough from `other` to matter?"""
        if other is None:
            return True
        if abs(self.distance_m - other.distance_m) > distance_tol * other.distance_m:
            return True
        return (
            abs(self.theta_x - other.theta_x) > angle_tol
            or abs(self.theta_y - other.theta_y) > angle_tol
        )


@dataclass(frozen=True)
class CameraModel:
    frame_w_px: int = 1280
    frame_h_px: int = 720
    fov_h_rad: float = math.radians(DEFAULT_FOV_DEG)
    fov_v_rad: float = math.radians(DEFAULT_FOV_DEG * 9 / 16)
    face_width_m: float = 0.15

    def __post_init__(self):
        if not (0 < self.fov_h_rad < math.pi and 0 < self.fov_v_rad < math.pi):
            raise ValueError("fields of view must lie in (0, pi)")
        if self.face_width_m <= 0:
            raise ValueError("face width must be positive")


@dataclass(frozen=True)
class FaceObservation:
    """Face bounding box in frame pixels: (x, y, w, h) and its midpoint."""

    x: float
    y: float
    w: float
    h: float

    @property
    def midpoint(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


def estimate_distance(obs: FaceObservation, cam: CameraModel) -> float:
    """Similar-triangles range: r = u_w * f_w / (2 * f_p * tan(FOV_h / 2))."""
    if obs.w <= 0:
        raise NoFaceError("face pixel width must be positive")
    return (cam.face_width_m * cam.frame_w_px) / (
        2.0 * obs.w * math.tan(cam.fov_h_rad / 2.0)
    )


def estimate_angles(obs: FaceObservation, cam: CameraModel) -> tuple[float, float]:
    """Viewing angles from the midpoint's normalized deviation off frame center."""
    mid_x, mid_y = obs.midpoint
    half_w, half_h = cam.frame_w_px / 2.0, cam.frame_h_px / 2.0
    theta_h = ((mid_x - half_w) / half_w) * (cam.fov_h_rad / 2.0)
    theta_v = ((mid_y - half_h) / half_h) * (cam.fov_v_rad / 2.0)
    return theta_h, theta_v


def observe_pose(obs: FaceObservation, cam: CameraModel) -> ViewerPose:
    theta_h, theta_v = estimate_angles(obs, cam)
    return ViewerPose(estimate_distance(obs, cam), theta_h, theta_v)


# ---------------------------------------------------------------------------
# Perspective transformation of the PSF


def focal_px(side_px: int, fov_rad: float = math.radians(DEFAULT_FOV_DEG)) -> float:
    """Pinhole focal length in pixels for a grid side and field of view."""
    return (side_px / 2.0) / math.tan(fov_rad / 2.0)


def perspective_matrix(theta_x: float, theta_y: float, xi: float, f: float,
                       cols: int, rows: int) -> np.ndarray:
    """3x3 homography: intrinsics * depth-shift * R_y * R_x * centering."""
    if xi <= 0 or f <= 0:
        raise ValueError("xi and f must be positive")
    c, r = float(cols), float(rows)
    a1 = np.array([
        [1.0, 0.0, -c / 2.0],
        [0.0, 1.0, -r / 2.0],
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
    ])
    cx, sx = math.cos(theta_x), math.sin(theta_x)
    rx = np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, cx, -sx, 0.0],
        [0.0, sx, cx, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    cy, sy = math.cos(theta_y), math.sin(theta_y)
    ry = np.array([
        [cy, 0.0, sy, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [-sy, 0.0, cy, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    t = np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, xi],
        [0.0, 0.0, 0.0, 1.0],
    ])
    a2 = np.array([
        [f, 0.0, c / 2.0, 0.0],
        [0.0, f, r / 2.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ])
    h = a2 @ t @ ry @ rx @ a1
    if abs(h[2, 2]) < 1e-12 or not np.isfinite(h).all():
        raise PoseOutOfRangeError("pose produces a degenerate perspective transform")
    h = h / h[2, 2]
    if abs(np.linalg.det(h)) < 1e-12:
        raise PoseOutOfRangeError("pose produces a non-invertible perspective transform")
    return h


def warp_psf(k: Kernel, h: np.ndarray) -> Kernel:
    """Resample a kernel through a homography and renormalize to unit sum.

    Output pixels are inverse-mapped through h and bilinearly sampled from
    the source grid; mass pushed off the grid is lost, so the result is
    renormalized (a warped PSF must still conserve light).
    """
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (3, 3):
        raise ValueError("homography must be 3x3")
    try:
        h_inv = np.linalg.inv(h)
    except np.linalg.LinAlgError as exc:
        raise PoseOutOfRangeError("homography is not invertible") from exc

    rows, cols = k.values.shape
    yy, xx = np.mgrid[0:rows, 0:cols].astype(np.float64)
    ones = np.ones_like(xx)
    src = h_inv @ np.stack([xx.ravel(), yy.ravel(), ones.ravel()])
    with np.errstate(invalid="ignore", divide="ignore"):
        sx = src[0] / src[2]
        sy = src[1] / src[2]
    coords = np.stack([sy.reshape(rows, cols), sx.reshape(rows, cols)])
    warped = ndimage.map_coordinates(k.values, coords, order=1, mode="constant", cval=0.0)
    total = warped.sum()
    if total <= 1e-12:
        raise PoseOutOfRangeError("warp pushed the kernel entirely off its grid")
    return Kernel(warped / total)


def pose_to_kernel(pose: ViewerPose, spec: OpticalSpec, base_size: int = 0) -> Kernel:
    """Kernel for a viewer pose: defocus disk at the pose distance, warped
    by the pose angles."""
    r_px = blur_radius(spec.with_distance(pose.distance_m)).pixels
    size = max(base_size, 2 * math.ceil(r_px) + 1)
    if size % 2 == 0:
        size += 1
    disk = disk_psf(r_px, size)
    if pose.theta_x == 0.0 and pose.theta_y == 0.0:
        return disk
    f = focal_px(size)
    h = perspective_matrix(pose.theta_x, pose.theta_y, xi=f, f=f, cols=size, rows=size)
    return warp_psf(disk, h)


# ---------------------------------------------------------------------------
# Pose sources: synthetic scripts, recorded logs, live face-box feeds


class FaceProvider(Protocol):
    def observations(self) -> Iterator[tuple[float, FaceObservation]]:
        """Yield (timestamp_ms, observation) pairs in time order."""
        ...


class SyntheticFaceProvider:
    """Scripted observations for tests and demos."""

    def __init__(self, samples: Sequence[tuple[float, FaceObservation]]):
        self.samples = list(samples)

    def observations(self) -> Iterator[tuple[float, FaceObservation]]:
        return iter(self.samples)


class ReplayFaceProvider:
    """Replays the face-box wire format:
    `timestamp_ms x y w h frame_w frame_h` per line."""

    def __init__(self, lines: Iterable[str]):
        self.lines = list(lines)

    def observations(self) -> Iterator[tuple[float, FaceObservation]]:
        for line in self.lines:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            ts, x, y, w, h, _fw, _fh = (float(tok) for tok in line.split())
            yield ts, FaceObservation(x, y, w, h)

    @classmethod
    def from_file(cls, path) -> "ReplayFaceProvider":
        with open(path, "r", encoding="ascii") as fh:
            return cls(fh.readlines())


class StreamFaceProvider:
    """Live adapter: reads the face-box wire format from a text stream
    (e.g. an external detector's stdout)."""

    def __init__(self, stream):
        self.stream = stream

    def observations(self) -> Iterator[tuple[float, FaceObservation]]:
        for line in self.stream:
            line = line.strip()
            if not line:
                continue
            ts, x, y, w, h, _fw, _fh = (float(tok) for tok in line.split())
            yield ts, FaceObservation(x, y, w, h)


def format_pose_log_line(timestamp_ms: float, pose: ViewerPose) -> str:
    return f"{timestamp_ms:.3f} {pose.distance_m:.6f} {pose.theta_x:.6f} {pose.theta_y:.6f}"


def parse_pose_log(lines: Iterable[str]) -> list[tuple[float, ViewerPose]]:
    """Pose log format: `timestamp_ms distance_m theta_x_rad theta_y_rad` per line."""
    out = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        ts, dist, tx, ty = (float(tok) for tok in line.split())
        out.append((ts, ViewerPose(dist, tx, ty)))
    return out


def load_pose_log(path) -> list[tuple[float, ViewerPose]]:
    with open(path, "r", encoding="ascii") as fh:
        return parse_pose_log(fh.readlines())


def save_pose_log(path, samples: Iterable[tuple[float, ViewerPose]]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for ts, pose in samples:
            fh.write(format_pose_log_line(ts, pose) + "\n")


class PoseTracker:
    """Runs pose estimation on its own loop and publishes atomic snapshots.

    Readers call :meth:`latest` and never block the estimator; the pose is
    published as one immutable object so a torn read is impossible.  The
    kernel callback fires only when the pose clears the hysteresis bands.
    """

    def __init__(self, provider: FaceProvider, cam: CameraModel,
                 on_pose_change: Callable[[ViewerPose], None] | None = None,
                 update_hz: float = POSE_UPDATE_HZ,
                 distance_tol: float = DISTANCE_HYSTERESIS,
                 angle_tol: float = ANGLE_HYSTERESIS_RAD):
        self.provider = provider
        self.cam = cam
        self.on_pose_change = on_pose_change
        self.period_s = 1.0 / update_hz
        self.distance_tol = distance_tol
        self.angle_tol = angle_tol
        self._latest: ViewerPose | None = None
        self._published: ViewerPose | None = None
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def latest(self) -> ViewerPose | None:
        return self._latest  # single reference read: atomic snapshot

    def step(self, obs: FaceObservation) -> ViewerPose:
        """Process one observation synchronously (used by tests and replay)."""
        pose = observe_pose(obs, self.cam)
        self._latest = pose
        if self.on_pose_change and pose.differs_from(
            self._published, self.distance_tol, self.angle_tol
        ):
            self._published = pose
            self.on_pose_change(pose)
        return pose

    def run(self, paced: bool = False) -> None:
        """Consume the provider to exhaustion (optionally at the update rate)."""
        for _ts, obs in self.provider.observations():
            if self._stop.is_set():
                break
            self.step(obs)
            if paced:
                time.sleep(self.period_s)

    def start(self, paced: bool = True) -> None:
        self._thread = threading.Thread(target=self.run, args=(paced,), daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
