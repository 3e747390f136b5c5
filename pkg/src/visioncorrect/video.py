"""Real-time frame pipeline: lookahead precorrection cache, double-buffered
presentation, play/pause/seek.

One producer stage deconvolves frames ahead of the playhead into a bounded
cache; one presenter stage swaps completed frames into the front buffer at
the source rate.  A kernel change bumps the cache generation, so a frame
produced under a stale kernel is never presented.  When the producer falls
behind, the presenter repeats the last frame and counts an underrun rather
than blocking.

Frames are 8-bit RGB; the per-frame math runs in float32, which keeps the
pipeline comfortably below quantization error while roughly doubling FFT
throughput.
"""

from __future__ import annotations

import bisect
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import fft as sfft

from .errors import IllConditionedError
from .image import _RGB_TO_YUV
from .precorrect import (
    TileGrid,
    WienerParams,
    _centered_response_array,
    _fast_shape,
    _tile_spans,
    wiener_fir,
)
from .psf import Kernel, OpticalSpec
from .pose import ViewerPose, pose_to_kernel

DEFAULT_CACHE_SECONDS = 3.0  # lookahead depth


# ---------------------------------------------------------------------------
# Raw-frame pipe protocol: one ASCII header line, then packed RGB24 frames.

_RAW_MAGIC = "rawvideo"


def write_raw_video(stream, frames: Iterable[np.ndarray], fps: float) -> int:
    """Write the raw-frame pipe format; returns the number of frames written."""
    count = 0
    header_written = False
    for frame in frames:
        if frame.dtype != np.uint8 or frame.ndim != 3 or frame.shape[2] != 3:
            raise ValueError("raw video frames must be (h, w, 3) uint8")
        if not header_written:
            h, w = frame.shape[:2]
            stream.write(f"{_RAW_MAGIC} {w} {h} {fps:g}\n".encode("ascii"))
            header_written = True
        stream.write(frame.tobytes())
        count += 1
    return count


def read_raw_video(stream):
    """Read the raw-frame pipe format; returns (frames, fps)."""
    header = bytearray()
    while not header.endswith(b"\n"):
        ch = stream.read(1)
        if not ch:
            raise ValueError("truncated raw video header")
        header += ch
    parts = header.decode("ascii").split()
    if len(parts) != 4 or parts[0] != _RAW_MAGIC:
        raise ValueError("not a raw video stream")
    w, h, fps = int(parts[1]), int(parts[2]), float(parts[3])
    frame_bytes = w * h * 3
    frames = []
    while True:
        buf = stream.read(frame_bytes)
        if not buf:
            break
        if len(buf) != frame_bytes:
            raise ValueError("truncated raw video frame")
        frames.append(np.frombuffer(buf, dtype=np.uint8).reshape(h, w, 3).copy())
    return frames, fps


class ArrayFrameSource:
    """Random-access frame source over in-memory uint8 RGB frames."""

    def __init__(self, frames: Sequence[np.ndarray], fps: float):
        if fps <= 0:
            raise ValueError("fps must be positive")
        self.frames = list(frames)
        self.fps = float(fps)

    def __len__(self) -> int:
        return len(self.frames)

    def frame(self, i: int) -> np.ndarray:
        return self.frames[i]


# ---------------------------------------------------------------------------
# Fast per-frame precorrection (float32, cached per-shape filters)
#
# Only luma is filtered, so the YUV round trip collapses algebraically:
# the Y column of the BT.601 inverse is (1, 1, 1), hence
# rgb_out = rgb_in + (y_corrected - y).  One luma extraction and one fused
# add/clamp/round per frame; no full color-space conversion.

_LUMA_W = _RGB_TO_YUV[0].astype(np.float32)

try:  # numba fuses the per-pixel passes; numpy fallback is ~3x slower
    import numba

    @numba.njit(cache=True, fastmath=True)
    def _luma_255(frame):
        h, w, _ = frame.shape
        out = np.empty((h, w), dtype=np.float32)
        for i in range(h):
            for j in range(w):
                out[i, j] = (
                    np.float32(0.299) * frame[i, j, 0]
                    + np.float32(0.587) * frame[i, j, 1]
                    + np.float32(0.114) * frame[i, j, 2]
                )
        return out

    @numba.njit(cache=True, fastmath=True)
    def _compose_255_into(frame, y_old, y_new, scale, offset, out):
        h, w, _ = frame.shape
        for i in range(h):
            for j in range(w):
                d = (y_new[i, j] * scale + offset) - y_old[i, j]
                for c in range(3):
                    v = frame[i, j, c] + d
                    if v < np.float32(0.0):
                        v = np.float32(0.0)
                    elif v > np.float32(255.0):
                        v = np.float32(255.0)
                    out[i, j, c] = np.uint8(v + np.float32(0.5))

    def _compose_255(frame, y_old, y_new, scale, offset, out=None):
        if out is None or out.shape != frame.shape:
            out = np.empty_like(frame)
        _compose_255_into(frame, y_old, y_new, scale, offset, out)
        return out

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


def _luma_255_np(frame: np.ndarray) -> np.ndarray:
    return (frame.astype(np.float32) @ _LUMA_W).astype(np.float32)


def _compose_255_np(frame, y_old, y_new, scale, offset):
    dy = y_new * np.float32(scale) + np.float32(offset) - y_old
    res = frame.astype(np.float32)
    res += dy[..., None]
    np.clip(res, 0.0, 255.0, out=res)
    res += np.float32(0.5)
    return res.astype(np.uint8)


class FramePrecorrector:
    """Luma-only Wiener precorrection of uint8 RGB frames, tiled.

    The inverse-filter spectrum is cached per (kernel, slab shape); a
    kernel swap clears the cache.
    """

    def __init__(self, kernel: Kernel, params: WienerParams,
                 grid: TileGrid | None = None, workers: int | None = None):
        self.params = params
        self.grid = grid
        self.workers = workers if workers is not None else (os.cpu_count() or 1)
        self._filters: dict[tuple[int, int], np.ndarray] = {}
        self._kernel = kernel

    @property
    def kernel(self) -> Kernel:
        return self._kernel

    def set_kernel(self, kernel: Kernel) -> None:
        if kernel is not self._kernel:
            self._kernel = kernel
            self._filters = {}

    def _filter_for(self, shape: tuple[int, int]) -> np.ndarray:
        hhat = self._filters.get(shape)
        if hhat is None:
            if self.params.rho > 0.0:
                resp = wiener_fir(self._kernel, self.params.rho)
            else:
                resp = self._kernel.values
            centered = _centered_response_array(resp, shape).astype(np.float32)
            hhat = sfft.rfft2(centered, workers=self.workers).astype(np.complex64)
            if self.params.rho == 0.0:
                power = hhat.real**2 + hhat.imag**2
                if np.sqrt(power.min()) < self.params.spectrum_floor:
                    raise IllConditionedError(
                        "zero regularization with a kernel spectrum below the floor"
                    )
                hhat = (hhat.conj() / power).astype(np.complex64)
            self._filters[shape] = hhat
        return hhat

    def _deconvolve_luma(self, y: np.ndarray) -> np.ndarray:
        radius = max(self._kernel.height, self._kernel.width) // 2
        if self.params.rho > 0.0:
            radius = wiener_fir(self._kernel, self.params.rho).shape[0] // 2
        grid = self.grid
        if grid is None or (grid.tile_px >= y.shape[0] and grid.tile_px >= y.shape[1]):
            pad = radius
            padded = np.pad(y, pad, mode="symmetric")
            fshape = _fast_shape(padded.shape)
            spec = sfft.rfft2(padded, fshape, workers=self.workers)
            out = sfft.irfft2(spec * self._filter_for(fshape), fshape, workers=self.workers)
            return out[pad : pad + y.shape[0], pad : pad + y.shape[1]]
        p = max(grid.pad_px, radius)
        padded = np.pad(y, p, mode="symmetric")
        out = np.empty_like(y)
        for y0, y1 in _tile_spans(y.shape[0], grid.tile_px):
            for x0, x1 in _tile_spans(y.shape[1], grid.tile_px):
                slab = padded[y0 : y1 + 2 * p, x0 : x1 + 2 * p]
                fshape = _fast_shape(slab.shape)
                spec = sfft.rfft2(slab, fshape, workers=self.workers)
                res = sfft.irfft2(spec * self._filter_for(fshape), fshape, workers=self.workers)
                out[y0:y1, x0:x1] = res[p : p + (y1 - y0), p : p + (x1 - x0)]
        return out

    def __call__(self, frame_u8: np.ndarray) -> np.ndarray:
        # a delta kernel means an in-focus viewer: nothing to invert
        if self._kernel.is_delta():
            return frame_u8.copy()
        luma = _luma_255(frame_u8) if _HAVE_NUMBA else _luma_255_np(frame_u8)
        y_new = self._deconvolve_luma(luma)
        lo, hi = float(y_new.min()), float(y_new.max())
        if (lo < 0.0 or hi > 255.0) and hi > lo:  # same remap policy as the still path
            scale, offset = 255.0 / (hi - lo), -lo * 255.0 / (hi - lo)
        else:
            scale, offset = 1.0, 0.0
        compose = _compose_255 if _HAVE_NUMBA else _compose_255_np
        return compose(frame_u8, luma, y_new, np.float32(scale), np.float32(offset))


# ---------------------------------------------------------------------------
# Kernel schedules (pose-log driven)


class KernelSchedule:
    """Maps frame indices to kernels; entries are (start_frame, kernel)."""

    def __init__(self, entries: Sequence[tuple[int, Kernel]]):
        if not entries:
            raise ValueError("schedule needs at least one entry")
        self.entries = sorted(entries, key=lambda e: e[0])
        self._starts = [e[0] for e in self.entries]

    def kernel_for(self, frame_index: int) -> Kernel:
        pos = bisect.bisect_right(self._starts, frame_index) - 1
        return self.entries[max(pos, 0)][1]

    @classmethod
    def from_pose_log(cls, samples: Sequence[tuple[float, ViewerPose]], fps: float,
                      spec: OpticalSpec, base_size: int = 0) -> "KernelSchedule":
        """Hysteresis-filtered: a new kernel only when a pose sample moves
        far enough from the last one that produced a kernel."""
        entries: list[tuple[int, Kernel]] = []
        published: ViewerPose | None = None
        for ts_ms, pose in samples:
            if not pose.differs_from(published):
                continue
            published = pose
            frame = max(0, int(round(ts_ms / 1000.0 * fps)))
            entries.append((frame, pose_to_kernel(pose, spec, base_size)))
        if not entries:
            raise ValueError("pose log produced no kernel entries")
        if entries[0][0] != 0:
            entries.insert(0, (0, entries[0][1]))
        return cls(entries)


# ---------------------------------------------------------------------------
# Presentation surface


class PresentSurface:
    """Double buffer: writes land in the back buffer, a swap is atomic, and
    readers snapshot the front under the same lock."""

    def __init__(self):
        self._lock = threading.Lock()
        self._front: np.ndarray | None = None
        self._back: np.ndarray | None = None
        self._front_index = -1
        self.swaps = 0

    def present(self, frame: np.ndarray, index: int) -> None:
        if self._back is None or self._back.shape != frame.shape:
            self._back = np.empty_like(frame)
        np.copyto(self._back, frame)  # full write happens before the swap
        with self._lock:
            self._front, self._back = self._back, self._front
            self._front_index = index
            self.swaps += 1

    def snapshot(self) -> tuple[int, np.ndarray | None]:
        with self._lock:
            if self._front is None:
                return -1, None
            return self._front_index, self._front.copy()


@dataclass
class SessionStats:
    frames_presented: int = 0
    underruns: int = 0
    frames_produced: int = 0
    processing_ms_total: float = 0.0
    wall_s: float = 0.0

    @property
    def mean_processing_ms(self) -> float:
        return self.processing_ms_total / self.frames_produced if self.frames_produced else 0.0

    @property
    def fps_measured(self) -> float:
        return self.frames_presented / self.wall_s if self.wall_s > 0 else 0.0

    def as_dict(self) -> dict:
        return {
            "frames_presented": self.frames_presented,
            "underruns": self.underruns,
            "frames_produced": self.frames_produced,
            "mean_processing_ms": self.mean_processing_ms,
            "fps_measured": self.fps_measured,
        }


class VideoSession:
    """Producer/presenter pair over a random-access frame source.

    ``realtime=True`` paces presentation at the source fps and never blocks
    on a missing frame (the last frame repeats and an underrun is counted).
    ``realtime=False`` presents each frame as soon as it is produced, which
    is the deterministic benchmark mode.
    """

    def __init__(self, source: ArrayFrameSource, precorrector: FramePrecorrector,
                 kernel_for: Callable[[int], Kernel] | None = None,
                 sink: Callable[[int, np.ndarray], None] | None = None,
                 cache_seconds: float = DEFAULT_CACHE_SECONDS,
                 realtime: bool = True, warmup: bool = True):
        self.source = source
        self.precorrector = precorrector
        self.kernel_for = kernel_for
        self.sink = sink
        self.capacity = max(1, int(np.ceil(cache_seconds * source.fps)))
        self.realtime = realtime
        self.warmup = warmup
        self.surface = PresentSurface()
        self.stats = SessionStats()

        self._cond = threading.Condition()
        self._cache: dict[int, tuple[int, np.ndarray]] = {}
        self._generation = 0
        self._playhead = 0
        self._playing = True
        self._stopping = False
        self._producer = threading.Thread(target=self._produce, daemon=True)
        self._presenter = threading.Thread(target=self._present, daemon=True)
        self._done = threading.Event()

    # -- control surface ----------------------------------------------------

    def start(self) -> "VideoSession":
        self._start_time = time.monotonic()
        self._producer.start()
        self._presenter.start()
        return self

    def control(self, command: str, frame: int | None = None) -> dict:
        """Apply play / pause / seek; returns the acknowledged state."""
        with self._cond:
            clamped = False
            if command == "play":
                self._playing = True
            elif command == "pause":
                self._playing = False
            elif command == "seek":
                if frame is None:
                    raise ValueError("seek needs a frame index")
                last = len(self.source) - 1
                if frame > last:
                    frame, clamped = last, True
                frame = max(0, frame)
                self._playhead = frame
                # keep only frames inside the new lookahead window
                stale = [i for i in self._cache if i < frame or i >= frame + self.capacity]
                for idx in stale:
                    del self._cache[idx]
            else:
                raise ValueError(f"unknown command {command!r}")
            self._cond.notify_all()
            return {
                "playing": self._playing,
                "playhead": self._playhead,
                "clamped": clamped,
                "generation": self._generation,
            }

    def set_kernel(self, kernel: Kernel) -> int:
        """Swap the correction kernel: bumps the generation and refills."""
        with self._cond:
            self._generation += 1
            self._cache.clear()
            self.precorrector.set_kernel(kernel)
            self.kernel_for = None
            self._cond.notify_all()
            return self._generation

    def cache_level(self) -> int:
        with self._cond:
            return len(self._cache)

    def playhead(self) -> int:
        with self._cond:
            return self._playhead

    def stop(self) -> None:
        with self._cond:
            self._stopping = True
            self._cond.notify_all()

    def join(self, timeout: float | None = None) -> bool:
        return self._done.wait(timeout)

    # -- stages --------------------------------------------------------------

    def _next_to_produce(self) -> tuple[int, int] | None:
        # under self._cond
        n = len(self.source)
        lo = self._playhead
        hi = min(n, lo + self.capacity)
        for i in range(lo, hi):
            if i not in self._cache:
                return i, self._generation
        return None

    def _produce(self) -> None:
        while True:
            with self._cond:
                job = self._next_to_produce()
                while job is None and not self._stopping:
                    self._cond.wait(0.05)
                    job = self._next_to_produce()
                if self._stopping:
                    return
                index, generation = job
                if self.kernel_for is not None:
                    self.precorrector.set_kernel(self.kernel_for(index))
            t0 = time.perf_counter()
            frame = self.precorrector(self.source.frame(index))
            dt_ms = (time.perf_counter() - t0) * 1000.0
            with self._cond:
                # a seek may have moved the window while this frame was in
                # flight; only store results the presenter can still use
                in_window = self._playhead <= index < self._playhead + self.capacity
                if generation == self._generation and in_window and len(self._cache) < self.capacity:
                    self._cache[index] = (generation, frame)
                self.stats.frames_produced += 1
                self.stats.processing_ms_total += dt_ms
                self._cond.notify_all()

    def _wait_warmup(self) -> None:
        with self._cond:
            while not self._stopping:
                # recompute under the lock: a seek can shrink what is producible
                target = min(self.capacity, len(self.source) - self._playhead)
                if len(self._cache) >= target:
                    return
                self._cond.wait(0.05)

    def _present(self) -> None:
        if self.warmup:
            self._wait_warmup()
        start = time.monotonic()
        period = 1.0 / self.source.fps
        tick = 0
        last_frame = None
        last_index = -1
        while True:
            if self.realtime:
                deadline = start + tick * period
                now = time.monotonic()
                if deadline > now:
                    time.sleep(deadline - now)
            with self._cond:
                if self._stopping:
                    break
                if self._playhead >= len(self.source):
                    break
                if not self._playing:
                    self._cond.wait(0.05)
                    start = time.monotonic()  # re-anchor pacing after a pause
                    tick = 0
                    continue
                entry = self._cache.get(self._playhead)
                if entry is not None and entry[0] == self._generation:
                    index = self._playhead
                    frame = entry[1]
                    del self._cache[index]
                    self._playhead += 1
                    self._cond.notify_all()
                elif not self.realtime:
                    self._cond.wait(0.05)
                    continue
                else:
                    index, frame = None, None
            if frame is not None:
                self.surface.present(frame, index)
                if self.sink is not None:
                    self.sink(index, frame)
                self.stats.frames_presented += 1
                last_frame, last_index = frame, index
            else:
                # underrun: repeat the last completed frame, never block
                self.stats.underruns += 1
                if last_frame is not None:
                    self.surface.present(last_frame, last_index)
                    if self.sink is not None:
                        self.sink(last_index, last_frame)
            tick += 1
        self.stats.wall_s = time.monotonic() - self._start_time
        with self._cond:
            self._stopping = True
            self._cond.notify_all()
        self._done.set()


def run_pipeline(source: ArrayFrameSource, kernel: Kernel | Callable[[int], Kernel],
                 params: WienerParams, sink: Callable[[int, np.ndarray], None] | None = None,
                 grid: TileGrid | None = None, cache_seconds: float = DEFAULT_CACHE_SECONDS,
                 realtime: bool = True, warmup: bool = True,
                 workers: int | None = None) -> VideoSession:
    """Build and start a video session; returns the session handle."""
    if callable(kernel):
        kernel_for = kernel
        first = kernel(0)
    else:
        kernel_for = None
        first = kernel
    pre = FramePrecorrector(first, params, grid=grid, workers=workers)
    session = VideoSession(
        source, pre, kernel_for=kernel_for, sink=sink,
        cache_seconds=cache_seconds, realtime=realtime, warmup=warmup,
    )
    return session.start()
