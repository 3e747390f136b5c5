"""Vision-correcting display engine.

Precompensates images and video for a viewer's refractive blur: builds the
eye's point spread function from optics or a prescription, inverse-filters
the brightness channel in the frequency domain, adapts the kernel to the
viewer's distance and angle, suppresses ringing with edge-mask
compositing, and measures the result against the original.
"""

from .errors import (
    DetectorError,
    IllConditionedError,
    NoFaceError,
    OpticalConfigError,
    PoseOutOfRangeError,
    SizingError,
    UndefinedCorrelationError,
    VisionCorrectError,
)
from .image import GRAY, RGB, YUV, RasterImage, from_array, load_png, rgb_to_yuv, save_png, yuv_to_rgb
from .metrics import MetricsReport, absolute_error, compare, diff_map, ncc, psnr, rmse, ssim
from .pose import (
    CameraModel,
    FaceObservation,
    PoseTracker,
    ViewerPose,
    estimate_angles,
    estimate_distance,
    perspective_matrix,
    pose_to_kernel,
    warp_psf,
)
from .precorrect import (
    TileGrid,
    WienerParams,
    convolve,
    deconvolve,
    naive_inverse_ipsf,
    precorrect_color,
    precorrect_yuv,
    simulate_view,
    tiled_deconvolve,
    wiener_ipsf,
)
from .psf import Kernel, OpticalSpec, ZernikeSpec, blur_radius, delta_kernel, disk_psf, zernike_psf
from .ringing import (
    HeuristicTextDetector,
    Mask,
    SubprocessTextDetector,
    composite,
    edge_mask,
    segment_precorrect,
)
from .video import ArrayFrameSource, FramePrecorrector, KernelSchedule, VideoSession, run_pipeline

__version__ = "0.1.0"
