"""2D rasters: validation, normalization, Gaussian blur and bilinear sampling.

A raster is a float64 ``numpy.ndarray`` of shape (height, width). Functions
never modify their inputs.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy import ndimage

from . import _core
from .errors import ShapeMismatch, ValidationError, ZeroMass

HORIZONTAL_MODES = {"wrap": "wrap", "reflect": "reflect"}
VERTICAL_MODES = {"reflect": "reflect", "clamp": "nearest"}


def as_raster(values, nonneg=False, name="raster"):
    """Return ``values`` as a validated float64 2D array."""
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeMismatch(f"{name} must be a non-empty 2D grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    if nonneg and np.any(arr < 0):
        raise ValidationError(f"{name} contains negative values")
    return arr


def check_same_shape(a, b, what="maps"):
    if a.shape != b.shape:
        raise ShapeMismatch(f"{what} differ in shape: {a.shape} vs {b.shape}")


@dataclass(frozen=True)
class BlurSpec:
    """Gaussian blur parameters. ``sigma`` is in pixels; 0 disables blurring."""

    sigma: float = 0.0
    horizontal_boundary: str = "wrap"
    vertical_boundary: str = "reflect"

    def __post_init__(self):
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ValidationError(f"blur sigma must be finite and >= 0, got {self.sigma}")
        if self.horizontal_boundary not in HORIZONTAL_MODES:
            raise ValidationError(f"horizontal boundary must be one of {sorted(HORIZONTAL_MODES)}")
        if self.vertical_boundary not in VERTICAL_MODES:
            raise ValidationError(f"vertical boundary must be one of {sorted(VERTICAL_MODES)}")


def normalize_sum(values):
    """Scale a non-negative raster so it sums to one."""
    arr = as_raster(values, nonneg=True)
    total = arr.sum()
    if total <= 0:
        raise ZeroMass("cannot normalize a map with zero total mass")
    return arr / total


def gaussian_kernel(sigma):
    """1D Gaussian truncated at +-3 sigma and renormalized to unit mass."""
    radius = max(1, int(math.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(values, spec=BlurSpec()):
    """Separable Gaussian blur with per-axis boundary handling."""
    arr = as_raster(values)
    if spec.sigma == 0:
        return arr
    kernel = gaussian_kernel(spec.sigma)
    out = ndimage.correlate1d(arr, kernel, axis=1, mode=HORIZONTAL_MODES[spec.horizontal_boundary])
    out = ndimage.correlate1d(out, kernel, axis=0, mode=VERTICAL_MODES[spec.vertical_boundary])
    if np.all(arr >= 0):
        # rounding can leave -1e-20 where the input was exactly zero
        np.maximum(out, 0.0, out=out)
    return out


def blur_matrices(shape, spec):
    """Dense (vertical, horizontal) operators with blur(X) == V @ X @ H.T.

    Built by pushing identity matrices through ``gaussian_blur`` so the
    operators match it exactly, including boundary handling.
    """
    height, width = shape
    if spec.sigma == 0:
        return np.eye(height), np.eye(width)
    kernel = gaussian_kernel(spec.sigma)
    horiz = ndimage.correlate1d(np.eye(width), kernel, axis=1,
                                mode=HORIZONTAL_MODES[spec.horizontal_boundary])
    vert = ndimage.correlate1d(np.eye(height), kernel, axis=0,
                               mode=VERTICAL_MODES[spec.vertical_boundary])
    # correlate1d on identity rows gives H.T for the horizontal axis
    return vert, horiz.T


def sample_bilinear(values, x, y, wrap_horizontal=False):
    """Bilinear interpolation at column ``x`` and row ``y``.

    Rows are clamped to the grid. Columns wrap modulo the width when
    ``wrap_horizontal`` is set and are clamped otherwise. ``x`` and ``y`` may be
    scalars or broadcastable arrays.
    """
    arr = np.ascontiguousarray(values, dtype=np.float64)
    out = _core.bilinear_sample(arr, x, y, bool(wrap_horizontal))
    if np.ndim(out) == 0 or (np.isscalar(x) and np.isscalar(y)):
        return float(np.asarray(out).reshape(-1)[0])
    return out


def resample(values, height, width):
    """Resize with pixel-center alignment; Gaussian prefilter when shrinking."""
    arr = as_raster(values)
    h, w = arr.shape
    if (h, w) == (height, width):
        return arr
    factor = max(h / height, w / width)
    if factor > 1:
        arr = gaussian_blur(arr, BlurSpec(0.5 * factor, "reflect", "reflect"))
    rows = (np.arange(height) + 0.5) * h / height - 0.5
    cols = (np.arange(width) + 0.5) * w / width - 0.5
    return _core.bilinear_sample(arr, cols[None, :], rows[:, None], False)


def to_gray(image):
    """Luma (0.299, 0.587, 0.114) for RGB input; 2D input is returned as-is."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        return img.copy()
    if img.ndim == 3 and img.shape[2] >= 3:
        return img[..., 0] * 0.299 + img[..., 1] * 0.587 + img[..., 2] * 0.114
    if img.ndim == 3 and img.shape[2] == 1:
        return img[..., 0].copy()
    raise ShapeMismatch(f"expected a grayscale or RGB image, got shape {img.shape}")
