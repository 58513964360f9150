"""Per-view saliency predictors.

Backends return UNNORMALIZED non-negative maps: the relative magnitude across
views of one panorama carries information that per-view normalization would
destroy. An optional :class:`CenterBiasLayer` multiplies the unbiased output.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
import logging
import math
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ParseError, ShapeMismatch, UnsupportedMode, ValidationError
from .raster import BlurSpec, as_raster, gaussian_blur, resample, to_gray

log = logging.getLogger(__name__)

MIN_SIDE = 32


@dataclass(frozen=True)
class PlanarView:
    """A square gnomonic view extracted from a panorama."""

    frame: object
    image: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        h, w = self.image.shape[:2]
        if h != w or h < MIN_SIDE:
            raise ShapeMismatch(f"views must be square with side >= {MIN_SIDE}, got {h}x{w}")

    @property
    def side(self):
        return self.image.shape[0]


@dataclass(frozen=True)
class CenterBiasLayer:
    """Multiplicative per-pixel weights applied to a backend's output."""

    weights: np.ndarray

    def __post_init__(self):
        w = as_raster(self.weights, nonneg=True, name="center-bias weights")
        object.__setattr__(self, "weights", w)

    def apply(self, saliency):
        w = self.weights
        if w.shape != saliency.shape:
            w = np.maximum(resample(w, *saliency.shape), 0.0)
        return saliency * w


class SaliencyBackend(ABC):
    name = "backend"
    supports_without_bias = True

    def __init__(self, center_bias=None):
        self.center_bias = center_bias

    @abstractmethod
    def predict_unbiased(self, view):
        """Saliency of ``view`` before any center bias, shape (side, side)."""

    def predict(self, view, apply_center_bias=False):
        if apply_center_bias and self.center_bias is None:
            raise UnsupportedMode(f"backend {self.name!r} has no center-bias layer")
        out = np.asarray(self.predict_unbiased(view), dtype=np.float64)
        if out.shape != (view.side, view.side):
            raise ShapeMismatch(f"{self.name} returned {out.shape}, expected {(view.side,) * 2}")
        if apply_center_bias:
            out = self.center_bias.apply(out)
        return out


def predict(backend, view, apply_center_bias=False):
    return backend.predict(view, apply_center_bias)


class ConstantBackend(SaliencyBackend):
    """All-ones prediction; isolates the priors in tests."""

    name = "constant"

    def predict_unbiased(self, view):
        return np.ones((view.side, view.side))


class SpectralResidualBackend(SaliencyBackend):
    """Spectral residual saliency on a downscaled luma image.

    The log-amplitude spectrum minus its local 3x3 average is recombined with
    the phase; the squared magnitude of the inverse transform is smoothed and
    upsampled back to the view size. Each map is scaled to a mean equal to the
    view's RMS contrast (std / mean of the luma).
    """

    name = "spectral"

    def __init__(self, work_side=64, smooth_sigma=2.5, center_bias=None):
        super().__init__(center_bias)
        if work_side < 8:
            raise ValidationError("work_side must be >= 8")
        self.work_side = int(work_side)
        self.smooth_sigma = float(smooth_sigma)

    def saliency(self, gray):
        spectrum = np.fft.fft2(gray)
        magnitude = np.abs(spectrum)
        peak = magnitude.max()
        if peak == 0:
            return np.zeros_like(gray)
        # relative floor keeps the residual invariant to intensity scaling
        log_amp = np.log(np.maximum(magnitude, peak * 1e-12))
        residual = log_amp - ndimage.uniform_filter(log_amp, size=3, mode="wrap")
        recon = np.fft.ifft2(np.exp(residual + 1j * np.angle(spectrum)))
        sal = recon.real ** 2 + recon.imag ** 2
        return gaussian_blur(sal, BlurSpec(self.smooth_sigma, "reflect", "reflect"))

    def predict_unbiased(self, view):
        gray = to_gray(view.image)
        small = resample(gray, self.work_side, self.work_side)
        sal = self.saliency(small)
        level = sal.mean()
        mean = small.mean()
        if level <= 0 or mean <= 0:
            return np.zeros((view.side, view.side))
        # the residual is contrast-invariant; weighting by RMS contrast keeps
        # near-flat views from dominating the unnormalized fusion
        sal = sal * (small.std() / mean / level)
        return np.maximum(resample(sal, view.side, view.side), 0.0)


def _key(image_id, theta_deg, phi_deg):
    return (str(image_id), round(float(theta_deg) % 360.0, 6) % 360.0, round(float(phi_deg), 6))


def read_view_manifest(path):
    """Parse ``<image_id> <theta_c_deg> <phi_c_deg> <relative_path>`` lines."""
    path = Path(path)
    entries = {}
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read view manifest ({exc})", path) from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ParseError("expected '<image_id> <theta_deg> <phi_deg> <path>'", path, lineno)
        try:
            theta, phi = float(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError("view angles must be numbers", path, lineno) from None
        if not (math.isfinite(theta) and -90.0 <= phi <= 90.0):
            raise ParseError(f"view direction out of range: {parts[1]} {parts[2]}", path, lineno)
        key = _key(parts[0], theta, phi)
        if key in entries:
            raise ParseError(f"duplicate view entry {parts[0]} {parts[1]} {parts[2]}", path, lineno)
        entries[key] = path.parent / parts[3]
    return entries


def write_view_manifest(path, rows):
    """Write (image_id, theta_deg, phi_deg, relative_path) rows."""
    lines = [f"{i} {t:.6f} {p:.6f} {rel}" for i, t, p, rel in rows]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


class FileBackend(SaliencyBackend):
    """Precomputed per-view maps, e.g. from an externally run neural model.

    Maps are looked up by (image id, theta_c, phi_c) in a view manifest and
    resampled if their size differs from the requested view.
    """

    name = "file"

    def __init__(self, manifest_path, center_bias=None):
        super().__init__(center_bias)
        self.manifest_path = Path(manifest_path)
        self.entries = read_view_manifest(self.manifest_path)

    def predict_unbiased(self, view):
        from .dataset import load_image

        theta, phi = view.frame.key_deg
        key = _key(view.source_id, theta, phi)
        if key not in self.entries:
            raise ValidationError(
                f"no stored map for image {view.source_id!r} at ({theta}, {phi}) "
                f"in {self.manifest_path}")
        stored = to_gray(load_image(self.entries[key]))
        if np.any(stored < 0):
            raise ValidationError(f"stored map {self.entries[key]} has negative values")
        if stored.shape != (view.side, view.side):
            log.debug("resampling %s from %s", self.entries[key], stored.shape)
            stored = np.maximum(resample(stored, view.side, view.side), 0.0)
        return stored


def make_backend(spec, center_bias=None):
    """Build a backend from a CLI spec: ``constant``, ``spectral`` or ``file:<manifest>``."""
    if spec == "constant":
        return ConstantBackend(center_bias)
    if spec == "spectral" or spec.startswith("spectral:"):
        _, _, arg = spec.partition(":")
        return SpectralResidualBackend(int(arg) if arg else 64, center_bias=center_bias)
    if spec.startswith("file:"):
        return FileBackend(spec[5:], center_bias)
    raise ValidationError(f"unknown backend {spec!r}; use constant, spectral[:side] or file:<manifest>")
