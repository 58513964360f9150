"""Extract overlapping planar views, predict, and fuse them on the sphere."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging

import numpy as np

from . import _core
from .backend import PlanarView
from .errors import BiasShapeMismatch, EmptyInput, ShapeMismatch, ValidationError
from .raster import BlurSpec, gaussian_blur, normalize_sum

log = logging.getLogger(__name__)

DEFAULT_VIEW_SIDE = 500

__all__ = ["PlanarView", "FusedMap", "extract_views", "integrate_views", "estimate",
           "fuse_unblurred", "finalize"]


@dataclass(frozen=True)
class FusedMap:
    map: np.ndarray
    coverage: np.ndarray
    normalized: bool = False

    @property
    def uncovered(self):
        return int(np.count_nonzero(self.coverage == 0))


def _map_jobs(fn, items, jobs):
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def extract_views(odi, grid, view_side=DEFAULT_VIEW_SIDE, source_id="", jobs=1):
    """Sample a ``view_side`` square gnomonic view for every frame of ``grid``.

    ``odi`` is an equirectangular grayscale (H, W) or color (H, W, C) image.
    """
    img = np.asarray(odi, dtype=np.float64)
    if img.ndim not in (2, 3):
        raise ShapeMismatch(f"expected an (H, W) or (H, W, C) image, got {img.shape}")
    if img.shape[1] != 2 * img.shape[0]:
        log.warning("panorama %s is not 2:1 equirectangular", img.shape[:2])
    planes = [img] if img.ndim == 2 else [np.ascontiguousarray(img[..., c])
                                          for c in range(img.shape[2])]

    def one(frame):
        chans = [_core.extract_view(p, frame.axes, frame.tan_half, view_side) for p in planes]
        data = chans[0] if img.ndim == 2 else np.stack(chans, axis=-1)
        return PlanarView(frame, data, source_id)

    return _map_jobs(one, list(grid), jobs)


def integrate_views(maps, out_width, out_height, interpolation="bilinear"):
    """Average overlapping per-view maps onto an equirectangular grid.

    Each output pixel takes the mean over every view whose frustum contains
    its direction, sampled at the exact projected position. Uncovered pixels
    are 0. The result is not normalized.
    """
    if not maps:
        raise EmptyInput("no views to integrate")
    if interpolation not in ("bilinear", "nearest"):
        raise ValidationError(f"interpolation must be bilinear or nearest, got {interpolation!r}")
    frames = [f for f, _ in maps]
    rasters = [np.asarray(m, dtype=np.float64) for _, m in maps]
    side = rasters[0].shape[0]
    for r in rasters:
        if r.ndim != 2 or r.shape != (side, side):
            raise ShapeMismatch("per-view maps must be square and share one size")
    views = np.stack(rasters)
    axes = np.stack([f.axes for f in frames])
    tan_half = np.array([f.tan_half for f in frames])
    acc, count = _core.integrate_views(views, axes, tan_half, int(out_height), int(out_width),
                                       interpolation == "nearest")
    fused = np.where(count > 0, acc / np.maximum(count, 1), 0.0)
    n_uncovered = int(np.count_nonzero(count == 0))
    if n_uncovered:
        log.warning("%d equirectangular pixels are not covered by any view", n_uncovered)
    return FusedMap(fused, count, normalized=False)


def _apply_latitude_bias(frame, saliency, prior):
    bias = prior.bias_for(frame.phi_c, saliency.shape[0])
    return saliency * bias


def fuse_unblurred(odi, backend, grid, prior=None, view_side=DEFAULT_VIEW_SIDE, out_shape=None,
                   image_id="", interpolation="bilinear", jobs=1):
    """Pipeline up to (and including) the equator-bias stage, before blur.

    ``prior`` is None, an :class:`~omnisal.prior.EquatorBias` (applied after
    integration) or a :class:`~omnisal.prior.LatitudeBiasSet` (applied per
    view before integration).
    """
    from .prior import EquatorBias, LatitudeBiasSet

    img = np.asarray(odi)
    height, width = out_shape if out_shape is not None else img.shape[:2]
    if isinstance(prior, LatitudeBiasSet):
        prior.check_grid(grid)
    elif isinstance(prior, EquatorBias) and prior.map.shape != (height, width):
        raise BiasShapeMismatch(f"equator bias is {prior.map.shape}, output is {(height, width)}")
    elif prior is not None and not isinstance(prior, (EquatorBias, LatitudeBiasSet)):
        raise ValidationError(f"unsupported prior {type(prior).__name__}")

    views = extract_views(img, grid, view_side, image_id, jobs)

    def one(view):
        sal = backend.predict(view, apply_center_bias=False)
        if isinstance(prior, LatitudeBiasSet):
            sal = _apply_latitude_bias(view.frame, sal, prior)
        return view.frame, sal

    per_view = _map_jobs(one, views, jobs)
    fused = integrate_views(per_view, width, height, interpolation)
    out = fused.map
    if isinstance(prior, EquatorBias):
        out = out * prior.map
    return FusedMap(out, fused.coverage, normalized=False)


def finalize(fused, blur=BlurSpec()):
    """Blur then normalize an unblurred fused map."""
    out = normalize_sum(gaussian_blur(fused.map, blur))
    return FusedMap(out, fused.coverage, normalized=True)


def estimate(odi, backend, grid, prior=None, blur=BlurSpec(), view_side=DEFAULT_VIEW_SIDE,
             out_shape=None, image_id="", interpolation="bilinear", jobs=1):
    """Equirectangular saliency map of a panorama, normalized to sum 1.

    extract views -> predict without center bias -> [latitude bias per view]
    -> integrate -> [equator bias] -> blur -> normalize.
    """
    fused = fuse_unblurred(odi, backend, grid, prior, view_side, out_shape, image_id,
                           interpolation, jobs)
    return finalize(fused, blur)
