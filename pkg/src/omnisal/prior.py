"""Fixation priors on the sphere.

Method A uses an equator bias obtained by averaging training saliency maps and
multiplies it into the fused equirectangular map. Method B learns one planar
weight map per viewing latitude and multiplies it into every view at that
latitude before integration.

Method B fitting works on an explicit linear model of the pipeline: for fixed
backend outputs, the fused map is linear in the coarse bias parameters, so
each training image reduces to one sparse matrix and the loss gradient is
exact.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import logging
import math
from pathlib import Path

import numpy as np
from scipy import sparse

from . import _kernels_py
from .errors import (BiasShapeMismatch, Divergence, EmptyInput, MissingLatitude, ParseError,
                     ShapeMismatch, ValidationError)
from .fusion import DEFAULT_VIEW_SIDE, extract_views, integrate_views, _map_jobs
from .raster import BlurSpec, as_raster, blur_matrices

log = logging.getLogger(__name__)

KL_EPS = 1e-10
LAT_TOL = 1e-9


@dataclass(frozen=True)
class EquatorBias:
    """Equirectangular multiplicative prior (Method A)."""

    map: np.ndarray

    def __post_init__(self):
        m = as_raster(self.map, nonneg=True, name="equator bias")
        if not m.any():
            raise ValidationError("equator bias is all zero")
        object.__setattr__(self, "map", m)


def average_equator_bias(gt_maps):
    """Pixelwise mean of training saliency maps."""
    if not gt_maps:
        raise EmptyInput("need at least one ground-truth map")
    maps = [as_raster(m, nonneg=True, name="ground-truth map") for m in gt_maps]
    shape = maps[0].shape
    for m in maps[1:]:
        if m.shape != shape:
            raise ShapeMismatch(f"ground-truth maps differ in shape: {shape} vs {m.shape}")
    acc = np.zeros(shape)
    for m in maps:
        acc += m
    return EquatorBias(acc / len(maps))


@lru_cache(maxsize=32)
def upsample_matrix(resolution, side):
    """Sparse (side*side, res*res) bilinear upsampling with pixel-center alignment."""
    pos = (np.arange(side) + 0.5) * resolution / side - 0.5
    pos = np.clip(pos, 0.0, resolution - 1)
    i0 = np.floor(pos).astype(np.int64)
    frac = pos - i0
    i1 = np.minimum(i0 + 1, resolution - 1)
    # 1D interpolation matrix, then the 2D one as a Kronecker product
    rows = np.concatenate([np.arange(side), np.arange(side)])
    cols = np.concatenate([i0, i1])
    vals = np.concatenate([1.0 - frac, frac])
    one_d = sparse.csr_matrix((vals, (rows, cols)), shape=(side, resolution))
    mat = sparse.kron(one_d, one_d, format="csr")
    mat.sum_duplicates()
    return mat


def upsample_bias(coarse, side):
    coarse = np.asarray(coarse, dtype=np.float64)
    mat = upsample_matrix(coarse.shape[0], side)
    return (mat @ coarse.ravel()).reshape(side, side)


@dataclass(frozen=True)
class LatitudeBiasSet:
    """Per-latitude coarse bias grids (Method B), shared across longitudes.

    ``entries`` holds (phi_c in radians, square coarse weight grid) sorted by
    latitude. ``loss_trace`` records the training objective when fitted.
    """

    entries: tuple
    loss_trace: tuple = field(default=(), compare=False)
    interval_deg: float = math.nan

    def __post_init__(self):
        checked = []
        for phi, grid in self.entries:
            g = as_raster(grid, nonneg=True, name="latitude bias")
            if g.shape[0] != g.shape[1]:
                raise ShapeMismatch("latitude biases must be square grids")
            checked.append((float(phi), g))
        checked.sort(key=lambda e: e[0])
        shapes = {g.shape for _, g in checked}
        if len(shapes) > 1:
            raise ShapeMismatch(f"latitude biases differ in shape: {sorted(shapes)}")
        object.__setattr__(self, "entries", tuple(checked))

    @property
    def latitudes(self):
        return [phi for phi, _ in self.entries]

    @property
    def resolution(self):
        return self.entries[0][1].shape[0] if self.entries else 0

    def _index(self, phi_c):
        for i, (phi, _) in enumerate(self.entries):
            if abs(phi - phi_c) <= LAT_TOL:
                return i
        raise MissingLatitude(f"no bias for latitude {math.degrees(phi_c):.4f} deg")

    def coarse(self, phi_c):
        return self.entries[self._index(phi_c)][1]

    def bias_for(self, phi_c, side):
        """Bias upsampled to a ``side`` x ``side`` view."""
        return upsample_bias(self.coarse(phi_c), side)

    def check_grid(self, grid):
        for phi in grid.latitudes:
            self._index(phi)

    def parameters(self):
        return np.concatenate([g.ravel() for _, g in self.entries])

    @classmethod
    def from_parameters(cls, latitudes, params, resolution, **kw):
        grids = np.asarray(params, dtype=np.float64).reshape(len(latitudes), resolution, resolution)
        return cls(tuple(zip(latitudes, grids)), **kw)

    @classmethod
    def ones(cls, latitudes, resolution, **kw):
        return cls(tuple((phi, np.ones((resolution, resolution))) for phi in latitudes), **kw)


@dataclass(frozen=True)
class FitConfig:
    learning_rate: float = 0.01
    iterations: int = 500
    bias_resolution: int = 25
    loss: str = "kl"
    optimizer: str = "adam"
    blur_sigma: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be > 0")
        if self.iterations < 0:
            raise ValidationError("iterations must be >= 0")
        if self.bias_resolution < 4:
            raise ValidationError("bias_resolution must be >= 4")
        if self.loss not in ("kl", "mse"):
            raise ValidationError("loss must be 'kl' or 'mse'")
        if self.optimizer not in ("adam", "gd"):
            raise ValidationError("optimizer must be 'adam' or 'gd'")
        if self.blur_sigma < 0:
            raise ValidationError("blur_sigma must be >= 0")


def integration_matrix(grid, side, height, width):
    """Sparse (H*W, K*side*side) operator of ``integrate_views``.

    Row p holds the bilinear sampling weights of every covering view divided
    by the coverage count, so ``A @ stacked_views`` equals the fused map.
    """
    rows, cols, vals = [], [], []
    count = np.zeros(height * width)
    for k, frame in enumerate(grid):
        covered, px, py = _kernels_py.project_pixels(frame.axes, frame.tan_half, side, height, width)
        pix = np.flatnonzero(covered)
        if pix.size == 0:
            continue
        count[pix] += 1
        px = np.clip(px.ravel()[pix], 0.0, side - 1)
        py = np.clip(py.ravel()[pix], 0.0, side - 1)
        x0 = np.floor(px).astype(np.int64)
        y0 = np.floor(py).astype(np.int64)
        fx, fy = px - x0, py - y0
        x1 = np.minimum(x0 + 1, side - 1)
        y1 = np.minimum(y0 + 1, side - 1)
        base = k * side * side
        for yy, xx, w in ((y0, x0, (1 - fy) * (1 - fx)), (y0, x1, (1 - fy) * fx),
                          (y1, x0, fy * (1 - fx)), (y1, x1, fy * fx)):
            rows.append(pix)
            cols.append(base + yy * side + xx)
            vals.append(w)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals) / np.maximum(count[rows], 1.0)
    mat = sparse.csr_matrix((vals, (rows, cols)), shape=(height * width, len(grid) * side * side))
    mat.sum_duplicates()
    return mat


class BiasObjective:
    """Training loss of Method B as a function of the stacked coarse biases."""

    def __init__(self, view_maps, gt_maps, grid, resolution, loss="kl", blur=BlurSpec()):
        if not gt_maps:
            raise EmptyInput("no training images")
        shape = gt_maps[0].shape
        self.shape = shape
        self.loss = loss
        self.latitudes = grid.latitudes
        side = view_maps[0][0].shape[0]
        n_lat = len(self.latitudes)
        lat_index = [self._lat(f.phi_c) for f in grid]
        select = sparse.csr_matrix((np.ones(len(grid)), (np.arange(len(grid)), lat_index)),
                                   shape=(len(grid), n_lat))
        expand = sparse.kron(select, upsample_matrix(resolution, side), format="csr")
        integrate = integration_matrix(grid, side, *shape)
        self.operators = []
        for maps in view_maps:
            stacked = np.concatenate([np.asarray(m, dtype=np.float64).ravel() for m in maps])
            scaled = integrate @ sparse.diags(stacked)
            self.operators.append((scaled @ expand).tocsr())
        self.gt = [as_raster(g, nonneg=True, name="ground-truth map") for g in gt_maps]
        for g in self.gt:
            if g.shape != shape:
                raise ShapeMismatch("ground-truth maps differ in shape")
        self.blur_v, self.blur_h = blur_matrices(shape, blur)
        self.blurred = blur.sigma > 0
        self.n_params = n_lat * resolution * resolution

    def _lat(self, phi):
        for i, p in enumerate(self.latitudes):
            if abs(p - phi) <= LAT_TOL:
                return i
        raise MissingLatitude(phi)

    def fused(self, params, i):
        """Pre-blur fused map of training image ``i``."""
        return (self.operators[i] @ params).reshape(self.shape)

    def estimate(self, params, i):
        y = self.fused(params, i)
        if self.blurred:
            y = self.blur_v @ y @ self.blur_h.T
        return y / y.sum()

    def __call__(self, params):
        return self.value_and_grad(params, grad=False)[0]

    def value_and_grad(self, params, grad=True):
        params = np.asarray(params, dtype=np.float64)
        total = 0.0
        g_total = np.zeros_like(params) if grad else None
        for op, gt in zip(self.operators, self.gt):
            y = (op @ params).reshape(self.shape)
            if self.blurred:
                y = self.blur_v @ y @ self.blur_h.T
            s = y.sum()
            if not (s > 0 and math.isfinite(s)):
                return math.inf, g_total
            q = y / s
            if self.loss == "kl":
                total += float(np.sum(gt * np.log((gt + KL_EPS) / (q + KL_EPS))))
                g_q = -gt / (q + KL_EPS)
            else:
                diff = q - gt
                total += float(np.mean(diff * diff))
                g_q = 2.0 * diff / diff.size
            if not grad:
                continue
            g_y = (g_q - np.sum(g_q * q)) / s
            if self.blurred:
                g_y = self.blur_v.T @ g_y @ self.blur_h
            g_total += op.T @ g_y.ravel()
        n = len(self.gt)
        return total / n, (g_total / n if grad else None)


def predict_views(odi, backend, grid, view_side, image_id="", jobs=1):
    views = extract_views(odi, grid, view_side, image_id, jobs)
    return _map_jobs(lambda v: backend.predict(v, apply_center_bias=False), views, jobs)


def fit_latitude_bias(train, backend, grid, config=FitConfig(), view_side=DEFAULT_VIEW_SIDE,
                      jobs=1):
    """Learn one bias grid per latitude of ``grid`` from (panorama, gt map, id) triples.

    Projected gradient descent (Adam or plain steps) from all-ones weights;
    the returned set is the lowest-loss iterate, so its loss never exceeds
    the initial one. ``loss_trace`` holds the loss at every iteration.
    """
    train = list(train)
    if not train:
        raise EmptyInput("no training images")
    view_maps, gts = [], []
    for item in train:
        odi, gt = item[0], item[1]
        image_id = item[2] if len(item) > 2 else ""
        view_maps.append(predict_views(odi, backend, grid, view_side, image_id, jobs))
        gts.append(gt)
    objective = BiasObjective(view_maps, gts, grid, config.bias_resolution, config.loss,
                              BlurSpec(config.blur_sigma))
    params, trace = optimize(objective, np.ones(objective.n_params), config)
    return LatitudeBiasSet.from_parameters(grid.latitudes, params, config.bias_resolution,
                                           loss_trace=tuple(trace),
                                           interval_deg=grid.interval_deg)


def optimize(objective, params, config):
    """Projected first-order minimization; returns (best params, loss trace)."""
    params = np.maximum(np.asarray(params, dtype=np.float64), 0.0)
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    loss, grad = objective.value_and_grad(params)
    if not math.isfinite(loss):
        raise Divergence("initial loss is not finite")
    trace = [loss]
    best, best_loss = params.copy(), loss
    for it in range(1, config.iterations + 1):
        if config.optimizer == "adam":
            m = beta1 * m + (1 - beta1) * grad
            v = beta2 * v + (1 - beta2) * grad * grad
            step = (m / (1 - beta1 ** it)) / (np.sqrt(v / (1 - beta2 ** it)) + eps)
        else:
            step = grad
        params = np.maximum(params - config.learning_rate * step, 0.0)
        loss, grad = objective.value_and_grad(params)
        if not math.isfinite(loss):
            raise Divergence(f"loss became non-finite at iteration {it}")
        trace.append(loss)
        if loss < best_loss:
            best, best_loss = params.copy(), loss
    log.info("bias fit: loss %.6g -> %.6g over %d iterations", trace[0], best_loss,
             config.iterations)
    return best, trace


def compose_bias_equirect(bias_set, grid, out_shape, view_side=DEFAULT_VIEW_SIDE):
    """Integrate the per-view biases into one equirectangular map."""
    height, width = out_shape
    maps = [(f, bias_set.bias_for(f.phi_c, view_side)) for f in grid]
    return integrate_views(maps, width, height).map


def latitude_profile(raster):
    """Row-wise mean of an equirectangular raster."""
    return np.asarray(raster, dtype=np.float64).mean(axis=1)


META_NAME = "bias_meta.txt"


def save_latitude_biases(directory, bias_set):
    """Write one float map per latitude plus a metadata file."""
    from .dataset import save_map

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [f"interval_deg {bias_set.interval_deg:g}",
             f"resolution {bias_set.resolution}"]
    for phi, grid in bias_set.entries:
        deg = math.degrees(phi)
        name = f"lat_{deg:+08.3f}.f32"
        save_map(directory / name, grid)
        lines.append(f"latitude {deg:.6f} {name}")
    if bias_set.loss_trace:
        lines.append("loss_trace " + ",".join(f"{x:.17g}" for x in bias_set.loss_trace))
    (directory / META_NAME).write_text("\n".join(lines) + "\n")


def load_latitude_biases(directory):
    from .dataset import load_image

    directory = Path(directory)
    meta = directory / META_NAME
    try:
        text = meta.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read bias metadata ({exc})", meta) from exc
    interval = math.nan
    entries, trace = [], ()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split()
        if not parts:
            continue
        try:
            if parts[0] == "interval_deg":
                interval = float(parts[1])
            elif parts[0] == "latitude":
                entries.append((math.radians(float(parts[1])), load_image(directory / parts[2])))
            elif parts[0] == "loss_trace":
                trace = tuple(float(x) for x in parts[1].split(","))
            elif parts[0] != "resolution":
                raise ParseError(f"unknown key {parts[0]!r}", meta, lineno)
        except (IndexError, ValueError) as exc:
            raise ParseError(f"malformed line ({exc})", meta, lineno) from None
    if not entries:
        raise ParseError("no latitude entries", meta)
    return LatitudeBiasSet(tuple(entries), loss_trace=trace, interval_deg=interval)


def check_equator_bias_shape(bias, shape):
    if bias.map.shape != tuple(shape):
        raise BiasShapeMismatch(f"equator bias is {bias.map.shape}, expected {tuple(shape)}")
