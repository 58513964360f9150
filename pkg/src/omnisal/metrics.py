"""Saliency evaluation metrics and the blur / view-interval sweeps.

All metrics work on the raw equirectangular grid, without solid-angle
weighting. Fixations are (row, col) integer pixel positions.
"""
from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import dataclass, fields, replace
import logging
import math

import numpy as np

from .errors import DegenerateSet, NoFixations, ShapeMismatch, ZeroVariance
from .raster import BlurSpec, as_raster, check_same_shape

log = logging.getLogger(__name__)

KL_EPS = 1e-10
DEFAULT_SIGMAS = (0, 8, 16, 24, 32, 40, 48)


@dataclass(frozen=True)
class MetricNormalization:
    m_kl: float = 0.400
    m_cc: float = 0.623
    m_nss: float = 0.806
    m_auc: float = 0.713
    s_kl: float = 0.035
    s_cc: float = 0.055
    s_nss: float = 0.072
    s_auc: float = 0.016

    def __post_init__(self):
        for name in ("s_kl", "s_cc", "s_nss", "s_auc"):
            if not getattr(self, name) > 0:
                raise DegenerateSet(f"{name} must be positive")


DEFAULT_NORMALIZATION = MetricNormalization()


@dataclass(frozen=True)
class MetricReport:
    kl: float
    cc: float
    nss: float
    auc: float
    a: float = math.nan

    def with_a(self, norm=DEFAULT_NORMALIZATION):
        return replace(self, a=integrated_metric(self, norm))


def kl_div(gt, pred):
    """KL(gt || pred) with 1e-10 added inside the log."""
    gt = as_raster(gt, name="gt")
    pred = as_raster(pred, name="pred")
    check_same_shape(gt, pred)
    return float(np.sum(gt * np.log((gt + KL_EPS) / (pred + KL_EPS))))


def pearson_cc(gt, pred):
    gt = as_raster(gt, name="gt")
    pred = as_raster(pred, name="pred")
    check_same_shape(gt, pred)
    a = gt - gt.mean()
    b = pred - pred.mean()
    den = math.sqrt(float(np.sum(a * a)) * float(np.sum(b * b)))
    if den == 0:
        raise ZeroVariance("correlation is undefined for a constant map")
    return float(np.clip(np.sum(a * b) / den, -1.0, 1.0))


def _fixation_values(pred, fixations):
    fix = np.asarray(fixations, dtype=np.int64).reshape(-1, 2)
    if fix.shape[0] == 0:
        raise NoFixations("no fixations given")
    h, w = pred.shape
    inside = (fix[:, 0] >= 0) & (fix[:, 0] < h) & (fix[:, 1] >= 0) & (fix[:, 1] < w)
    if not inside.all():
        raise ShapeMismatch(f"{int((~inside).sum())} fixations fall outside the {h}x{w} map")
    return pred[fix[:, 0], fix[:, 1]]


def nss(pred, fixations):
    """Mean z-scored saliency at fixation pixels (0 for a flat map)."""
    pred = as_raster(pred, name="pred")
    values = _fixation_values(pred, fixations)
    std = pred.std()
    if std < 1e-12:
        return 0.0
    return float(np.mean((values - pred.mean()) / std))


def auc_judd(pred, fixations):
    """ROC area with thresholds at the fixation saliency values.

    TPR counts fixations at or above a threshold, FPR counts all pixels at or
    above it; the curve is closed through (0, 0) and (1, 1).
    """
    pred = as_raster(pred, name="pred")
    values = _fixation_values(pred, fixations)
    thresholds = np.unique(values)[::-1]
    fix_sorted = np.sort(values)
    all_sorted = np.sort(pred.ravel())
    n_fix, n_all = fix_sorted.size, all_sorted.size
    tpr = (n_fix - np.searchsorted(fix_sorted, thresholds, side="left")) / n_fix
    fpr = (n_all - np.searchsorted(all_sorted, thresholds, side="left")) / n_all
    tpr = np.concatenate([[0.0], tpr, [1.0]])
    fpr = np.concatenate([[0.0], fpr, [1.0]])
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def integrated_metric(report, norm=DEFAULT_NORMALIZATION):
    """Mean of the four standardized metrics, KL sign-flipped."""
    return 0.25 * (-(report.kl - norm.m_kl) / norm.s_kl
                   + (report.cc - norm.m_cc) / norm.s_cc
                   + (report.nss - norm.m_nss) / norm.s_nss
                   + (report.auc - norm.m_auc) / norm.s_auc)


def fit_normalization(reports):
    """Per-metric mean and population standard deviation."""
    if len(reports) < 2:
        raise DegenerateSet("need at least two reports")
    arr = np.array([[r.kl, r.cc, r.nss, r.auc] for r in reports], dtype=np.float64)
    mean = arr.mean(axis=0)
    std = arr.std(axis=0)
    if np.any(std == 0):
        names = [n for n, s in zip(("kl", "cc", "nss", "auc"), std) if s == 0]
        raise DegenerateSet(f"zero spread in {', '.join(names)}")
    return MetricNormalization(*mean, *std)


def evaluate_map(pred, gt, fixations, norm=DEFAULT_NORMALIZATION):
    report = MetricReport(kl_div(gt, pred), pearson_cc(gt, pred), nss(pred, fixations),
                          auc_judd(pred, fixations))
    return report.with_a(norm)


def mean_report(reports):
    if not reports:
        raise DegenerateSet("no reports to average")
    return MetricReport(*(float(np.mean([getattr(r, f.name) for r in reports]))
                          for f in fields(MetricReport)))


REPORT_HEADER = ["name", "kl", "cc", "nss", "auc", "a"]


def write_report_csv(path, named_reports):
    """Write ``name,kl,cc,nss,auc,a`` rows plus a ``__mean__`` row."""
    rows = list(named_reports)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        for name, r in rows:
            writer.writerow([name] + [repr(float(getattr(r, k))) for k in REPORT_HEADER[1:]])
        if rows:
            m = mean_report([r for _, r in rows])
            writer.writerow(["__mean__"] + [repr(float(getattr(m, k))) for k in REPORT_HEADER[1:]])


def read_report_csv(path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append((row["name"], MetricReport(*(float(row[k]) for k in REPORT_HEADER[1:]))))
    return out


@dataclass(frozen=True)
class EvalSample:
    """One evaluation image: panorama, ground-truth map and fixation pixels."""

    image_id: str
    image: np.ndarray
    gt: np.ndarray
    fixations: np.ndarray


@dataclass
class Pipeline:
    """Settings for ``fusion.estimate`` shared across a sweep."""

    backend: object
    interval_deg: float = 45.0
    fov_deg: float = 100.0
    view_side: int = 500
    prior: object = None
    blur: BlurSpec = BlurSpec()
    interpolation: str = "bilinear"

    def grid(self, interval_deg=None):
        from .geometry import view_grid

        return view_grid(interval_deg or self.interval_deg, math.radians(self.fov_deg))

    def fuse(self, sample, grid=None, jobs=1):
        from .fusion import fuse_unblurred

        return fuse_unblurred(sample.image, self.backend, grid or self.grid(), self.prior,
                              self.view_side, sample.gt.shape, sample.image_id,
                              self.interpolation, jobs)


def _parallel(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class SweepResult:
    best: float
    per_setting: dict  # setting -> list of (image_id, MetricReport)
    means: dict  # setting -> MetricReport
    view_counts: dict = None


def _blur_spec(base, sigma):
    return BlurSpec(float(sigma), base.horizontal_boundary, base.vertical_boundary)


def sweep_blur(samples, pipeline, sigmas=DEFAULT_SIGMAS, norm=DEFAULT_NORMALIZATION, jobs=1):
    """Evaluate every blur sigma on fused maps; best by mean ``a``, ties to the smaller sigma."""
    from .fusion import finalize

    samples = list(samples)
    sigmas = sorted(float(s) for s in sigmas)
    if 0.0 not in sigmas:
        log.warning("blur sweep without sigma 0")
    grid = pipeline.grid()
    fused = [pipeline.fuse(s, grid, jobs) for s in samples]

    def run(sigma):
        spec = _blur_spec(pipeline.blur, sigma)
        return [(s.image_id, evaluate_map(finalize(f, spec).map, s.gt, s.fixations, norm))
                for s, f in zip(samples, fused)]

    per = dict(zip(sigmas, _parallel(run, sigmas, jobs)))
    means = {sig: mean_report([r for _, r in rows]) for sig, rows in per.items()}
    best = max(sigmas, key=lambda sig: (means[sig].a, -sig))
    return SweepResult(best, per, means)


def sweep_interval(samples, pipeline, intervals=(90.0, 45.0, 30.0, 22.5), norm=DEFAULT_NORMALIZATION, jobs=1):
    """Evaluate each view interval with the pipeline's blur; best by mean ``a``."""
    from .fusion import finalize

    samples = list(samples)
    per, counts = {}, {}
    for interval in intervals:
        grid = pipeline.grid(interval)
        counts[interval] = len(grid)
        log.info("interval %g deg: %d views", interval, len(grid))

        def run(s, grid=grid):
            fused = pipeline.fuse(s, grid, 1)
            return s.image_id, evaluate_map(finalize(fused, pipeline.blur).map, s.gt,
                                            s.fixations, norm)

        per[interval] = _parallel(run, samples, jobs)
    means = {k: mean_report([r for _, r in rows]) for k, rows in per.items()}
    best = max(intervals, key=lambda k: (means[k].a, k))
    return SweepResult(best, per, means, counts)
