import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from omnisal import _core
from omnisal.backend import ConstantBackend, SpectralResidualBackend
from omnisal.errors import BiasShapeMismatch, EmptyInput, MissingLatitude, ShapeMismatch
from omnisal.fusion import estimate, extract_views, fuse_unblurred, integrate_views
from omnisal.geometry import coverage_counts, view_frame, view_grid
from omnisal.prior import EquatorBias, LatitudeBiasSet
from omnisal.raster import BlurSpec, gaussian_blur, normalize_sum

from conftest import smooth_field

FOV = math.radians(100)


def plane_directions(frame, side):
    t = frame.tan_half
    c = (2 * (np.arange(side) + 0.5) / side - 1) * t
    ax = frame.axes
    d = ax[2] + c[None, :, None] * ax[0] + c[:, None, None] * ax[1]
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


@pytest.fixture(params=["compiled", "python"])
def kernels(request, monkeypatch):
    """Run a test against both kernel implementations."""
    if request.param == "compiled":
        if _core.compiled_kernels is None:
            pytest.skip("extension not built")
        impl = _core.compiled_kernels
    else:
        impl = _core.python_kernels
    for name in ("bilinear_sample", "extract_view", "integrate_views"):
        monkeypatch.setattr(_core, name, getattr(impl, name))
    return request.param


def test_extract_constant(kernels):
    views = extract_views(np.full((40, 80), 0.37), view_grid(45, FOV), 32)
    assert len(views) == 26
    for v in views:
        np.testing.assert_allclose(v.image, 0.37, rtol=1e-14)


def test_extract_rgb_shape():
    views = extract_views(np.ones((20, 40, 3)), view_grid(90, FOV), 32)
    assert views[0].image.shape == (32, 32, 3)


def test_extract_view_center(kernels, rng):
    odi = rng.random((40, 80))
    # odd side so a pixel sits exactly on the view axis
    v = extract_views(odi, [view_frame(0.0, 0.0, FOV)], 33)[0]
    # (theta, phi) = (0, 0) lies at col 39.5, row 19.5
    expected = odi[19:21, 39:41].mean()
    assert v.image[16, 16] == pytest.approx(expected, abs=1e-12)


def test_extract_analytic(kernels):
    # f(theta, phi) = cos(phi) sin(theta) is the y component of d(theta, phi)
    odi = smooth_field(400, 800, lambda t, p: np.cos(p) * np.sin(t))
    side = 64
    for v in extract_views(odi, view_grid(45, FOV), side):
        exact = plane_directions(v.frame, side)[..., 1]
        assert np.max(np.abs(v.image - exact)) < 0.01


def test_extract_parallel_bitwise(rng):
    odi = rng.random((50, 100))
    a = extract_views(odi, view_grid(45, FOV), 40, jobs=1)
    b = extract_views(odi, view_grid(45, FOV), 40, jobs=4)
    assert all(x.image.tobytes() == y.image.tobytes() for x, y in zip(a, b))


def test_integrate_single_view(kernels, rng):
    f = view_frame(0.5, 0.2, FOV)
    sal = rng.random((32, 32)) + 1.0
    fused = integrate_views([(f, sal)], 80, 40)
    inside = coverage_counts([f], 40, 80) == 1
    np.testing.assert_array_equal(fused.coverage == 1, inside)
    assert np.all(fused.map[~inside] == 0) and np.all(fused.map[inside] >= 1.0)
    assert fused.uncovered == np.count_nonzero(~inside)


def test_integrate_constant_views(kernels):
    grid = view_grid(45, FOV)
    fused = integrate_views([(f, np.full((32, 32), 2.5)) for f in grid], 80, 40)
    assert fused.uncovered == 0 and not fused.normalized
    np.testing.assert_allclose(fused.map, 2.5, rtol=1e-14)


def test_integrate_empty():
    with pytest.raises(EmptyInput):
        integrate_views([], 10, 5)


def test_integrate_mixed_sizes():
    f = view_frame(0, 0, FOV)
    with pytest.raises(ShapeMismatch):
        integrate_views([(f, np.ones((32, 32))), (f, np.ones((40, 40)))], 10, 5)


def test_integrate_warns_uncovered(caplog):
    with caplog.at_level("WARNING"):
        integrate_views([(view_frame(0, 0, FOV), np.ones((32, 32)))], 40, 20)
    assert "not covered" in caplog.text


@pytest.mark.parametrize("interpolation", ["bilinear", "nearest"])
def test_extract_integrate_round_trip(kernels, interpolation):
    odi = smooth_field(100, 200, lambda t, p: np.cos(p) * np.sin(t) + 0.5 * np.sin(2 * p))
    grid = view_grid(45, FOV)
    views = extract_views(odi, grid, 128)
    fused = integrate_views([(v.frame, v.image) for v in views], 200, 100, interpolation)
    covered = fused.coverage > 0
    rmse = np.sqrt(np.mean((fused.map[covered] - odi[covered]) ** 2))
    assert rmse < 0.02 * np.ptp(odi)


def test_integrate_permutation_invariant(rng):
    grid = view_grid(45, FOV)
    maps = [(f, rng.random((32, 32))) for f in grid]
    ref = integrate_views(maps, 80, 40).map
    for _ in range(3):
        perm = rng.permutation(len(maps))
        out = integrate_views([maps[i] for i in perm], 80, 40).map
        np.testing.assert_allclose(out, ref, rtol=0, atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_integrate_scaling_equivariant(k):
    rng = np.random.default_rng(3)
    grid = view_grid(90, FOV)
    maps = [(f, rng.random((32, 32))) for f in grid]
    a = integrate_views(maps, 60, 30).map
    b = integrate_views([(f, k * m) for f, m in maps], 60, 30).map
    np.testing.assert_allclose(b, k * a, rtol=1e-12)
    np.testing.assert_allclose(normalize_sum(b), normalize_sum(a), rtol=1e-9, atol=1e-15)


def test_coverage_monotone_pixelwise():
    counts = [integrate_views([(f, np.ones((32, 32))) for f in view_grid(iv, FOV)], 160, 80).coverage
              for iv in (22.5, 45, 90)]
    assert np.all(counts[0] >= counts[1]) and np.all(counts[1] >= counts[2])


def test_estimate_constant_prior_none():
    out = estimate(np.zeros((40, 80)), ConstantBackend(), view_grid(45, FOV), view_side=32)
    assert out.normalized
    np.testing.assert_allclose(out.map, 1.0 / out.map.size, rtol=1e-12)


def test_estimate_method_a_identity(rng):
    e = rng.random((40, 80)) + 0.1
    blur = BlurSpec(3.0)
    grid = view_grid(45, FOV)
    out = estimate(np.zeros((40, 80)), ConstantBackend(), grid, EquatorBias(e), blur, view_side=32)
    mask = integrate_views([(f, np.ones((32, 32))) for f in grid], 80, 40).coverage > 0
    expect = normalize_sum(gaussian_blur(e * mask, blur))
    np.testing.assert_allclose(out.map, expect, rtol=1e-12)
    assert abs(out.map.sum() - 1) < 1e-9


def test_estimate_all_ones_prior_matches_none(rng):
    odi = rng.random((40, 80))
    be = SpectralResidualBackend(32)
    grid = view_grid(45, FOV)
    none = estimate(odi, be, grid, None, BlurSpec(2.0), 32)
    a = estimate(odi, be, grid, EquatorBias(np.ones((40, 80))), BlurSpec(2.0), 32)
    b = estimate(odi, be, grid, LatitudeBiasSet.ones(grid.latitudes, 5), BlurSpec(2.0), 32)
    np.testing.assert_allclose(a.map, none.map, rtol=1e-12)
    np.testing.assert_allclose(b.map, none.map, rtol=1e-12)


def test_estimate_method_b_applies_per_view():
    grid = view_grid(90, FOV)
    lats = grid.latitudes
    entries = [(p, np.full((4, 4), 3.0 if p == 0 else 1.0)) for p in lats]
    fused = fuse_unblurred(np.zeros((40, 80)), ConstantBackend(), grid, LatitudeBiasSet(tuple(entries)),
                           32)
    # the equator band is covered only by equator views
    assert fused.map[20, 0] == pytest.approx(3.0)
    assert fused.map[0, 0] == pytest.approx(1.0)


def test_estimate_errors():
    grid = view_grid(45, FOV)
    with pytest.raises(BiasShapeMismatch):
        estimate(np.zeros((40, 80)), ConstantBackend(), grid, EquatorBias(np.ones((20, 40))), view_side=32)
    with pytest.raises(MissingLatitude):
        estimate(np.zeros((40, 80)), ConstantBackend(), grid,
                 LatitudeBiasSet.ones(view_grid(90, FOV).latitudes, 4), view_side=32)


def test_estimate_sums_to_one_and_jobs_bitwise(rng):
    odi = rng.random((40, 80, 3))
    grid = view_grid(45, FOV)
    a = estimate(odi, SpectralResidualBackend(32), grid, blur=BlurSpec(4.0), view_side=48, jobs=1)
    b = estimate(odi, SpectralResidualBackend(32), grid, blur=BlurSpec(4.0), view_side=48, jobs=4)
    assert abs(a.map.sum() - 1) < 1e-9 and np.all(a.map >= 0)
    assert a.map.tobytes() == b.map.tobytes()
