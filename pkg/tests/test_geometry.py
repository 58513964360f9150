import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from omnisal.errors import InvalidFov, InvalidInterval
from omnisal.geometry import (Direction3, SphericalCoord, coverage_counts, direction_to_spherical,
                              equirect_pixel_to_spherical, expected_view_count, plane_to_direction,
                              project_to_view, spherical_to_direction, spherical_to_equirect_pixel,
                              view_frame, view_grid)

FOV = math.radians(100)
thetas = st.floats(-math.pi, math.pi, exclude_max=True)
phis = st.floats(-math.pi / 2, math.pi / 2)


def cross(a, b):
    return np.cross(np.asarray(a), np.asarray(b))


@pytest.mark.parametrize("theta_c,phi_c,x_axis,y_axis", [
    (0.0, 0.0, (0, -1, 0), (0, 0, 1)),
    (math.pi / 2, 0.0, (-1, 0, 0), (0, 0, 1)),
    (0.0, math.pi / 2, (0, -1, 0), (-1, 0, 0)),
])
def test_view_frame_examples(theta_c, phi_c, x_axis, y_axis):
    f = view_frame(theta_c, phi_c, FOV)
    np.testing.assert_allclose(f.x_axis, x_axis, atol=1e-15)
    np.testing.assert_allclose(f.y_axis, y_axis, atol=1e-15)
    np.testing.assert_allclose(f.z_axis, cross(f.x_axis, f.y_axis), atol=1e-15)


@pytest.mark.parametrize("fov", [0.0, -0.1, math.pi, 4.0])
def test_view_frame_rejects_fov(fov):
    with pytest.raises(InvalidFov):
        view_frame(0.0, 0.0, fov)


def test_direction_examples_match_cross_products():
    # oracle: X_n x Y_n from the frame axes, computed independently with numpy
    for (t, p), expect in [((0.0, 0.0), (-1, 0, 0)), ((0.0, math.pi / 2), (0, 0, -1))]:
        f = view_frame(t, p, FOV)
        z = cross(f.x_axis, f.y_axis)
        np.testing.assert_allclose(z, expect, atol=1e-15)
        np.testing.assert_allclose(spherical_to_direction(SphericalCoord(t, p)), z, atol=1e-15)


def test_direction_orthogonal_to_axes(rng):
    for t, p in zip(rng.uniform(-math.pi, math.pi, 1000), rng.uniform(-math.pi / 2, math.pi / 2, 1000)):
        f = view_frame(t, p, FOV)
        d = spherical_to_direction(SphericalCoord(t, p))
        assert abs(d.dot(f.x_axis)) < 1e-12
        assert abs(d.dot(f.y_axis)) < 1e-12
        np.testing.assert_allclose(d, f.z_axis, atol=1e-12)


@given(thetas, phis)
def test_frame_axes_orthonormal(t, p):
    ax = view_frame(t, p, FOV).axes
    np.testing.assert_allclose(ax @ ax.T, np.eye(3), atol=1e-12)


def test_direction_to_spherical_examples():
    assert direction_to_spherical(Direction3(-1.0, 0.0, 0.0)) == (0.0, 0.0)
    t, p = direction_to_spherical(Direction3(0.0, 1.0, 0.0))
    assert t == pytest.approx(math.pi / 2, abs=1e-15) and p == 0.0
    # poles normalize theta to 0
    assert direction_to_spherical(Direction3(0.0, 0.0, -1.0)) == (0.0, math.pi / 2)
    assert direction_to_spherical(Direction3(0.0, 0.0, 1.0)) == (0.0, -math.pi / 2)


def test_spherical_round_trip(rng):
    worst = 0.0
    for t, p in zip(rng.uniform(-math.pi, math.pi, 10_000), rng.uniform(-math.pi / 2, math.pi / 2, 10_000)):
        d = spherical_to_direction(SphericalCoord(t, p))
        back = spherical_to_direction(direction_to_spherical(d))
        # atan2 form stays accurate for tiny angles, unlike acos of the dot product
        worst = max(worst, math.atan2(np.linalg.norm(np.cross(d, back)), np.dot(d, back)))
        assert -math.pi <= direction_to_spherical(d).theta < math.pi
    assert worst < 1e-12


def test_equirect_pixel_examples():
    t, _ = equirect_pixel_to_spherical(0, 0, 1600, 800)
    assert t == pytest.approx(-math.pi + math.pi / 1600, abs=1e-15)
    _, p_a = equirect_pixel_to_spherical(0, 399, 1600, 800)
    _, p_b = equirect_pixel_to_spherical(0, 400, 1600, 800)
    assert abs(p_a + p_b) < 1e-12
    assert p_a == pytest.approx(math.pi / 1600, abs=1e-15)
    _, p_mid = equirect_pixel_to_spherical(0, 399.5, 1600, 800)
    assert abs(p_mid) < 1e-12


def test_equirect_round_trip_all_pixels():
    cols, rows = np.meshgrid(np.arange(100), np.arange(50))
    t, p = equirect_pixel_to_spherical(cols, rows, 100, 50)
    c2, r2 = spherical_to_equirect_pixel(t, p, 100, 50)
    assert np.max(np.abs(c2 - cols)) < 1e-9 and np.max(np.abs(r2 - rows)) < 1e-9


def test_non_2to1_warns(caplog):
    from omnisal.geometry import pixel_directions
    with caplog.at_level("WARNING"):
        pixel_directions(10, 30)
    assert "not 2:1" in caplog.text


def test_project_to_view_examples():
    f = view_frame(0.7, -0.3, FOV)
    u, v, covered = project_to_view(f.z_axis, f)
    assert abs(u) < 1e-15 and abs(v) < 1e-15 and covered
    half = FOV / 2
    d = Direction3(*(math.cos(half) * np.asarray(f.z_axis) + math.sin(half) * np.asarray(f.x_axis)))
    u, v, covered = project_to_view(d, f)
    assert u == pytest.approx(math.tan(half), rel=1e-12) and abs(v) < 1e-12 and covered
    assert not project_to_view(Direction3(*(-np.asarray(f.z_axis))), f).covered
    # just outside the frustum
    d = Direction3(*(math.cos(half + 1e-6) * np.asarray(f.z_axis)
                     + math.sin(half + 1e-6) * np.asarray(f.x_axis)))
    assert not project_to_view(d, f).covered


@given(thetas, phis)
def test_view_center_projects_to_origin(t, p):
    f = view_frame(t, p, FOV)
    u, v, covered = project_to_view(spherical_to_direction(SphericalCoord(t, p)), f)
    assert abs(u) < 1e-12 and abs(v) < 1e-12 and covered


@given(thetas, phis, st.floats(-1.19, 1.19), st.floats(-1.19, 1.19))
def test_plane_round_trip(t, p, u, v):
    f = view_frame(t, p, FOV)
    u2, v2, covered = project_to_view(plane_to_direction(u, v, f), f)
    assert covered and abs(u2 - u) < 1e-12 and abs(v2 - v) < 1e-12


def test_pixel_view_pixel_round_trip(rng):
    """pixel -> direction -> (u, v) in a covering frame -> direction -> pixel."""
    grid = view_grid(45, FOV)
    w, h = 1600, 800
    worst = 0.0
    for col, row in zip(rng.integers(0, w, 2000), rng.integers(0, h, 2000)):
        d = spherical_to_direction(equirect_pixel_to_spherical(col, row, w, h))
        for f in grid:
            u, v, covered = project_to_view(d, f)
            if covered:
                break
        c2, r2 = spherical_to_equirect_pixel(*direction_to_spherical(plane_to_direction(u, v, f)), w, h)
        dc = abs(c2 - col) % w
        worst = max(worst, min(dc, w - dc), abs(r2 - row))
    assert worst < 0.5


@pytest.mark.parametrize("interval,count", [(90, 6), (45, 26), (30, 62), (22.5, 114)])
def test_view_grid_counts(interval, count):
    grid = view_grid(interval, FOV)
    assert len(grid) == count == expected_view_count(interval)
    keys = {(round(f.theta_c, 12), round(f.phi_c, 12)) for f in grid}
    assert len(keys) == count
    poles = [f for f in grid if abs(abs(f.phi_c) - math.pi / 2) < 1e-12]
    assert len(poles) == 2 and all(f.theta_c == 0 for f in poles)


def test_view_grid_90_latitudes():
    assert np.allclose(np.degrees(view_grid(90, FOV).latitudes), [-90, 0, 90])


@pytest.mark.parametrize("interval", [0, -45, 40, 181, 50])
def test_view_grid_rejects_interval(interval):
    with pytest.raises(InvalidInterval):
        view_grid(interval, FOV)


def test_coverage_full_and_monotone():
    counts = {iv: coverage_counts(view_grid(iv, FOV), 800, 1600) for iv in (22.5, 45, 90)}
    for iv in (22.5, 45):
        assert counts[iv].min() >= 1
        hist = np.bincount(counts[iv].ravel())
        print(f"coverage multiplicity histogram at {iv} deg: {dict(enumerate(hist.tolist()))}")
    assert counts[22.5].mean() >= counts[45].mean() >= counts[90].mean()
