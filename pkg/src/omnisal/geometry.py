"""Sphere, equirectangular and gnomonic-view coordinate transforms.

Conventions: longitude ``theta`` in [-pi, pi), latitude ``phi`` in
[-pi/2, pi/2] (positive north, row 0 at the top). A direction on the unit
sphere is ``d(theta, phi) = (-cos phi cos theta, cos phi sin theta, -sin phi)``,
which equals the view axis ``x_axis x y_axis`` of the frame centered there.
"""
from dataclasses import dataclass, field
import logging
import math
from typing import NamedTuple

import numpy as np

from .errors import InvalidFov, InvalidInterval, ValidationError

log = logging.getLogger(__name__)

DEFAULT_FOV_DEG = 100.0
PAPER_INTERVALS = (90.0, 45.0, 30.0, 22.5)


class SphericalCoord(NamedTuple):
    theta: float
    phi: float


class Direction3(NamedTuple):
    x: float
    y: float
    z: float

    def dot(self, other):
        return self.x * other[0] + self.y * other[1] + self.z * other[2]


def _cross(a, b):
    return Direction3(
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


@dataclass(frozen=True)
class ViewFrame:
    theta_c: float
    phi_c: float
    x_axis: Direction3
    y_axis: Direction3
    z_axis: Direction3
    fov: float

    @property
    def tan_half(self):
        return math.tan(self.fov / 2.0)

    @property
    def axes(self):
        """3x3 array whose rows are the x, y and z axes."""
        return np.array([self.x_axis, self.y_axis, self.z_axis], dtype=np.float64)

    @property
    def key_deg(self):
        """(theta_c, phi_c) in degrees, theta wrapped to [0, 360)."""
        theta = math.degrees(self.theta_c) % 360.0
        return round(theta, 6) % 360.0, round(math.degrees(self.phi_c), 6)


def view_frame(theta_c, phi_c, fov=math.radians(DEFAULT_FOV_DEG)):
    """Orthonormal basis of the planar view looking toward (theta_c, phi_c)."""
    if not (0.0 < fov < math.pi):
        raise InvalidFov(f"fov must lie in (0, pi), got {fov}")
    if not (-math.pi / 2 - 1e-12 <= phi_c <= math.pi / 2 + 1e-12):
        raise ValidationError(f"phi_c must lie in [-pi/2, pi/2], got {phi_c}")
    st, ct = math.sin(theta_c), math.cos(theta_c)
    sp, cp = math.sin(phi_c), math.cos(phi_c)
    x_axis = Direction3(-st, -ct, 0.0)
    y_axis = Direction3(-sp * ct, sp * st, cp)
    return ViewFrame(theta_c, phi_c, x_axis, y_axis, _cross(x_axis, y_axis), fov)


def spherical_to_direction(coord):
    theta, phi = coord
    cp = math.cos(phi)
    return Direction3(-cp * math.cos(theta), cp * math.sin(theta), -math.sin(phi))


def direction_to_spherical(d):
    x, y, z = d
    phi = -math.asin(min(1.0, max(-1.0, z)))
    if abs(x) < 1e-15 and abs(y) < 1e-15:
        return SphericalCoord(0.0, phi)
    theta = math.atan2(y, -x)
    if theta >= math.pi:
        theta -= 2 * math.pi
    return SphericalCoord(theta, phi)


def _check_aspect(width, height):
    if width != 2 * height:
        log.warning("equirectangular grid %dx%d is not 2:1", height, width)


def equirect_pixel_to_spherical(col, row, width, height):
    """Spherical coordinate of (possibly fractional) pixel position (col, row).

    Integer positions address pixel centers. Works elementwise on arrays.
    """
    theta = (np.asarray(col, dtype=np.float64) + 0.5) / width * (2.0 * np.pi) - np.pi
    phi = np.pi / 2.0 - (np.asarray(row, dtype=np.float64) + 0.5) / height * np.pi
    if np.ndim(theta) == 0 and np.ndim(phi) == 0:
        return SphericalCoord(float(theta), float(phi))
    return SphericalCoord(theta, phi)


def spherical_to_equirect_pixel(theta, phi, width, height):
    """Continuous (col, row) of a spherical coordinate; inverse of the above."""
    col = (np.asarray(theta, dtype=np.float64) + np.pi) / (2.0 * np.pi) * width - 0.5
    row = (np.pi / 2.0 - np.asarray(phi, dtype=np.float64)) / np.pi * height - 0.5
    if np.ndim(col) == 0 and np.ndim(row) == 0:
        return float(col), float(row)
    return col, row


def pixel_directions(height, width):
    """Unit directions of all pixel centers, shape (height, width, 3)."""
    _check_aspect(width, height)
    theta, phi = equirect_pixel_to_spherical(np.arange(width)[None, :], np.arange(height)[:, None],
                                             width, height)
    cp = np.cos(phi)
    return np.stack(np.broadcast_arrays(-cp * np.cos(theta), cp * np.sin(theta), -np.sin(phi)),
                    axis=-1)


def directions_to_spherical(d):
    """Vectorized ``direction_to_spherical`` over the last axis."""
    d = np.asarray(d, dtype=np.float64)
    theta = np.arctan2(d[..., 1], -d[..., 0])
    phi = -np.arcsin(np.clip(d[..., 2], -1.0, 1.0))
    return theta, phi


class Projection(NamedTuple):
    u: float
    v: float
    covered: bool


def project_to_view(d, frame):
    """Gnomonic plane coordinates of direction ``d`` in ``frame``.

    ``covered`` is set when the direction faces the view and falls inside the
    square frustum |u|, |v| <= tan(fov/2).
    """
    along = frame.z_axis.dot(d)
    if along <= 0:
        return Projection(math.nan, math.nan, False)
    u = frame.x_axis.dot(d) / along
    v = frame.y_axis.dot(d) / along
    lim = frame.tan_half * (1.0 + 1e-12)
    return Projection(u, v, abs(u) <= lim and abs(v) <= lim)


def plane_to_direction(u, v, frame):
    """Unit direction through plane point (u, v) of ``frame``."""
    x, y, z = frame.x_axis, frame.y_axis, frame.z_axis
    d = np.array([z[i] + u * x[i] + v * y[i] for i in range(3)])
    d /= np.linalg.norm(d)
    return Direction3(*d)


@dataclass(frozen=True)
class ViewGrid:
    interval_deg: float
    frames: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    @property
    def latitudes(self):
        """Distinct phi_c values in radians, ascending."""
        return sorted({f.phi_c for f in self.frames})


def expected_view_count(interval_deg):
    return 2 + (round(180.0 / interval_deg) - 1) * round(360.0 / interval_deg)


def view_grid(interval_deg, fov=math.radians(DEFAULT_FOV_DEG)):
    """Viewing directions at a constant angular interval.

    One frame at each pole (theta_c = 0) and ``360/interval`` frames on every
    intermediate latitude, ordered by latitude from south to north.
    """
    if not (interval_deg > 0 and interval_deg <= 180):
        raise InvalidInterval(f"interval must lie in (0, 180], got {interval_deg}")
    n_lat = 180.0 / interval_deg
    if abs(n_lat - round(n_lat)) > 1e-9:
        raise InvalidInterval(f"interval {interval_deg} does not divide 180 evenly")
    n_lat = round(n_lat)
    n_lon = round(360.0 / interval_deg)
    frames = []
    for i in range(n_lat + 1):
        phi_deg = -90.0 + i * interval_deg
        if i == 0 or i == n_lat:
            frames.append(view_frame(0.0, math.radians(phi_deg), fov))
            continue
        for j in range(n_lon):
            frames.append(view_frame(math.radians(j * interval_deg), math.radians(phi_deg), fov))
    return ViewGrid(float(interval_deg), tuple(frames))


def coverage_counts(grid, height, width):
    """Number of frames of ``grid`` covering each equirectangular pixel center."""
    d = pixel_directions(height, width)
    counts = np.zeros((height, width), dtype=np.int32)
    for frame in grid:
        ax = frame.axes
        along = d @ ax[2]
        lim = frame.tan_half * (1.0 + 1e-12)
        with np.errstate(divide="ignore", invalid="ignore"):
            u = (d @ ax[0]) / along
            v = (d @ ax[1]) / along
        counts += (along > 0) & (np.abs(u) <= lim) & (np.abs(v) <= lim)
    return counts
