"""Pure numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` operation for operation so that both paths agree
to rounding error. Arrays are float64, C-contiguous.
"""
import numpy as np

# relative slack on the frustum test so boundary directions count as covered
COVER_TOL = 1e-12


def bilinear_sample(img, xs, ys, wrap):
    """Sample ``img`` at continuous (x=column, y=row) positions."""
    img = np.ascontiguousarray(img, dtype=np.float64)
    h, w = img.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    ys = np.clip(ys, 0.0, h - 1)
    y0 = np.floor(ys).astype(np.intp)
    fy = ys - y0
    y1 = np.minimum(y0 + 1, h - 1)
    if wrap:
        xs = np.mod(xs, w)
        x0 = np.floor(xs).astype(np.intp)
        # mod can round up to exactly w for tiny negative inputs
        x0 = np.where(x0 >= w, x0 - w, x0)
        fx = xs - np.floor(xs)
        x1 = x0 + 1
        x1 = np.where(x1 >= w, 0, x1)
    else:
        xs = np.clip(xs, 0.0, w - 1)
        x0 = np.floor(xs).astype(np.intp)
        fx = xs - x0
        x1 = np.minimum(x0 + 1, w - 1)
    top = (1.0 - fx) * img[y0, x0] + fx * img[y0, x1]
    bot = (1.0 - fx) * img[y1, x0] + fx * img[y1, x1]
    return (1.0 - fy) * top + fy * bot


def view_plane_coords(side, tan_half):
    """Gnomonic plane coordinate of each pixel center along one axis."""
    idx = np.arange(side, dtype=np.float64)
    return (2.0 * (idx + 0.5) / side - 1.0) * tan_half


def extract_view(img, axes, tan_half, side):
    """Gnomonic view of an equirectangular ``img`` (horizontal wrap)."""
    h, w = img.shape
    x_ax, y_ax, z_ax = axes[0], axes[1], axes[2]
    u = view_plane_coords(side, tan_half)[None, :]
    v = view_plane_coords(side, tan_half)[:, None]
    dx = z_ax[0] + u * x_ax[0] + v * y_ax[0]
    dy = z_ax[1] + u * x_ax[1] + v * y_ax[1]
    dz = z_ax[2] + u * x_ax[2] + v * y_ax[2]
    norm = np.sqrt(dx * dx + dy * dy + dz * dz)
    dx = dx / norm
    dy = dy / norm
    dz = dz / norm
    theta = np.arctan2(dy, -dx)
    phi = -np.arcsin(np.clip(dz, -1.0, 1.0))
    cols = (theta + np.pi) / (2.0 * np.pi) * w - 0.5
    rows = (np.pi / 2.0 - phi) / np.pi * h - 0.5
    return bilinear_sample(img, cols, rows, True)


def _pixel_directions(height, width):
    cols = np.arange(width, dtype=np.float64)
    rows = np.arange(height, dtype=np.float64)
    theta = (cols + 0.5) / width * (2.0 * np.pi) - np.pi
    phi = np.pi / 2.0 - (rows + 0.5) / height * np.pi
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    dx = -(cp[:, None] * ct[None, :])
    dy = cp[:, None] * st[None, :]
    dz = np.broadcast_to(-sp[:, None], (height, width))
    return dx, dy, dz


def project_pixels(axes, tan_half, side, height, width):
    """Project every equirectangular pixel into one view.

    Returns (covered mask, view column, view row) in continuous pixel units.
    """
    dx, dy, dz = _pixel_directions(height, width)
    x_ax, y_ax, z_ax = axes[0], axes[1], axes[2]
    along = dx * z_ax[0] + dy * z_ax[1] + dz * z_ax[2]
    front = along > 0.0
    safe = np.where(front, along, 1.0)
    u = (dx * x_ax[0] + dy * x_ax[1] + dz * x_ax[2]) / safe
    v = (dx * y_ax[0] + dy * y_ax[1] + dz * y_ax[2]) / safe
    lim = tan_half * (1.0 + COVER_TOL)
    covered = front & (np.abs(u) <= lim) & (np.abs(v) <= lim)
    px = (u / tan_half + 1.0) * side / 2.0 - 0.5
    py = (v / tan_half + 1.0) * side / 2.0 - 0.5
    return covered, px, py


def integrate_views(views, axes, tan_half, height, width, nearest):
    """Accumulate per-view rasters onto the equirectangular grid.

    Returns (sum of sampled values, covering-view count) per pixel.
    """
    n_views, side, _ = views.shape
    acc = np.zeros((height, width), dtype=np.float64)
    count = np.zeros((height, width), dtype=np.int32)
    for k in range(n_views):
        covered, px, py = project_pixels(axes[k], tan_half[k], side, height, width)
        if not covered.any():
            continue
        px = px[covered]
        py = py[covered]
        if nearest:
            ix = np.clip(np.floor(px + 0.5), 0, side - 1).astype(np.intp)
            iy = np.clip(np.floor(py + 0.5), 0, side - 1).astype(np.intp)
            vals = views[k][iy, ix]
        else:
            vals = bilinear_sample(views[k], px, py, False)
        acc[covered] += vals
        count[covered] += 1
    return acc, count
