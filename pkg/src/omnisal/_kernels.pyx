# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for view extraction and multi-view integration.

Same arithmetic as ``_kernels_py``; see that module for the reference.
"""
import numpy as np

from libc.math cimport atan2, asin, sin, cos, sqrt, floor, fmod, fabs, M_PI

cdef double COVER_TOL = 1e-12


cdef inline double _sample(const double[:, ::1] img, double x, double y, bint wrap) nogil:
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    cdef Py_ssize_t x0, x1, y0, y1
    cdef double fx, fy, top, bot, fl
    if y < 0.0:
        y = 0.0
    elif y > h - 1:
        y = h - 1
    y0 = <Py_ssize_t>floor(y)
    fy = y - y0
    y1 = y0 + 1
    if y1 > h - 1:
        y1 = h - 1
    if wrap:
        x = fmod(x, <double>w)
        if x != 0.0 and x < 0.0:
            x = x + w
        fl = floor(x)
        x0 = <Py_ssize_t>fl
        if x0 >= w:
            x0 = x0 - w
        fx = x - fl
        x1 = x0 + 1
        if x1 >= w:
            x1 = 0
    else:
        if x < 0.0:
            x = 0.0
        elif x > w - 1:
            x = w - 1
        x0 = <Py_ssize_t>floor(x)
        fx = x - x0
        x1 = x0 + 1
        if x1 > w - 1:
            x1 = w - 1
    top = (1.0 - fx) * img[y0, x0] + fx * img[y0, x1]
    bot = (1.0 - fx) * img[y1, x0] + fx * img[y1, x1]
    return (1.0 - fy) * top + fy * bot


def bilinear_sample(img, xs, ys, bint wrap):
    cdef const double[:, ::1] im = np.ascontiguousarray(img, dtype=np.float64)
    xa = np.asarray(xs, dtype=np.float64)
    ya = np.asarray(ys, dtype=np.float64)
    shape = np.broadcast_shapes(xa.shape, ya.shape)
    cdef const double[::1] xf = np.ascontiguousarray(np.broadcast_to(xa, shape)).ravel()
    cdef const double[::1] yf = np.ascontiguousarray(np.broadcast_to(ya, shape)).ravel()
    out = np.empty(xf.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(xf.shape[0]):
            o[i] = _sample(im, xf[i], yf[i], wrap)
    return out.reshape(shape)


def extract_view(img, axes, double tan_half, int side):
    cdef const double[:, ::1] im = np.ascontiguousarray(img, dtype=np.float64)
    cdef const double[:, ::1] ax = np.ascontiguousarray(axes, dtype=np.float64)
    cdef Py_ssize_t h = im.shape[0]
    cdef Py_ssize_t w = im.shape[1]
    out = np.empty((side, side), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double u, v, dx, dy, dz, norm, theta, phi, col, row
    with nogil:
        for j in range(side):
            v = (2.0 * (j + 0.5) / side - 1.0) * tan_half
            for i in range(side):
                u = (2.0 * (i + 0.5) / side - 1.0) * tan_half
                dx = ax[2, 0] + u * ax[0, 0] + v * ax[1, 0]
                dy = ax[2, 1] + u * ax[0, 1] + v * ax[1, 1]
                dz = ax[2, 2] + u * ax[0, 2] + v * ax[1, 2]
                norm = sqrt(dx * dx + dy * dy + dz * dz)
                dx = dx / norm
                dy = dy / norm
                dz = dz / norm
                theta = atan2(dy, -dx)
                if dz > 1.0:
                    dz = 1.0
                elif dz < -1.0:
                    dz = -1.0
                phi = -asin(dz)
                col = (theta + M_PI) / (2.0 * M_PI) * w - 0.5
                row = (M_PI / 2.0 - phi) / M_PI * h - 0.5
                o[j, i] = _sample(im, col, row, True)
    return out


def integrate_views(views, axes, tan_half, int height, int width, bint nearest):
    cdef const double[:, :, ::1] vw = np.ascontiguousarray(views, dtype=np.float64)
    cdef const double[:, :, ::1] ax = np.ascontiguousarray(axes, dtype=np.float64)
    cdef const double[::1] th = np.ascontiguousarray(tan_half, dtype=np.float64)
    cdef Py_ssize_t n_views = vw.shape[0]
    cdef Py_ssize_t side = vw.shape[1]
    acc_arr = np.zeros((height, width), dtype=np.float64)
    count_arr = np.zeros((height, width), dtype=np.int32)
    cdef double[:, ::1] acc = acc_arr
    cdef int[:, ::1] count = count_arr
    ct_arr = np.empty(width)
    st_arr = np.empty(width)
    cdef double[::1] ct = ct_arr
    cdef double[::1] st = st_arr
    cdef Py_ssize_t r, c, k, ix, iy
    cdef double theta, phi, cp, sp, dx, dy, dz, along, u, v, t, lim, px, py, val
    for c in range(width):
        theta = (c + 0.5) / width * (2.0 * M_PI) - M_PI
        ct[c] = cos(theta)
        st[c] = sin(theta)
    with nogil:
        for r in range(height):
            phi = M_PI / 2.0 - (r + 0.5) / height * M_PI
            cp = cos(phi)
            sp = sin(phi)
            for c in range(width):
                dx = -(cp * ct[c])
                dy = cp * st[c]
                dz = -sp
                for k in range(n_views):
                    along = dx * ax[k, 2, 0] + dy * ax[k, 2, 1] + dz * ax[k, 2, 2]
                    if along <= 0.0:
                        continue
                    u = (dx * ax[k, 0, 0] + dy * ax[k, 0, 1] + dz * ax[k, 0, 2]) / along
                    v = (dx * ax[k, 1, 0] + dy * ax[k, 1, 1] + dz * ax[k, 1, 2]) / along
                    t = th[k]
                    lim = t * (1.0 + COVER_TOL)
                    if fabs(u) > lim or fabs(v) > lim:
                        continue
                    px = (u / t + 1.0) * side / 2.0 - 0.5
                    py = (v / t + 1.0) * side / 2.0 - 0.5
                    if nearest:
                        ix = <Py_ssize_t>floor(px + 0.5)
                        iy = <Py_ssize_t>floor(py + 0.5)
                        if ix < 0:
                            ix = 0
                        elif ix > side - 1:
                            ix = side - 1
                        if iy < 0:
                            iy = 0
                        elif iy > side - 1:
                            iy = side - 1
                        val = vw[k, iy, ix]
                    else:
                        val = _sample(vw[k], px, py, False)
                    acc[r, c] += val
                    count[r, c] += 1
    return acc_arr, count_arr
