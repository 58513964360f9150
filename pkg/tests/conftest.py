import math

import numpy as np
import pytest

ACCEPTANCE_LINES = []


def record(criterion, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def smooth_field(height, width, fn):
    """Rasterize fn(theta, phi) at equirectangular pixel centers."""
    theta = (np.arange(width) + 0.5) / width * 2 * np.pi - np.pi
    phi = np.pi / 2 - (np.arange(height) + 0.5) / height * np.pi
    return fn(theta[None, :], phi[:, None]) * np.ones((height, width))


def dense_blur_oracle(img, sigma, h_mode, v_mode):
    """Direct 2D summation of the truncated, renormalized Gaussian."""
    radius = max(1, math.ceil(3 * sigma))
    offs = np.arange(-radius, radius + 1)
    k = np.exp(-offs ** 2 / (2 * sigma ** 2))
    k /= k.sum()
    h, w = img.shape

    def idx(i, n, mode):
        if mode == "wrap":
            return i % n
        if mode == "clamp":
            return min(max(i, 0), n - 1)
        # half-sample symmetric reflection
        period = 2 * n
        i %= period
        return i if i < n else period - 1 - i

    out = np.zeros_like(img)
    for r in range(h):
        for c in range(w):
            acc = 0.0
            for a, ka in zip(offs, k):
                rr = idx(r + a, h, v_mode)
                for b, kb in zip(offs, k):
                    acc += ka * kb * img[rr, idx(c + b, w, h_mode)]
            out[r, c] = acc
    return out
