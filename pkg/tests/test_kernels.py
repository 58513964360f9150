"""The compiled kernels and the numpy fallback must agree."""
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from omnisal import _core
from omnisal.geometry import view_grid

compiled = pytest.mark.skipif(_core.compiled_kernels is None, reason="extension not built")
py = _core.python_kernels
FOV = math.radians(100)


@compiled
@pytest.mark.parametrize("wrap", [True, False])
def test_bilinear_agrees(rng, wrap):
    img = rng.random((13, 26))
    xs = rng.uniform(-40, 60, 500)
    ys = rng.uniform(-3, 16, 500)
    np.testing.assert_allclose(_core.compiled_kernels.bilinear_sample(img, xs, ys, wrap),
                               py.bilinear_sample(img, xs, ys, wrap), rtol=0, atol=1e-13)


@compiled
def test_extract_agrees(rng):
    img = rng.random((40, 80))
    for frame in view_grid(45, FOV):
        a = _core.compiled_kernels.extract_view(img, frame.axes, frame.tan_half, 33)
        b = py.extract_view(img, frame.axes, frame.tan_half, 33)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


@compiled
@pytest.mark.parametrize("nearest", [False, True])
def test_integrate_agrees(rng, nearest):
    grid = view_grid(45, FOV)
    views = rng.random((len(grid), 32, 32))
    axes = np.stack([f.axes for f in grid])
    tan_half = np.array([f.tan_half for f in grid])
    acc_c, cnt_c = _core.compiled_kernels.integrate_views(views, axes, tan_half, 30, 60, nearest)
    acc_p, cnt_p = py.integrate_views(views, axes, tan_half, 30, 60, nearest)
    np.testing.assert_array_equal(cnt_c, cnt_p)
    np.testing.assert_allclose(acc_c, acc_p, rtol=0, atol=1e-12)


def test_read_only_inputs_accepted(rng):
    img = rng.random((8, 16))
    img.flags.writeable = False
    xs = np.broadcast_to(np.array([1.5]), (4,))
    out = _core.bilinear_sample(img, xs, np.zeros(4), True)
    assert out.shape == (4,)


def test_env_forces_fallback():
    env = dict(os.environ, OMNISAL_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import omnisal._core as c; print(c.IMPLEMENTATION)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
