import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from omnisal.backend import (CenterBiasLayer, ConstantBackend, FileBackend, PlanarView,
                             SpectralResidualBackend, make_backend, predict, read_view_manifest,
                             write_view_manifest)
from omnisal.dataset import save_map
from omnisal.errors import ParseError, ShapeMismatch, UnsupportedMode, ValidationError
from omnisal.geometry import view_frame
from omnisal.raster import normalize_sum

FRAME = view_frame(math.radians(45), math.radians(-45), math.radians(100))


def view(image, frame=FRAME, source_id="img"):
    return PlanarView(frame, np.asarray(image, dtype=np.float64), source_id)


def test_planar_view_validation():
    with pytest.raises(ShapeMismatch):
        view(np.ones((32, 33)))
    with pytest.raises(ShapeMismatch):
        view(np.ones((31, 31)))


def test_constant_backend(rng):
    out = predict(ConstantBackend(), view(rng.random((40, 40, 3))))
    np.testing.assert_array_equal(out, np.ones((40, 40)))


def test_center_bias_identity_and_product(rng):
    v = view(rng.random((48, 48)))
    sr = SpectralResidualBackend(32, center_bias=CenterBiasLayer(np.ones((48, 48))))
    np.testing.assert_array_equal(sr.predict(v, True), sr.predict(v, False))
    w = rng.random((48, 48))
    sr = SpectralResidualBackend(32, center_bias=CenterBiasLayer(w))
    np.testing.assert_allclose(sr.predict(v, True), w * sr.predict(v, False), rtol=1e-15)


def test_center_bias_rejects_negative_weights():
    with pytest.raises(ValidationError):
        CenterBiasLayer(-np.ones((4, 4)))


def test_unsupported_mode(rng):
    with pytest.raises(UnsupportedMode):
        predict(ConstantBackend(), view(rng.random((32, 32))), apply_center_bias=True)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (40, 40), elements=st.floats(0, 1)))
def test_spectral_nonnegative_and_deterministic(img):
    be = SpectralResidualBackend(32)
    a = be.predict(view(img))
    b = be.predict(view(img.copy()))
    assert a.shape == (40, 40) and np.all(a >= 0) and np.all(np.isfinite(a))
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("k", [1e-3, 0.5, 7.0, 1e4])
def test_spectral_scale_invariant(rng, k):
    img = rng.random((64, 64, 3))
    be = SpectralResidualBackend(32)
    a = normalize_sum(be.predict(view(img)))
    b = normalize_sum(be.predict(view(k * img)))
    np.testing.assert_allclose(b, a, rtol=1e-6, atol=1e-12)


def test_spectral_flat_view_is_zero():
    out = SpectralResidualBackend(32).predict(view(np.full((40, 40), 0.3)))
    np.testing.assert_allclose(out, 0.0, atol=1e-12)


def test_spectral_highlights_blob():
    yy, xx = np.mgrid[0:64, 0:64]
    img = 0.2 + np.exp(-((xx - 20) ** 2 + (yy - 40) ** 2) / 20.0)
    out = SpectralResidualBackend(64).predict(view(img))
    r, c = np.unravel_index(np.argmax(out), out.shape)
    assert abs(r - 40) <= 4 and abs(c - 20) <= 4


def test_file_backend_passthrough(tmp_path, rng):
    stored = rng.random((40, 40)).astype(np.float32).astype(np.float64)
    save_map(tmp_path / "a.f32", stored)
    write_view_manifest(tmp_path / "views.txt", [("img", 45.0, -45.0, "a.f32")])
    be = FileBackend(tmp_path / "views.txt")
    np.testing.assert_array_equal(be.predict(view(np.zeros((40, 40)))), stored)
    # size mismatch triggers resampling
    assert be.predict(view(np.zeros((32, 32)))).shape == (32, 32)
    with pytest.raises(ValidationError):
        be.predict(view(np.zeros((40, 40)), source_id="other"))


def test_file_backend_matches_angles_mod_360(tmp_path, rng):
    save_map(tmp_path / "a.f32", np.ones((32, 32)))
    write_view_manifest(tmp_path / "views.txt", [("img", 405.0, -45.0, "a.f32")])
    be = make_backend(f"file:{tmp_path / 'views.txt'}")
    assert be.predict(view(np.zeros((32, 32)))).sum() == 32 * 32


@pytest.mark.parametrize("text,line", [
    ("img 0 0\n", 1),
    ("img 0 0 a.f32\nimg zero 0 b.f32\n", 2),
    ("img 0 95 a.f32\n", 1),
    ("img 0 0 a.f32\n# note\nimg 360 0 b.f32\n", 3),
])
def test_view_manifest_errors(tmp_path, text, line):
    p = tmp_path / "v.txt"
    p.write_text(text)
    with pytest.raises(ParseError) as err:
        read_view_manifest(p)
    assert err.value.line == line


def test_view_manifest_parse(tmp_path):
    p = tmp_path / "v.txt"
    p.write_text("# comment\nimg 0 0 maps/a.f32\n\nimg 22.5 -45 maps/b.f32  # trailing\n")
    entries = read_view_manifest(p)
    assert entries[("img", 22.5, -45.0)] == tmp_path / "maps" / "b.f32"
    assert len(entries) == 2


def test_make_backend():
    assert isinstance(make_backend("constant"), ConstantBackend)
    assert make_backend("spectral:48").work_side == 48
    with pytest.raises(ValidationError):
        make_backend("densesal")
