import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gdprior.imagecore import (DimensionError, GradientField, ImageFormatError, add_gaussian_noise,
                               as_image, convolve, divergence, gaussian_kernel, gradient, laplacian,
                               load_image, resample, save_image)


def dense_gradient_matrices(h, w):
    """Forward-difference operators as explicit matrices (masked rows are zero)."""
    n = h * w
    Dx = np.zeros((n, n))
    Dy = np.zeros((n, n))
    idx = np.arange(n).reshape(h, w)
    for r in range(h):
        for c in range(w):
            if c < w - 1:
                Dx[idx[r, c], idx[r, c + 1]] = 1
                Dx[idx[r, c], idx[r, c]] = -1
            if r < h - 1:
                Dy[idx[r, c], idx[r + 1, c]] = 1
                Dy[idx[r, c], idx[r, c]] = -1
    return Dx, Dy


def test_gradient_constant_is_zero():
    g = gradient(np.full((5, 7), 0.3))
    assert not g.gx.any() and not g.gy.any()


def test_gradient_ramp():
    img = np.tile(np.arange(4) / 3.0, (4, 1))
    g = gradient(img)
    np.testing.assert_allclose(g.gx[g.valid_x], 1 / 3)
    assert not g.gy.any()


def test_gradient_2x2_by_hand():
    g = gradient(np.array([[0, 1], [2, 3]]) / 3.0)
    assert g.gx[0, 0] == pytest.approx(1 / 3)
    assert g.gy[0, 0] == pytest.approx(2 / 3)
    assert not g.valid_x[:, -1].any() and not g.valid_y[-1, :].any()
    assert g.valid_mask.sum() == 1


def test_gradient_rejects_degenerate():
    with pytest.raises(DimensionError):
        gradient(np.zeros((1, 5)))


def test_divergence_zero_field():
    g = GradientField.from_components(np.zeros((4, 4)), np.zeros((4, 4)))
    assert not divergence(g).any()


def test_divergence_of_ramp_gradient_vanishes_inside():
    img = np.tile(np.linspace(0, 1, 6), (6, 1))
    lap = laplacian(img)
    np.testing.assert_allclose(lap[:, 1:-1], 0, atol=1e-14)


def test_divergence_matches_dense_transpose():
    rng = np.random.default_rng(0)
    h = w = 8
    Dx, Dy = dense_gradient_matrices(h, w)
    gx, gy = rng.normal(size=(h, w)), rng.normal(size=(h, w))
    g = GradientField.from_components(gx, gy)
    oracle = -(Dx.T @ g.gx.ravel() + Dy.T @ g.gy.ravel())
    np.testing.assert_allclose(divergence(g).ravel(), oracle, atol=1e-12)


def test_gradient_matches_dense_operator():
    rng = np.random.default_rng(1)
    img = rng.random((6, 9))
    Dx, Dy = dense_gradient_matrices(6, 9)
    g = gradient(img)
    np.testing.assert_allclose(g.gx.ravel(), Dx @ img.ravel(), atol=1e-14)
    np.testing.assert_allclose(g.gy.ravel(), Dy @ img.ravel(), atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(2, 12), st.integers(0, 2**31 - 1))
def test_adjoint_identity(h, w, seed):
    rng = np.random.default_rng(seed)
    img = rng.normal(size=(h, w))
    g = GradientField.from_components(rng.normal(size=(h, w)), rng.normal(size=(h, w)))
    gi = gradient(img)
    lhs = (gi.gx * g.gx).sum() + (gi.gy * g.gy).sum()
    rhs = -(img * divergence(g)).sum()
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_convolve_identity_and_box():
    rng = np.random.default_rng(2)
    img = rng.random((9, 9))
    ident = np.zeros((3, 3))
    ident[1, 1] = 1
    for mode in ("interior", "zero-pad"):
        np.testing.assert_allclose(convolve(img, ident, mode), img, atol=1e-12)
    box = np.full((3, 3), 1 / 9)
    np.testing.assert_allclose(convolve(np.full((7, 7), 0.4), box), 0.4, atol=1e-12)
    imp = np.zeros((7, 7))
    imp[3, 3] = 1
    out = convolve(imp, box, "zero-pad")
    np.testing.assert_allclose(out[2:5, 2:5], 1 / 9, atol=1e-12)
    assert abs(out).sum() == pytest.approx(1.0)


def test_convolve_interior_keeps_margin():
    rng = np.random.default_rng(3)
    img = rng.random((10, 10))
    out = convolve(img, np.full((5, 5), 1 / 25))
    np.testing.assert_array_equal(out[:2], img[:2])
    np.testing.assert_array_equal(out[:, -2:], img[:, -2:])


def test_convolve_kernel_too_large():
    with pytest.raises(DimensionError):
        convolve(np.zeros((3, 3)), np.ones((5, 5)))


def test_gaussian_kernel():
    assert gaussian_kernel(1e-3, 2)[2, 2] > 0.999
    k = gaussian_kernel(1.0, 3)
    x = np.arange(-3, 4)
    direct = np.exp(-(x[:, None] ** 2 + x[None, :] ** 2) / 2.0)
    assert k[3, 3] == pytest.approx(1.0 / direct.sum(), rel=1e-12)
    k = gaussian_kernel(1.7, 4)
    np.testing.assert_allclose(k, np.rot90(k), atol=1e-15)
    assert k.sum() == pytest.approx(1.0)


def test_add_noise():
    img = np.full((1000, 1000), 0.5)
    assert np.array_equal(add_gaussian_noise(img, 0.0, 1), img)
    n = add_gaussian_noise(img, 0.1, 7)
    assert 0.0995 <= n.std() <= 0.1005
    assert np.array_equal(n, add_gaussian_noise(img, 0.1, 7))
    assert n.max() > 0.5 + 4 * 0.1  # not clamped


def test_resample():
    rng = np.random.default_rng(4)
    img = rng.random((6, 5))
    np.testing.assert_array_equal(resample(img, 1), img)
    cb = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(resample(cb, 2, "nearest"), np.kron(cb, np.ones((2, 2))))
    yy, xx = np.mgrid[0:64, 0:64] / 63.0
    smooth = 0.5 + 0.3 * np.sin(2 * xx) * np.cos(3 * yy)
    for f in (2, 0.5, 1.5):
        assert resample(smooth, f).mean() == pytest.approx(smooth.mean(), abs=1e-3)
    with pytest.raises(DimensionError):
        resample(np.zeros((4, 4)), 0.25)


def test_as_image_validation():
    with pytest.raises(DimensionError):
        as_image(np.zeros((2, 2, 3)))
    with pytest.raises(ValueError):
        as_image(np.array([[np.nan, 0.0]]))


@pytest.mark.parametrize("suffix", [".png", ".pgm"])
def test_io_roundtrip(tmp_path, suffix):
    rng = np.random.default_rng(5)
    img = np.round(rng.random((7, 11)) * 255) / 255
    p = tmp_path / f"a{suffix}"
    save_image(p, img)
    np.testing.assert_allclose(load_image(p), img, atol=1e-12)


def test_save_clamps(tmp_path):
    p = tmp_path / "c.png"
    save_image(p, np.array([[-0.5, 1.5], [0.5, 0.25]]))
    out = load_image(p)
    assert out[0, 0] == 0.0 and out[0, 1] == 1.0
    assert out[1, 0] == pytest.approx(128 / 255)


def test_load_color_uses_luma(tmp_path):
    from PIL import Image

    rgb = np.zeros((2, 2, 3), dtype=np.uint8)
    rgb[..., 0] = 255
    Image.fromarray(rgb, "RGB").save(tmp_path / "r.png")
    assert load_image(tmp_path / "r.png")[0, 0] == pytest.approx(0.299)


def test_load_bad_file(tmp_path):
    p = tmp_path / "x.png"
    p.write_bytes(b"not an image")
    with pytest.raises(OSError):
        load_image(p)


def test_load_unsupported_mode(tmp_path):
    from PIL import Image

    Image.fromarray(np.zeros((3, 3), dtype=np.uint16)).save(tmp_path / "i.png")
    with pytest.raises(ImageFormatError):
        load_image(tmp_path / "i.png")


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 8), st.integers(2, 8)),
              elements=st.floats(-2, 2)))
def test_gradient_then_divergence_sums_to_zero(img):
    # Neumann Laplacian conserves total mass
    assert laplacian(img).sum() == pytest.approx(0.0, abs=1e-9)
