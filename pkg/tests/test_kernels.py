import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mprnet import kernels
from mprnet.conv import conv2d, conv_out_size, conv_transpose2d
from mprnet.tensor import Tensor


def direct_conv(x, w, b, stride, pad, dil):
    n, c, h, wd = x.shape
    co, _, k, _ = w.shape
    oh, ow = conv_out_size(h, k, stride, pad, dil), conv_out_size(wd, k, stride, pad, dil)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((n, co, oh, ow))
    for i in range(oh):
        for j in range(ow):
            for u in range(k):
                for v in range(k):
                    patch = xp[:, :, i * stride + u * dil, j * stride + v * dil]
                    out[:, :, i, j] += patch @ w[:, :, u, v].T
    return out + (0 if b is None else b[None, :, None, None])


geom = st.tuples(st.integers(1, 2), st.integers(1, 3), st.integers(3, 8), st.integers(3, 8),
                 st.sampled_from([1, 3]), st.integers(1, 2), st.integers(0, 2), st.integers(1, 2))


@settings(max_examples=40, deadline=None)
@given(geom)
def test_backends_agree(g):
    n, c, h, w, k, stride, pad, dil = g
    if conv_out_size(h, k, stride, pad, dil) < 1 or conv_out_size(w, k, stride, pad, dil) < 1:
        return
    x = np.random.default_rng(0).normal(size=(n, c, h, w))
    ref = kernels.im2col(x, k, k, stride, pad, dil, backend="numpy")
    back = kernels.col2im(ref, c, h, w, k, k, stride, pad, dil, backend="numpy")
    for be in kernels.available_backends():
        assert np.array_equal(kernels.im2col(x, k, k, stride, pad, dil, backend=be), ref)
        assert np.allclose(kernels.col2im(ref, c, h, w, k, k, stride, pad, dil, backend=be), back, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(geom)
def test_col2im_is_adjoint_of_im2col(g):
    n, c, h, w, k, stride, pad, dil = g
    if conv_out_size(h, k, stride, pad, dil) < 1 or conv_out_size(w, k, stride, pad, dil) < 1:
        return
    rng = np.random.default_rng(1)
    x = rng.normal(size=(n, c, h, w))
    cols = kernels.im2col(x, k, k, stride, pad, dil)
    y = rng.normal(size=cols.shape)
    lhs = np.sum(cols * y)
    rhs = np.sum(x * kernels.col2im(y, c, h, w, k, k, stride, pad, dil))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_float32_kernels_keep_dtype():
    x = np.ones((1, 2, 5, 5), dtype=np.float32)
    for be in kernels.available_backends():
        assert kernels.im2col(x, 3, 3, 1, 1, 1, backend=be).dtype == np.float32


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.im2col(np.ones((1, 1, 3, 3)), 1, 1, backend="fortran")


@pytest.mark.parametrize("stride,pad,dil", [(1, 0, 1), (1, 1, 1), (2, 1, 1), (1, 2, 2), (2, 3, 3)])
def test_conv2d_matches_direct_loops(stride, pad, dil):
    rng = np.random.default_rng(2)
    x, w, b = rng.normal(size=(2, 3, 9, 8)), rng.normal(size=(4, 3, 3, 3)), rng.normal(size=4)
    out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride, pad, dil).data
    assert np.allclose(out, direct_conv(x, w, b, stride, pad, dil))


def test_conv2d_examples():
    x = np.random.default_rng(3).normal(size=(1, 2, 4, 4))
    eye = np.zeros((2, 2, 1, 1))
    eye[0, 0] = eye[1, 1] = 1.0
    assert np.array_equal(conv2d(Tensor(x), Tensor(eye)).data, x)
    assert conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3)))).data.item() == 9.0
    out = conv2d(Tensor(np.zeros((1, 1, 4, 4))), Tensor(np.ones((2, 1, 3, 3))), Tensor(np.array([0.5, -1.0])), padding=1)
    assert np.all(out.data[0, 0] == 0.5) and np.all(out.data[0, 1] == -1.0)


def test_conv2d_dimension_errors():
    with pytest.raises(ValueError, match="channels"):
        conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))
    with pytest.raises(ValueError):
        conv2d(Tensor(np.ones((1, 1, 2, 2))), Tensor(np.ones((1, 1, 3, 3))))
    with pytest.raises(ValueError):
        conv2d(Tensor(np.ones((1, 1, 4, 4))), Tensor(np.ones((1, 1, 3, 3))), stride=0)


def test_transposed_conv_examples():
    x = np.random.default_rng(4).normal(size=(1, 1, 3, 5))
    assert np.array_equal(conv_transpose2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1)))).data, x)
    up = conv_transpose2d(Tensor(x), Tensor(np.ones((1, 2, 2, 2))), stride=2)
    assert up.shape == (1, 2, 6, 10)
    down = conv2d(up, Tensor(np.ones((1, 2, 2, 2))), stride=2)
    assert down.shape[2:] == (3, 5)


def test_transposed_conv_is_adjoint_of_conv():
    rng = np.random.default_rng(5)
    w = rng.normal(size=(3, 2, 4, 4))  # conv: 2 -> 3 channels; transpose: 3 -> 2
    x = rng.normal(size=(1, 2, 8, 8))
    y = rng.normal(size=(1, 3, 4, 4))
    lhs = np.sum(conv2d(Tensor(x), Tensor(w), None, 2, 1).data * y)
    rhs = np.sum(x * conv_transpose2d(Tensor(y), Tensor(w), None, 2, 1).data)
    assert lhs == pytest.approx(rhs, rel=1e-10)
