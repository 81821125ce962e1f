import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mprnet.conv import conv2d
from mprnet.pconv import closure_index, mask_closure_oracle, partial_conv
from mprnet.tensor import Tensor
from mprnet.gradcheck import grad_check


def centered_hole(size, hole):
    m = np.ones((1, 1, size, size))
    lo = (size - hole) // 2
    m[..., lo:lo + hole, lo:lo + hole] = 0.0
    return m


def test_all_ones_mask_equals_conv2d():
    rng = np.random.default_rng(0)
    f, w, b = rng.normal(size=(1, 3, 7, 7)), rng.normal(size=(4, 3, 3, 3)), rng.normal(size=4)
    for stride, pad, dil in [(1, 1, 1), (2, 1, 1), (1, 2, 2)]:
        out, m2 = partial_conv(Tensor(f), np.ones((1, 1, 7, 7)), Tensor(w), Tensor(b), stride, pad, dil)
        ref = conv2d(Tensor(f), Tensor(w), Tensor(b), stride, pad, dil).data
        assert np.allclose(out.data, ref, rtol=1e-9, atol=1e-12)
        assert np.all(m2 == 1.0)


def test_empty_window_gives_zero_and_no_bias():
    f = np.ones((1, 1, 5, 5))
    m = np.ones((1, 1, 5, 5))
    m[..., :3, :3] = 0.0
    out, m2 = partial_conv(Tensor(f), m, Tensor(np.ones((1, 1, 3, 3))), Tensor(np.array([5.0])))
    # output (0,0) windows rows/cols 0..2, all holes
    assert out.data[0, 0, 0, 0] == 0.0 and m2[0, 0, 0, 0] == 0.0
    assert m2[0, 0, 1, 1] == 1.0


def test_three_valid_pixels_rescale():
    f = np.ones((1, 1, 3, 3))
    m = np.zeros((1, 1, 3, 3))
    m[0, 0, 0, :] = 1.0
    out, m2 = partial_conv(Tensor(f), m, Tensor(np.ones((1, 1, 3, 3))), None)
    assert out.data.item() == 9.0 and m2.item() == 1.0


def test_mask_errors():
    with pytest.raises(ValueError):
        partial_conv(Tensor(np.ones((1, 1, 4, 4))), np.ones((1, 1, 5, 5)), Tensor(np.ones((1, 1, 3, 3))))
    with pytest.raises(ValueError):
        partial_conv(Tensor(np.ones((1, 1, 4, 4))), np.full((1, 1, 4, 4), 0.5), Tensor(np.ones((1, 1, 3, 3))))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.95))
def test_mask_monotone_and_strictly_growing(seed, p):
    rng = np.random.default_rng(seed)
    m = (rng.uniform(size=(1, 1, 8, 8)) > p).astype(float)
    if not m.any() or m.all():
        return
    _, m2 = partial_conv(Tensor(np.ones((1, 1, 8, 8))), m, Tensor(np.ones((1, 1, 3, 3))), None, padding=1)
    assert np.all(m2 >= m)
    assert m2.sum() > m.sum()


def test_new_mask_is_exactly_binary():
    m = (np.random.default_rng(1).uniform(size=(1, 1, 6, 6)) > 0.6).astype(float)
    _, m2 = partial_conv(Tensor(np.ones((1, 2, 6, 6))), m, Tensor(np.ones((1, 2, 3, 3))), None, padding=1)
    assert set(np.unique(m2)) <= {0.0, 1.0}


def test_oracle_examples():
    assert mask_closure_oracle(np.ones((1, 1, 5, 5)), 3, 1, 1) == 0
    single = np.zeros((1, 1, 5, 5))
    single[..., 2, 2] = 1.0
    assert mask_closure_oracle(single, kernel=3, stride=1, layers_per_recurrence=1) == 2
    assert mask_closure_oracle(centered_hole(64, 16), 3, 1, 2) == 4
    with pytest.raises(ValueError):
        mask_closure_oracle(np.zeros((1, 1, 4, 4)), 3, 1, 1)


def test_oracle_dilation_and_unreachable():
    assert mask_closure_oracle(centered_hole(64, 16), 3, 1, 2, dilation=2) == 2
    corner = np.zeros((1, 1, 9, 9))
    corner[..., 0, 0] = 1.0
    # dilation 2 only ever reaches even coordinates
    assert mask_closure_oracle(corner, 3, 1, 2, dilation=2, max_recurrences=20) is None


def test_oracle_agrees_with_partial_conv():
    rng = np.random.default_rng(3)
    for _ in range(5):
        m = (rng.uniform(size=(1, 1, 12, 12)) > 0.8).astype(float)
        m[0, 0, 0, 0] = 1.0
        cur, steps = m, 0
        w = Tensor(np.ones((1, 1, 3, 3)))
        while not cur.all():
            for _ in range(2):
                _, cur = partial_conv(Tensor(np.ones((1, 1, 12, 12))), cur, w, None, padding=1)
            steps += 1
        assert steps == mask_closure_oracle(m, 3, 1, 2)


def test_closure_index_schedule():
    m = centered_hole(64, 16)
    sched = [(3, 1, 2, 2)] * 4 + [(3, 1, 1, 2)] * 4
    assert closure_index(m, sched) == 2
    assert closure_index(centered_hole(64, 24), [(3, 1, 1, 2)] * 4) is None
    assert closure_index(np.ones((1, 1, 4, 4)), sched) == 0


def test_partial_conv_gradients():
    m = centered_hole(6, 2)

    def fn(f, w):
        return partial_conv(f, m, w, None, 1, 1)[0]

    assert grad_check(fn, [(1, 2, 6, 6), (2, 2, 3, 3)]).passed
